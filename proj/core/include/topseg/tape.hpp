#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "topseg/tensor.hpp"

namespace topseg::numkit {

using GradMap = std::map<std::string, Tensor>;

// Reverse-mode tape. Every kernel records one node; backward() runs a
// single reverse sweep from a scalar loss and returns gradients for all
// named leaves (zeros for leaves the loss never touched).
//
// A tape is single-threaded; distinct tapes are independent.
class Tape {
 public:
  using Id = std::int32_t;

  // Differentiable named leaf (a model parameter).
  Id param(std::string name, Tensor value);
  // Non-differentiable leaf (data, masks, constants).
  Id input(Tensor value);

  Id matmul(Id a, Id b);
  Id add(Id a, Id b);           // same shape
  Id add_rowvec(Id a, Id row);  // n x d  +  1 x d
  Id sub(Id a, Id b);
  Id mul(Id a, Id b);  // elementwise
  Id scale(Id a, double c);
  Id concat_rows(Id top, Id bottom);
  Id concat_cols(Id left, Id right);
  Id stack_rows(std::span<const Id> rows);  // k inputs of 1 x d
  Id slice_rows(Id a, std::size_t r0, std::size_t r1);
  Id slice_cols(Id a, std::size_t c0, std::size_t c1);
  Id transpose(Id a);
  // Row-stochastic softmax; the normalizer is accumulated in value-sorted
  // order so attention over a permuted frame set is bit-identical.
  Id softmax_rows(Id a);
  // weights (1 x m) * values (m x d) with value-sorted accumulation per
  // output column; the attention combine step.
  Id weighted_rows_sum(Id weights, Id values);
  Id sigmoid(Id a);
  Id tanh(Id a);
  Id exp(Id a);
  Id mean_rows(Id a);   // n x d -> 1 x d
  Id row_sums(Id a);    // n x d -> n x 1
  Id sum_all(Id a);     // n x d -> 1 x 1
  Id log_sum_exp_rows(Id a);  // n x d -> n x 1, max-shifted
  Id l2_normalize_rows(Id a);

  const Tensor& value(Id id) const { return nodes_[id].value; }
  std::size_t size() const { return nodes_.size(); }

  // Reverse sweep from a 1x1 loss node. Returns name -> gradient for every
  // named leaf on the tape.
  GradMap backward(Id loss) const;

 private:
  enum class Op : std::uint8_t {
    kLeaf, kInput, kMatmul, kAdd, kAddRowvec, kSub, kMul, kScale,
    kConcatRows, kConcatCols, kStackRows, kSliceRows, kSliceCols,
    kTranspose, kSoftmaxRows, kWeightedRowsSum, kSigmoid, kTanh, kExp,
    kMeanRows, kRowSums, kSumAll, kLogSumExpRows, kL2NormalizeRows,
  };

  struct Node {
    Op op;
    Id a = -1;
    Id b = -1;
    std::vector<Id> many;  // stack_rows only
    Tensor value;
    double c = 0.0;            // scale factor
    std::size_t i0 = 0, i1 = 0;  // slice bounds
    std::string name;          // named leaves only
  };

  Id push(Node n);
  const Tensor& val(Id id) const { return nodes_[id].value; }

  std::vector<Node> nodes_;
};

}  // namespace topseg::numkit
