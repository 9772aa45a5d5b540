#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace topseg::numkit {

// Dense row-major matrix of doubles. All model math runs in 64-bit;
// checkpoints store 32-bit payloads (see checkpoint.hpp).
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Tensor zeros(std::size_t rows, std::size_t cols) {
    return Tensor(rows, cols);
  }
  static Tensor full(std::size_t rows, std::size_t cols, double v);
  // 1x1 scalar.
  static Tensor scalar(double v);
  static Tensor identity(std::size_t n);
  static Tensor row_vector(std::span<const double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<double> row(std::size_t r) {
    return {data_.data() + r * cols_, cols_};
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  // The single entry of a 1x1 tensor.
  double item() const;

  bool all_finite() const;
  bool same_shape(const Tensor& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }
  std::string shape_str() const;

  bool operator==(const Tensor& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

using TensorMap = std::map<std::string, Tensor>;

// Throws ShapeError naming `op` and both shapes unless cond holds.
void check_shapes(bool cond, const char* op, const Tensor& a, const Tensor& b);
void check_finite(const Tensor& t, const char* op);

}  // namespace topseg::numkit
