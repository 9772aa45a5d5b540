#include "topseg/tape.hpp"

#include <algorithm>
#include <cmath>

#include "topseg/error.hpp"

namespace topseg::numkit {

namespace {

Tensor matmul_values(const Tensor& a, const Tensor& b) {
  Tensor out(a.rows(), b.cols());
  const std::size_t inner = a.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < inner; ++k) {
      const double aik = a.at(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) {
        out.at(i, j) += aik * b.at(k, j);
      }
    }
  }
  return out;
}

Tensor transpose_values(const Tensor& a) {
  Tensor out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) out.at(j, i) = a.at(i, j);
  }
  return out;
}

// Sum with addends accumulated in ascending value order. Permuting the
// inputs cannot change the result bit.
double sorted_sum(std::vector<double>& buf) {
  std::sort(buf.begin(), buf.end());
  double s = 0.0;
  for (double v : buf) s += v;
  return s;
}

}  // namespace

Tape::Id Tape::push(Node n) {
  check_finite(n.value, "tape op");
  nodes_.push_back(std::move(n));
  return static_cast<Id>(nodes_.size() - 1);
}

Tape::Id Tape::param(std::string name, Tensor value) {
  Node n{.op = Op::kLeaf, .value = std::move(value), .name = std::move(name)};
  return push(std::move(n));
}

Tape::Id Tape::input(Tensor value) {
  return push(Node{.op = Op::kInput, .value = std::move(value)});
}

Tape::Id Tape::matmul(Id a, Id b) {
  check_shapes(val(a).cols() == val(b).rows(), "matmul", val(a), val(b));
  return push(Node{.op = Op::kMatmul, .a = a, .b = b,
                   .value = matmul_values(val(a), val(b))});
}

Tape::Id Tape::add(Id a, Id b) {
  check_shapes(val(a).same_shape(val(b)), "add", val(a), val(b));
  Tensor out = val(a);
  const auto& bd = val(b).data();
  for (std::size_t i = 0; i < bd.size(); ++i) out.data()[i] += bd[i];
  return push(Node{.op = Op::kAdd, .a = a, .b = b, .value = std::move(out)});
}

Tape::Id Tape::add_rowvec(Id a, Id row) {
  check_shapes(val(row).rows() == 1 && val(row).cols() == val(a).cols(),
               "add_rowvec", val(a), val(row));
  Tensor out = val(a);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    for (std::size_t j = 0; j < out.cols(); ++j) {
      out.at(i, j) += val(row).at(0, j);
    }
  }
  return push(
      Node{.op = Op::kAddRowvec, .a = a, .b = row, .value = std::move(out)});
}

Tape::Id Tape::sub(Id a, Id b) {
  check_shapes(val(a).same_shape(val(b)), "sub", val(a), val(b));
  Tensor out = val(a);
  const auto& bd = val(b).data();
  for (std::size_t i = 0; i < bd.size(); ++i) out.data()[i] -= bd[i];
  return push(Node{.op = Op::kSub, .a = a, .b = b, .value = std::move(out)});
}

Tape::Id Tape::mul(Id a, Id b) {
  check_shapes(val(a).same_shape(val(b)), "mul", val(a), val(b));
  Tensor out = val(a);
  const auto& bd = val(b).data();
  for (std::size_t i = 0; i < bd.size(); ++i) out.data()[i] *= bd[i];
  return push(Node{.op = Op::kMul, .a = a, .b = b, .value = std::move(out)});
}

Tape::Id Tape::scale(Id a, double c) {
  Tensor out = val(a);
  for (double& v : out.data()) v *= c;
  return push(Node{.op = Op::kScale, .a = a, .value = std::move(out), .c = c});
}

Tape::Id Tape::concat_rows(Id top, Id bottom) {
  check_shapes(val(top).cols() == val(bottom).cols(), "concat_rows", val(top),
               val(bottom));
  Tensor out(val(top).rows() + val(bottom).rows(), val(top).cols());
  std::copy(val(top).data().begin(), val(top).data().end(),
            out.data().begin());
  std::copy(val(bottom).data().begin(), val(bottom).data().end(),
            out.data().begin() + static_cast<std::ptrdiff_t>(val(top).size()));
  return push(
      Node{.op = Op::kConcatRows, .a = top, .b = bottom, .value = std::move(out)});
}

Tape::Id Tape::concat_cols(Id left, Id right) {
  check_shapes(val(left).rows() == val(right).rows(), "concat_cols", val(left),
               val(right));
  const auto& l = val(left);
  const auto& r = val(right);
  Tensor out(l.rows(), l.cols() + r.cols());
  for (std::size_t i = 0; i < l.rows(); ++i) {
    for (std::size_t j = 0; j < l.cols(); ++j) out.at(i, j) = l.at(i, j);
    for (std::size_t j = 0; j < r.cols(); ++j)
      out.at(i, l.cols() + j) = r.at(i, j);
  }
  return push(
      Node{.op = Op::kConcatCols, .a = left, .b = right, .value = std::move(out)});
}

Tape::Id Tape::stack_rows(std::span<const Id> rows) {
  if (rows.empty()) throw ShapeError("stack_rows: empty input list");
  const std::size_t d = val(rows[0]).cols();
  Tensor out(rows.size(), d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    check_shapes(val(rows[i]).rows() == 1 && val(rows[i]).cols() == d,
                 "stack_rows", val(rows[0]), val(rows[i]));
    for (std::size_t j = 0; j < d; ++j) out.at(i, j) = val(rows[i]).at(0, j);
  }
  Node n{.op = Op::kStackRows, .value = std::move(out)};
  n.many.assign(rows.begin(), rows.end());
  return push(std::move(n));
}

Tape::Id Tape::slice_rows(Id a, std::size_t r0, std::size_t r1) {
  const auto& x = val(a);
  if (r0 >= r1 || r1 > x.rows()) {
    throw ShapeError("slice_rows: range [" + std::to_string(r0) + ", " +
                     std::to_string(r1) + ") out of " + x.shape_str());
  }
  Tensor out(r1 - r0, x.cols());
  std::copy(x.data().begin() + static_cast<std::ptrdiff_t>(r0 * x.cols()),
            x.data().begin() + static_cast<std::ptrdiff_t>(r1 * x.cols()),
            out.data().begin());
  return push(Node{.op = Op::kSliceRows, .a = a, .value = std::move(out),
                   .i0 = r0, .i1 = r1});
}

Tape::Id Tape::slice_cols(Id a, std::size_t c0, std::size_t c1) {
  const auto& x = val(a);
  if (c0 >= c1 || c1 > x.cols()) {
    throw ShapeError("slice_cols: range [" + std::to_string(c0) + ", " +
                     std::to_string(c1) + ") out of " + x.shape_str());
  }
  Tensor out(x.rows(), c1 - c0);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = c0; j < c1; ++j) out.at(i, j - c0) = x.at(i, j);
  }
  return push(Node{.op = Op::kSliceCols, .a = a, .value = std::move(out),
                   .i0 = c0, .i1 = c1});
}

Tape::Id Tape::transpose(Id a) {
  return push(
      Node{.op = Op::kTranspose, .a = a, .value = transpose_values(val(a))});
}

Tape::Id Tape::softmax_rows(Id a) {
  const auto& x = val(a);
  Tensor out(x.rows(), x.cols());
  std::vector<double> exps(x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double mx = x.at(i, 0);
    for (std::size_t j = 1; j < x.cols(); ++j) mx = std::max(mx, x.at(i, j));
    for (std::size_t j = 0; j < x.cols(); ++j) {
      exps[j] = std::exp(x.at(i, j) - mx);
      out.at(i, j) = exps[j];
    }
    std::vector<double> buf = exps;
    const double den = sorted_sum(buf);
    for (std::size_t j = 0; j < x.cols(); ++j) out.at(i, j) /= den;
  }
  return push(Node{.op = Op::kSoftmaxRows, .a = a, .value = std::move(out)});
}

Tape::Id Tape::weighted_rows_sum(Id weights, Id values) {
  const auto& w = val(weights);
  const auto& v = val(values);
  check_shapes(w.rows() == 1 && w.cols() == v.rows(), "weighted_rows_sum", w,
               v);
  Tensor out(1, v.cols());
  std::vector<double> buf(v.rows());
  for (std::size_t j = 0; j < v.cols(); ++j) {
    for (std::size_t k = 0; k < v.rows(); ++k) buf[k] = w.at(0, k) * v.at(k, j);
    out.at(0, j) = sorted_sum(buf);
  }
  return push(Node{.op = Op::kWeightedRowsSum, .a = weights, .b = values,
                   .value = std::move(out)});
}

Tape::Id Tape::sigmoid(Id a) {
  Tensor out = val(a);
  for (double& v : out.data()) {
    v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                 : std::exp(v) / (1.0 + std::exp(v));
  }
  return push(Node{.op = Op::kSigmoid, .a = a, .value = std::move(out)});
}

Tape::Id Tape::tanh(Id a) {
  Tensor out = val(a);
  for (double& v : out.data()) v = std::tanh(v);
  return push(Node{.op = Op::kTanh, .a = a, .value = std::move(out)});
}

Tape::Id Tape::exp(Id a) {
  Tensor out = val(a);
  for (double& v : out.data()) v = std::exp(v);
  return push(Node{.op = Op::kExp, .a = a, .value = std::move(out)});
}

Tape::Id Tape::mean_rows(Id a) {
  const auto& x = val(a);
  if (x.rows() == 0) throw ShapeError("mean_rows: empty tensor");
  Tensor out(1, x.cols());
  for (std::size_t j = 0; j < x.cols(); ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) s += x.at(i, j);
    out.at(0, j) = s / static_cast<double>(x.rows());
  }
  return push(Node{.op = Op::kMeanRows, .a = a, .value = std::move(out)});
}

Tape::Id Tape::row_sums(Id a) {
  const auto& x = val(a);
  Tensor out(x.rows(), 1);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < x.cols(); ++j) s += x.at(i, j);
    out.at(i, 0) = s;
  }
  return push(Node{.op = Op::kRowSums, .a = a, .value = std::move(out)});
}

Tape::Id Tape::sum_all(Id a) {
  double s = 0.0;
  for (double v : val(a).data()) s += v;
  return push(Node{.op = Op::kSumAll, .a = a, .value = Tensor::scalar(s)});
}

Tape::Id Tape::log_sum_exp_rows(Id a) {
  const auto& x = val(a);
  Tensor out(x.rows(), 1);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double mx = x.at(i, 0);
    for (std::size_t j = 1; j < x.cols(); ++j) mx = std::max(mx, x.at(i, j));
    double s = 0.0;
    for (std::size_t j = 0; j < x.cols(); ++j) s += std::exp(x.at(i, j) - mx);
    out.at(i, 0) = mx + std::log(s);
  }
  return push(Node{.op = Op::kLogSumExpRows, .a = a, .value = std::move(out)});
}

Tape::Id Tape::l2_normalize_rows(Id a) {
  const auto& x = val(a);
  Tensor out = x;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < x.cols(); ++j) s += x.at(i, j) * x.at(i, j);
    const double r = std::sqrt(s);
    if (r == 0.0) throw Error("l2_normalize_rows: zero row");
    for (std::size_t j = 0; j < x.cols(); ++j) out.at(i, j) /= r;
  }
  return push(Node{.op = Op::kL2NormalizeRows, .a = a, .value = std::move(out)});
}

GradMap Tape::backward(Id loss) const {
  if (loss < 0 || static_cast<std::size_t>(loss) >= nodes_.size()) {
    throw Error("backward: loss id not on tape");
  }
  if (val(loss).rows() != 1 || val(loss).cols() != 1) {
    throw ShapeError("backward: loss must be 1x1, got " +
                     val(loss).shape_str());
  }

  std::vector<Tensor> grad(nodes_.size());
  auto g = [&](Id id) -> Tensor& {
    if (grad[id].empty()) {
      grad[id] = Tensor(val(id).rows(), val(id).cols());
    }
    return grad[id];
  };
  g(loss).at(0, 0) = 1.0;

  for (Id id = loss; id >= 0; --id) {
    const Node& n = nodes_[id];
    if (grad[id].empty()) continue;  // node does not reach the loss
    const Tensor& G = grad[id];
    const Tensor& Y = n.value;
    switch (n.op) {
      case Op::kLeaf:
      case Op::kInput:
        break;
      case Op::kMatmul: {
        Tensor& da = g(n.a);
        Tensor& db = g(n.b);
        const Tensor& A = val(n.a);
        const Tensor& B = val(n.b);
        // dA += G * B^T
        for (std::size_t i = 0; i < A.rows(); ++i) {
          for (std::size_t k = 0; k < B.cols(); ++k) {
            const double gik = G.at(i, k);
            if (gik == 0.0) continue;
            for (std::size_t j = 0; j < A.cols(); ++j) {
              da.at(i, j) += gik * B.at(j, k);
            }
          }
        }
        // dB += A^T * G
        for (std::size_t i = 0; i < A.rows(); ++i) {
          for (std::size_t j = 0; j < A.cols(); ++j) {
            const double aij = A.at(i, j);
            if (aij == 0.0) continue;
            for (std::size_t k = 0; k < B.cols(); ++k) {
              db.at(j, k) += aij * G.at(i, k);
            }
          }
        }
        break;
      }
      case Op::kAdd: {
        Tensor& da = g(n.a);
        Tensor& db = g(n.b);
        for (std::size_t i = 0; i < G.size(); ++i) {
          da.data()[i] += G.data()[i];
          db.data()[i] += G.data()[i];
        }
        break;
      }
      case Op::kAddRowvec: {
        Tensor& da = g(n.a);
        Tensor& db = g(n.b);
        for (std::size_t i = 0; i < G.rows(); ++i) {
          for (std::size_t j = 0; j < G.cols(); ++j) {
            da.at(i, j) += G.at(i, j);
            db.at(0, j) += G.at(i, j);
          }
        }
        break;
      }
      case Op::kSub: {
        Tensor& da = g(n.a);
        Tensor& db = g(n.b);
        for (std::size_t i = 0; i < G.size(); ++i) {
          da.data()[i] += G.data()[i];
          db.data()[i] -= G.data()[i];
        }
        break;
      }
      case Op::kMul: {
        Tensor& da = g(n.a);
        Tensor& db = g(n.b);
        const auto& A = val(n.a).data();
        const auto& B = val(n.b).data();
        for (std::size_t i = 0; i < G.size(); ++i) {
          da.data()[i] += G.data()[i] * B[i];
          db.data()[i] += G.data()[i] * A[i];
        }
        break;
      }
      case Op::kScale: {
        Tensor& da = g(n.a);
        for (std::size_t i = 0; i < G.size(); ++i) {
          da.data()[i] += n.c * G.data()[i];
        }
        break;
      }
      case Op::kConcatRows: {
        Tensor& da = g(n.a);
        Tensor& db = g(n.b);
        const std::size_t na = val(n.a).size();
        for (std::size_t i = 0; i < na; ++i) da.data()[i] += G.data()[i];
        for (std::size_t i = 0; i < val(n.b).size(); ++i) {
          db.data()[i] += G.data()[na + i];
        }
        break;
      }
      case Op::kConcatCols: {
        Tensor& da = g(n.a);
        Tensor& db = g(n.b);
        const std::size_t ca = val(n.a).cols();
        for (std::size_t i = 0; i < G.rows(); ++i) {
          for (std::size_t j = 0; j < ca; ++j) da.at(i, j) += G.at(i, j);
          for (std::size_t j = 0; j < val(n.b).cols(); ++j) {
            db.at(i, j) += G.at(i, ca + j);
          }
        }
        break;
      }
      case Op::kStackRows: {
        for (std::size_t i = 0; i < n.many.size(); ++i) {
          Tensor& di = g(n.many[i]);
          for (std::size_t j = 0; j < G.cols(); ++j) {
            di.at(0, j) += G.at(i, j);
          }
        }
        break;
      }
      case Op::kSliceRows: {
        Tensor& da = g(n.a);
        const std::size_t cols = val(n.a).cols();
        for (std::size_t i = n.i0; i < n.i1; ++i) {
          for (std::size_t j = 0; j < cols; ++j) {
            da.at(i, j) += G.at(i - n.i0, j);
          }
        }
        break;
      }
      case Op::kSliceCols: {
        Tensor& da = g(n.a);
        for (std::size_t i = 0; i < G.rows(); ++i) {
          for (std::size_t j = n.i0; j < n.i1; ++j) {
            da.at(i, j) += G.at(i, j - n.i0);
          }
        }
        break;
      }
      case Op::kTranspose: {
        Tensor& da = g(n.a);
        for (std::size_t i = 0; i < G.rows(); ++i) {
          for (std::size_t j = 0; j < G.cols(); ++j) {
            da.at(j, i) += G.at(i, j);
          }
        }
        break;
      }
      case Op::kSoftmaxRows: {
        Tensor& da = g(n.a);
        // dX_row = y ⊙ (g − <g, y>)
        for (std::size_t i = 0; i < G.rows(); ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < G.cols(); ++j) {
            dot += G.at(i, j) * Y.at(i, j);
          }
          for (std::size_t j = 0; j < G.cols(); ++j) {
            da.at(i, j) += Y.at(i, j) * (G.at(i, j) - dot);
          }
        }
        break;
      }
      case Op::kWeightedRowsSum: {
        Tensor& dw = g(n.a);
        Tensor& dv = g(n.b);
        const Tensor& W = val(n.a);
        const Tensor& V = val(n.b);
        for (std::size_t k = 0; k < V.rows(); ++k) {
          double s = 0.0;
          for (std::size_t j = 0; j < V.cols(); ++j) {
            s += G.at(0, j) * V.at(k, j);
            dv.at(k, j) += W.at(0, k) * G.at(0, j);
          }
          dw.at(0, k) += s;
        }
        break;
      }
      case Op::kSigmoid: {
        Tensor& da = g(n.a);
        for (std::size_t i = 0; i < G.size(); ++i) {
          const double y = Y.data()[i];
          da.data()[i] += G.data()[i] * y * (1.0 - y);
        }
        break;
      }
      case Op::kTanh: {
        Tensor& da = g(n.a);
        for (std::size_t i = 0; i < G.size(); ++i) {
          const double y = Y.data()[i];
          da.data()[i] += G.data()[i] * (1.0 - y * y);
        }
        break;
      }
      case Op::kExp: {
        Tensor& da = g(n.a);
        for (std::size_t i = 0; i < G.size(); ++i) {
          da.data()[i] += G.data()[i] * Y.data()[i];
        }
        break;
      }
      case Op::kMeanRows: {
        Tensor& da = g(n.a);
        const double inv = 1.0 / static_cast<double>(val(n.a).rows());
        for (std::size_t i = 0; i < val(n.a).rows(); ++i) {
          for (std::size_t j = 0; j < G.cols(); ++j) {
            da.at(i, j) += G.at(0, j) * inv;
          }
        }
        break;
      }
      case Op::kRowSums: {
        Tensor& da = g(n.a);
        for (std::size_t i = 0; i < val(n.a).rows(); ++i) {
          for (std::size_t j = 0; j < val(n.a).cols(); ++j) {
            da.at(i, j) += G.at(i, 0);
          }
        }
        break;
      }
      case Op::kSumAll: {
        Tensor& da = g(n.a);
        const double gv = G.at(0, 0);
        for (double& v : da.data()) v += gv;
        break;
      }
      case Op::kLogSumExpRows: {
        Tensor& da = g(n.a);
        const Tensor& X = val(n.a);
        for (std::size_t i = 0; i < X.rows(); ++i) {
          const double gi = G.at(i, 0);
          for (std::size_t j = 0; j < X.cols(); ++j) {
            da.at(i, j) += gi * std::exp(X.at(i, j) - Y.at(i, 0));
          }
        }
        break;
      }
      case Op::kL2NormalizeRows: {
        Tensor& da = g(n.a);
        const Tensor& X = val(n.a);
        for (std::size_t i = 0; i < X.rows(); ++i) {
          double s = 0.0;
          for (std::size_t j = 0; j < X.cols(); ++j) {
            s += X.at(i, j) * X.at(i, j);
          }
          const double r = std::sqrt(s);
          double dot = 0.0;
          for (std::size_t j = 0; j < X.cols(); ++j) {
            dot += G.at(i, j) * Y.at(i, j);
          }
          for (std::size_t j = 0; j < X.cols(); ++j) {
            da.at(i, j) += (G.at(i, j) - Y.at(i, j) * dot) / r;
          }
        }
        break;
      }
    }
  }

  GradMap out;
  for (const Node& n : nodes_) {
    if (n.op != Op::kLeaf) continue;
    const Id id = static_cast<Id>(&n - nodes_.data());
    if (grad[id].empty()) {
      out[n.name] = Tensor(n.value.rows(), n.value.cols());
    } else {
      out[n.name] = std::move(grad[id]);
    }
  }
  return out;
}

}  // namespace topseg::numkit
