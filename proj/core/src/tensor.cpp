#include "topseg/tensor.hpp"

#include <cmath>
#include <sstream>

#include "topseg/error.hpp"

namespace topseg::numkit {

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError("Tensor: data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_str());
  }
}

Tensor Tensor::full(std::size_t rows, std::size_t cols, double v) {
  Tensor t(rows, cols);
  for (double& x : t.data_) x = v;
  return t;
}

Tensor Tensor::scalar(double v) {
  Tensor t(1, 1);
  t.data_[0] = v;
  return t;
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t(n, n);
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

Tensor Tensor::row_vector(std::span<const double> values) {
  Tensor t(1, values.size());
  for (std::size_t i = 0; i < values.size(); ++i) t.at(0, i) = values[i];
  return t;
}

double Tensor::item() const {
  if (rows_ != 1 || cols_ != 1) {
    throw ShapeError("item() requires a 1x1 tensor, got " + shape_str());
  }
  return data_[0];
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << rows_ << "x" << cols_;
  return os.str();
}

void check_shapes(bool cond, const char* op, const Tensor& a, const Tensor& b) {
  if (!cond) {
    throw ShapeError(std::string(op) + ": incompatible shapes " +
                     a.shape_str() + " and " + b.shape_str());
  }
}

void check_finite(const Tensor& t, const char* op) {
  if (!t.all_finite()) {
    throw Error(std::string(op) + ": produced a non-finite value");
  }
}

}  // namespace topseg::numkit
