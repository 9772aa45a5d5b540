#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include "topseg/tape.hpp"
#include "topseg/tensor.hpp"

namespace topseg::numkit {

struct GradCheckResult {
  bool ok = true;
  double max_err = 0.0;  // worst |analytic - numeric| / max(1, |a|, |n|)
  std::string worst;     // coordinate and both values, for the failure message
};

// Central-difference check of Tape::backward. `build` registers each entry
// of `params` on the tape it is handed (via tape.param) and returns the
// scalar loss id; it is re-invoked for every perturbed coordinate, so it
// must be a pure function of the parameter values.
inline GradCheckResult grad_check(
    const TensorMap& params,
    const std::function<Tape::Id(Tape&, const TensorMap&)>& build,
    double eps = 1e-5, double tol = 1e-4) {
  Tape tape;
  const Tape::Id loss = build(tape, params);
  const GradMap analytic = tape.backward(loss);

  auto loss_at = [&](const TensorMap& p) {
    Tape t;
    return t.value(build(t, p)).item();
  };

  GradCheckResult res;
  for (const auto& [name, base] : params) {
    const Tensor& grad = analytic.at(name);
    for (std::size_t r = 0; r < base.rows(); ++r) {
      for (std::size_t c = 0; c < base.cols(); ++c) {
        TensorMap bumped = params;
        bumped[name].at(r, c) = base.at(r, c) + eps;
        const double up = loss_at(bumped);
        bumped[name].at(r, c) = base.at(r, c) - eps;
        const double down = loss_at(bumped);
        const double numeric = (up - down) / (2.0 * eps);
        const double a = grad.at(r, c);
        const double err = std::abs(a - numeric) /
                           std::max({1.0, std::abs(a), std::abs(numeric)});
        if (err > res.max_err) {
          res.max_err = err;
          std::ostringstream os;
          os << name << "[" << r << "," << c << "]: analytic=" << a
             << " numeric=" << numeric;
          res.worst = os.str();
        }
      }
    }
  }
  res.ok = res.max_err <= tol;
  return res;
}

}  // namespace topseg::numkit
