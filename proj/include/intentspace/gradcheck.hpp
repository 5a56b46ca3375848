#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "intentspace/errors.hpp"

namespace intentspace {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t worst_param = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Central-difference check of analytic gradients. `params` are live pointers
// into the parameter block being checked; `f` re-evaluates the scalar
// objective at the current parameter values. Error metric per parameter:
// |analytic - central| / max(1, |central|).
inline GradCheckReport grad_check_detail(const std::function<double()>& f,
                                         std::span<double* const> params,
                                         std::span<const double> analytic,
                                         double eps) {
  if (eps <= 0.0) throw ConfigError("grad_check: eps must be positive");
  if (params.size() != analytic.size()) {
    throw ShapeError("grad_check: analytic gradient size mismatch");
  }
  GradCheckReport report;
  for (std::size_t i = 0; i < params.size(); ++i) {
    double* p = params[i];
    double saved = *p;
    *p = saved + eps;
    double up = f();
    *p = saved - eps;
    double down = f();
    *p = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("grad_check: objective not finite at perturbed point");
    }
    double central = (up - down) / (2.0 * eps);
    double rel = std::abs(analytic[i] - central) / std::max(1.0, std::abs(central));
    if (rel >= report.max_rel_err) {
      report.max_rel_err = rel;
      report.worst_param = i;
      report.worst_analytic = analytic[i];
      report.worst_numeric = central;
    }
  }
  return report;
}

inline double grad_check(const std::function<double()>& f,
                         std::span<double* const> params,
                         std::span<const double> analytic, double eps) {
  return grad_check_detail(f, params, analytic, eps).max_rel_err;
}

}  // namespace intentspace
