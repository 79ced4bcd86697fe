#pragma once

#include <cmath>
#include <functional>
#include <string>

#include "floe/error.hpp"
#include "floe/tensor.hpp"

namespace floe {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  bool pass = false;
};

/// Central finite-difference check of analytic gradients.
///
/// `params` must already hold the analytic gradient of `f` at the current
/// values in its grad accumulators. `f` evaluates the scalar objective for
/// the values currently stored in `params` and must be deterministic; it is
/// evaluated twice at the base point to detect hidden randomness.
inline GradCheckReport grad_check(ParamSet& params,
                                  const std::function<double(const ParamSet&)>& f,
                                  double eps, double tol) {
  const double base1 = f(params);
  const double base2 = f(params);
  if (base1 != base2) throw Error("grad_check: objective is not deterministic");

  GradCheckReport report;
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& entry = params[p];
    for (std::size_t i = 0; i < entry.value.numel(); ++i) {
      const double saved = entry.value[i];
      entry.value[i] = saved + eps;
      const double fp = f(params);
      entry.value[i] = saved - eps;
      const double fm = f(params);
      entry.value[i] = saved;

      const double numeric = (fp - fm) / (2.0 * eps);
      const double analytic = entry.grad[i];
      const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
      const double rel = std::fabs(analytic - numeric) / denom;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = entry.name;
        report.worst_index = i;
        report.worst_analytic = analytic;
        report.worst_numeric = numeric;
      }
    }
  }
  report.pass = report.max_rel_error < tol;
  return report;
}

} // namespace floe
