#include "labelmatch/nncore.hpp"

namespace labelmatch {

GradCheckReport finite_diff_check(const std::string& op_name,
                                  const std::function<double()>& f,
                                  std::span<const GradProbe> probes,
                                  double eps) {
  if (!(eps >= 1e-6 && eps <= 1e-3)) {
    throw NumericError("finite_diff_check: eps must lie in [1e-6, 1e-3]");
  }
  GradCheckReport report;
  report.op_name = op_name;
  std::size_t flat = 0;
  for (const auto& probe : probes) {
    detail::require(probe.value.size() == probe.analytic.size(),
                    "finite_diff_check: probe size mismatch");
    for (std::size_t i = 0; i < probe.value.size(); ++i, ++flat) {
      const double saved = probe.value[i];
      probe.value[i] = saved + eps;
      const double f_plus = f();
      probe.value[i] = saved - eps;
      const double f_minus = f();
      probe.value[i] = saved;
      if (!std::isfinite(f_plus) || !std::isfinite(f_minus)) {
        throw NumericError("finite_diff_check(" + op_name +
                           "): non-finite function value");
      }
      const double numeric = (f_plus - f_minus) / (2.0 * eps);
      const double analytic = probe.analytic[i];
      const double denom =
          std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      const double rel = std::abs(analytic - numeric) / denom;
      if (report.num_checked == 0 || rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_index = flat;
      }
      ++report.num_checked;
    }
  }
  return report;
}

}  // namespace labelmatch
