#include "ssnt/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace ssnt {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport check_gradients(ParameterSet& params,
                                const std::function<double()>& loss,
                                const GradientBuffer& analytic,
                                const GradCheckOptions& options) {
  GradCheckReport report;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = params.at(k);
    if (!p.trainable) continue;
    GradCheckEntry entry{p.name};
    auto values = p.value.data();
    const auto& grad = analytic.at(k);
    for (std::size_t e = 0; e < values.size(); e += options.stride) {
      const double saved = values[e];
      values[e] = saved + options.step;
      const double up = loss();
      values[e] = saved - options.step;
      const double down = loss();
      values[e] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double err = relative_error(grad[e], numeric, options.floor);
      entry.max_rel_error = std::max(entry.max_rel_error, err);
      entry.max_abs_analytic = std::max(entry.max_abs_analytic, std::abs(grad[e]));
      ++entry.count;
    }
    if (entry.max_rel_error >= report.worst) {
      report.worst = entry.max_rel_error;
      report.worst_name = entry.name;
    }
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace ssnt
