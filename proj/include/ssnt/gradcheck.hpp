#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ssnt/parameter.hpp"

namespace ssnt {

// |a - n| / max(|a|, |n|, floor). The floor keeps entries whose true
// derivative is (near) zero from dividing finite-difference round-off by
// zero.
double relative_error(double analytic, double numeric, double floor);

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  double max_abs_analytic = 0.0;
  std::size_t count = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double worst = 0.0;
  std::string worst_name;
};

struct GradCheckOptions {
  double step = 1e-5;
  double floor = 1e-4;
  // Only check every `stride`-th scalar of each parameter (1 = all).
  std::size_t stride = 1;
};

// Compares `analytic` against central differences of `loss`, perturbing each
// scalar of every trainable parameter in place (and restoring it).
GradCheckReport check_gradients(ParameterSet& params,
                                const std::function<double()>& loss,
                                const GradientBuffer& analytic,
                                const GradCheckOptions& options = {});

}  // namespace ssnt
