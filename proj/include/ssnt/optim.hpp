#pragma once

#include <cstdint>

#include "ssnt/parameter.hpp"
#include "ssnt/rng.hpp"

namespace ssnt {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// One bias-corrected Adam update using Parameter::grad; `step` counts from 1.
// Zeroes the gradients afterwards. A non-finite gradient aborts with a
// NumericError naming the parameter, before any value is modified.
void adam_step(ParameterSet& params, const AdamConfig& cfg, std::uint64_t step);

// Rescales all gradients so their global L2 norm is at most max_norm.
// Returns the factor applied (1.0 when no clipping happened).
double clip_gradients(ParameterSet& params, double max_norm = 5.0);

double global_grad_norm(const ParameterSet& params);

// Inverted dropout: each entry is 0 with probability `rate`, else 1/(1-rate).
// All ones when not training.
Vec dropout_mask(std::size_t len, double rate, Rng& rng, bool training);

}  // namespace ssnt
