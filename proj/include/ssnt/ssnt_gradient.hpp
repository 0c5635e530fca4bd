#pragma once

#include <span>

#include "ssnt/lattice.hpp"
#include "ssnt/parameter.hpp"
#include "ssnt/rng.hpp"
#include "ssnt/ssnt_model.hpp"

namespace ssnt {

// Accumulates the gradient of -log p(y | x) into `grads` and returns the loss.
// The per-cell log-probabilities are recorded on a tape; the forward-backward
// posteriors then seed the reverse sweep as constant weights (word cells with
// -gamma, emit/shift cells with the summed transition posteriors), so no
// gradient flows through the charts themselves.
//
// When `dropout` is non-null and the model's dropout rate is positive, inverted
// dropout masks are drawn from it for every LSTM input and output; the loss is
// then that of the dropped-out network. With a null stream the result equals
// nll_loss exactly.
double example_gradient(const SsntModel& model, std::span<const int> x,
                        std::span<const int> y, GradientBuffer& grads,
                        Rng* dropout = nullptr);

}  // namespace ssnt
