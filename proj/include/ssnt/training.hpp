#pragma once

#include <cstdint>
#include <functional>

#include "ssnt/optim.hpp"
#include "ssnt/parameter.hpp"
#include "ssnt/rng.hpp"

namespace ssnt {

struct TrainOptions {
  std::size_t batch_size = 32;
  AdamConfig adam;
  double clip_norm = 5.0;
  // Worker threads per batch; gradients are reduced in worker order.
  std::size_t workers = 1;
  bool shuffle = true;
  std::uint64_t seed = 1;
};

struct EpochStats {
  double total_nll = 0.0;   // summed over examples
  std::size_t tokens = 0;   // output tokens, EOS included
  std::size_t examples = 0;

  double mean_token_nll() const {
    return tokens == 0 ? 0.0 : total_nll / static_cast<double>(tokens);
  }
};

// Accumulates the gradient of one example's NLL into `grads` and returns the
// NLL. `dropout` is the example's private stream.
using ExampleGradientFn =
    std::function<double(std::size_t index, GradientBuffer& grads, Rng& dropout)>;
using ExampleTokensFn = std::function<std::size_t(std::size_t index)>;

// One pass over examples [0, count): minibatches in (seeded) shuffled order,
// gradient of the batch-mean NLL, clipping, one Adam step per batch. `step`
// is the running Adam step counter. Throws NumericError on a non-finite loss
// before any parameter is modified by that batch.
EpochStats train_epoch(ParameterSet& params, std::size_t count,
                       const ExampleGradientFn& gradient,
                       const ExampleTokensFn& tokens, const TrainOptions& options,
                       std::uint64_t epoch, std::uint64_t& step);

}  // namespace ssnt
