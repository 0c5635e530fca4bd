#include "ssnt/training.hpp"

#include <cmath>
#include <exception>
#include <string>
#include <thread>
#include <vector>

#include "ssnt/data.hpp"
#include "ssnt/errors.hpp"

namespace ssnt {

EpochStats train_epoch(ParameterSet& params, std::size_t count,
                       const ExampleGradientFn& gradient,
                       const ExampleTokensFn& tokens, const TrainOptions& options,
                       std::uint64_t epoch, std::uint64_t& step) {
  if (options.workers == 0) throw ConfigError("workers must be >= 1");
  EpochStats stats;
  const Rng base(options.seed, /*stream=*/0x7D0);
  const Rng epoch_rng = base.split(epoch);
  const auto batches = batch_iter(count, options.batch_size, options.seed, epoch,
                                     options.shuffle);
  std::vector<GradientBuffer> buffers;
  for (std::size_t w = 0; w < options.workers; ++w) buffers.emplace_back(params);

  for (const auto& batch : batches) {
    const std::size_t n = batch.size();
    const std::size_t workers = std::min(options.workers, n);
    std::vector<double> losses(n, 0.0);
    std::vector<std::exception_ptr> errors(workers);
    auto run = [&](std::size_t w) {
      try {
        buffers[w].zero();
        const std::size_t lo = n * w / workers;
        const std::size_t hi = n * (w + 1) / workers;
        for (std::size_t b = lo; b < hi; ++b) {
          Rng dropout = epoch_rng.split(batch[b]);
          losses[b] = gradient(batch[b], buffers[w], dropout);
        }
      } catch (...) {
        errors[w] = std::current_exception();
      }
    };
    if (workers == 1) {
      run(0);
    } else {
      std::vector<std::thread> threads;
      for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(run, w);
      for (auto& t : threads) t.join();
    }
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
    double batch_loss = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
      if (!std::isfinite(losses[b])) {
        throw NumericError("non-finite training loss on example " +
                           std::to_string(batch[b]));
      }
      batch_loss += losses[b];
      stats.tokens += tokens(batch[b]);
    }
    stats.total_nll += batch_loss;
    stats.examples += n;

    params.zero_grad();
    for (std::size_t w = 0; w < workers; ++w) {
      buffers[w].scale(1.0 / static_cast<double>(n));
      buffers[w].accumulate_into(params);
    }
    clip_gradients(params, options.clip_norm);
    adam_step(params, options.adam, ++step);
  }
  return stats;
}

}  // namespace ssnt
