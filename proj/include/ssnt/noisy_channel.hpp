#pragma once

#include <functional>
#include <span>
#include <vector>

#include "ssnt/decoder.hpp"
#include "ssnt/lang_model.hpp"
#include "ssnt/ssnt_model.hpp"

namespace ssnt {

// O = l1 * direct + l2 * channel + l3 * lm + l4 * |y|.
struct CombinationWeights {
  double direct = 1.0;
  double channel = 0.0;
  double lm = 0.0;
  double length = 0.0;

  bool operator==(const CombinationWeights&) const = default;
};

// Terms with a zero weight are dropped, so an infinite component never turns
// into NaN through 0 * inf.
double combination_score(const CombinationWeights& w, double direct_lp, double channel_lp,
                         double lm_lp, std::size_t out_len);

// Forward chart of a channel model (input y, output x) for a growing input
// prefix y_1^r, kept one input row at a time.
struct ChannelColumn {
  std::size_t rows = 0;  // channel-input tokens consumed
  LstmState enc;         // channel encoder after `rows` tokens
  Vec alpha;             // log alpha(rows - 1, c) for every output position c
  Vec carry;             // mass flowing into row `rows` by shifting
  Vec mass;              // log p(x_1^{c+1} | y_1^rows) = lse_{r < rows} alpha(r, c)
};

// Everything about the channel that depends on x only: the channel decoder
// runs over x once. The channel must use a unidirectional encoder so that
// encoder states of a prefix do not depend on the tokens after it.
class ChannelContext {
 public:
  ChannelContext(const SsntModel& channel, std::span<const int> x);

  std::size_t output_length() const { return x_.size(); }
  ChannelColumn empty_column() const;
  // Column for y_1^{r+1} from the column for y_1^r; O(|x|^2) cells.
  ChannelColumn extend(const ChannelColumn& column, int token) const;

 private:
  const SsntModel& channel_;
  std::vector<int> x_;
  std::vector<TargetProjection> targets_;
};

// Appends `token` to a hypothesis whose prefix has `prefix_length` tokens.
// InternalError when the cached column does not describe that prefix.
ChannelColumn extend_channel_column(const ChannelContext& context, const ChannelColumn& column,
                                    std::size_t prefix_length, int token);

struct NoisyChannelOptions {
  std::size_t k1 = 20;  // direct-model proposals per cell
  std::size_t k2 = 10;  // hypotheses kept per cell after rescoring
  std::size_t j_max = 0;
  std::size_t max_output_len = 200;
  // Number of complete candidates reported in NoisyChannelResult::nbest.
  std::size_t nbest = 0;
};

struct NoisyChannelCandidate {
  std::vector<int> tokens;
  std::vector<std::size_t> alignment;
  double total = kNegInf;
  double direct = kNegInf;   // Viterbi log q(y, z | x) of the path
  // The channel and LM terms are NaN when their weight is zero and no
  // n-best list is requested (they are then never computed).
  double channel = kNegInf;  // log p(x_1^i | y_1^j)
  double lm = kNegInf;       // log p(y_1^j)
  bool complete = false;
};

struct NoisyChannelResult {
  NoisyChannelCandidate best;
  // Best complete candidates by total score, best first.
  std::vector<NoisyChannelCandidate> nbest;
};

// Cell beams over (input position, output length) as in the direct decoder.
// Each predecessor proposes its best k1 extensions per cell under the direct
// model, scored by the predecessor's total plus the direct step score; the
// best k1 proposals of a cell are rescored by O and the best k2 kept. Open
// hypotheses score the channel by the prefix mass of x_1^i; complete ones by
// the full channel marginal p(x | y). Stopping, masking, tie-breaking and the
// fallback follow beam_decode, applied to O.
NoisyChannelResult noisy_channel_decode(StepScorer& direct, const ChannelContext& channel,
                                        const LmModel& lm, const CombinationWeights& weights,
                                        const NoisyChannelOptions& options);

// ConfigError when the three vocabularies do not line up.
NoisyChannelResult noisy_channel_decode(const SsntModel& direct, const SsntModel& channel,
                                        const LmModel& lm, std::span<const int> x,
                                        const CombinationWeights& weights,
                                        const NoisyChannelOptions& options);

// Every combination of `values` for the four weights, minus the all-zero
// vector and positive rescalings of earlier entries (which rank hypotheses
// identically). Lexicographic order.
std::vector<CombinationWeights> weight_grid(std::span<const double> values);

// {0, 0.25, ..., 1.5}.
std::vector<double> default_weight_values();

struct TuneResult {
  CombinationWeights best;
  double best_accuracy = -1.0;
  std::vector<std::pair<CombinationWeights, double>> evaluated;
};

// Evaluates `accuracy` on every grid point; ties keep the earlier point.
TuneResult tune_weights(std::span<const CombinationWeights> grid,
                        const std::function<double(const CombinationWeights&)>& accuracy);

}  // namespace ssnt
