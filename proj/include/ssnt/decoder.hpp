#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ssnt/lattice.hpp"
#include "ssnt/ssnt_model.hpp"
#include "ssnt/vocab.hpp"

namespace ssnt {

// Opaque handle to a decoder state owned by a StepScorer.
using StateId = std::uint32_t;

// Per-step scores of a direct model for one input sequence. A state
// summarizes BOS and the output prefix consumed so far; scores are requested
// per (state, input position). Implementations cache as they see fit.
class StepScorer {
 public:
  virtual ~StepScorer() = default;

  virtual std::size_t input_length() const = 0;
  virtual std::size_t vocab_size() const = 0;
  // State after consuming BOS only.
  virtual StateId start() = 0;
  virtual StateId advance(StateId state, int token) = 0;
  // log p(. | prefix, x_1^i), a vector over the output vocabulary.
  virtual const Vec& word_log_dist(StateId state, std::size_t i) = 0;
  // Emit / shift log-probabilities at input position i.
  virtual EmitShift transition(StateId state, std::size_t i) = 0;
};

// StepScorer backed by an SSNT model (encoder states computed once).
class SsntStepScorer : public StepScorer {
 public:
  SsntStepScorer(const SsntModel& model, std::span<const int> x);

  std::size_t input_length() const override { return sources_.size(); }
  std::size_t vocab_size() const override { return model_.tgt_vocab_size(); }
  StateId start() override;
  StateId advance(StateId state, int token) override;
  const Vec& word_log_dist(StateId state, std::size_t i) override;
  EmitShift transition(StateId state, std::size_t i) override;

  const LstmState& state(StateId id) const { return states_[id].lstm; }

 private:
  struct Cell {
    bool ready = false;
    Vec word;
    EmitShift trans{};
  };
  struct Entry {
    LstmState lstm;
    TargetProjection proj;
    std::vector<Cell> cells;
  };
  Cell& cell(StateId state, std::size_t i);
  StateId add(LstmState s);

  const SsntModel& model_;
  std::vector<SourceProjection> sources_;
  std::vector<Entry> states_;
};

struct DecodeOptions {
  std::size_t beam = 1;
  // 0 means the default 2*I + 10, always capped by max_output_len.
  std::size_t j_max = 0;
  std::size_t max_output_len = 200;
  // Copy every cell beam into DecodeResult::chart.
  bool keep_chart = false;
};

std::size_t resolve_j_max(const DecodeOptions& options, std::size_t input_length);

struct DecodeResult {
  // Output tokens including the final EOS when `complete`.
  std::vector<int> tokens;
  // 0-based input position of every output token.
  std::vector<std::size_t> alignment;
  // log p(y, z | x) of the returned path.
  double score = kNegInf;
  // False when no hypothesis emitted EOS at the last input position within
  // J_max outputs (the best last-row prefix is returned instead).
  bool complete = false;
  // Best path score per cell (I x columns searched), -inf when empty.
  Grid best;

  struct BeamEntry {
    double score;
    int token;
    std::size_t k;     // predecessor input position
    std::size_t rank;  // predecessor rank within its cell
  };
  // chart[j][i]: the beam of cell (i, j), best first; only with keep_chart.
  std::vector<std::vector<std::vector<BeamEntry>>> chart;
};

// Joint decode-and-align search for argmax_{y,z} p(y, z | x) over per-cell
// beams of width `beam`. Candidates in a cell are ordered by score, then token
// id, then predecessor input position, then predecessor rank (all ascending
// except score). BOS is never produced and EOS only at the last input
// position; a hypothesis that emits EOS there is complete. The search stops
// after the first column in which the best complete score is at least the best
// open score (log-scores never increase along a path, so no open hypothesis
// can overtake it); without any complete hypothesis by J_max the best
// last-row hypothesis over all columns is returned.
DecodeResult beam_decode(StepScorer& scorer, const DecodeOptions& options);
// beam_decode with width 1.
DecodeResult greedy_decode(StepScorer& scorer, const DecodeOptions& options);

DecodeResult beam_decode(const SsntModel& model, std::span<const int> x,
                         const DecodeOptions& options);

// log p(y, z | x) of an explicit output and alignment under the scorer.
double joint_logprob(StepScorer& scorer, std::span<const int> y,
                     std::span<const std::size_t> z);

// "tokens<TAB>j:i j:i ..." with 1-based positions; tokens (joined by `sep`)
// exclude EOS, the alignment covers every output position including EOS.
std::string format_decode_line(const DecodeResult& result, const Vocabulary& vocab,
                               const std::string& sep = " ");

// ---- building blocks shared with the noisy-channel search -------------------

// One extension of a predecessor hypothesis into cell `i` of the next column.
struct Proposal {
  double score;      // predecessor score + increment
  double increment;  // log p(z_j = i | z_{j-1} = k) + log p(y_j | ...)
  int token;
  std::size_t i;
  std::uint32_t k;     // predecessor input position
  std::uint32_t rank;  // predecessor rank within its cell
};

// Score descending, then token, predecessor position and rank ascending.
bool proposal_before(const Proposal& a, const Proposal& b);

// For the predecessor at input position k (rank `rank`, decoder state `state`,
// score `base`) appends to per_cell[i], for every i >= k, its best `limit`
// extensions under the token mask (no BOS; EOS only at the last position).
void collect_proposals(StepScorer& scorer, StateId state, std::size_t k,
                       std::uint32_t rank, double base, std::size_t limit,
                       std::vector<std::vector<Proposal>>& per_cell);

// Sorts by proposal_before and truncates to `limit`.
void keep_top(std::vector<Proposal>& proposals, std::size_t limit);

}  // namespace ssnt
