#include "ssnt/noisy_channel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <memory>
#include <tuple>

#include "ssnt/errors.hpp"
#include "ssnt/math.hpp"
#include "ssnt/vocab.hpp"

namespace ssnt {

double combination_score(const CombinationWeights& w, double direct_lp, double channel_lp,
                         double lm_lp, std::size_t out_len) {
  double total = 0.0;
  if (w.direct != 0.0) total += w.direct * direct_lp;
  if (w.channel != 0.0) total += w.channel * channel_lp;
  if (w.lm != 0.0) total += w.lm * lm_lp;
  if (w.length != 0.0) total += w.length * static_cast<double>(out_len);
  return total;
}

// ---- channel chart --------------------------------------------------------------

ChannelContext::ChannelContext(const SsntModel& channel, std::span<const int> x)
    : channel_(channel), x_(x.begin(), x.end()) {
  if (channel.config().encoder != EncoderDirection::uni) {
    throw ConfigError("the channel model needs a unidirectional encoder");
  }
  if (x_.empty()) throw InputError("cannot decode an empty input");
  for (const LstmState& s : decoder_prefix_states(channel, x_)) {
    targets_.push_back(project_target(channel, s.h));
  }
}

ChannelColumn ChannelContext::empty_column() const {
  const std::size_t I = x_.size();
  return ChannelColumn{0, encoder_start(channel_), Vec(I, kNegInf), Vec(I, kNegInf),
                       Vec(I, kNegInf)};
}

ChannelColumn ChannelContext::extend(const ChannelColumn& column, int token) const {
  const std::size_t I = x_.size();
  if (column.alpha.size() != I || column.carry.size() != I || column.mass.size() != I) {
    throw InternalError("channel column does not match the input length");
  }
  ChannelColumn out;
  out.rows = column.rows + 1;
  out.enc = encoder_advance(channel_, column.enc, token);
  out.alpha.assign(I, kNegInf);
  out.carry.assign(I, kNegInf);
  out.mass.assign(I, kNegInf);
  const SourceProjection src = project_source(channel_, out.enc.h);
  for (std::size_t c = 0; c < I; ++c) {
    // Paths reach (row, c) by shifting down from an earlier row of output c
    // or by entering from output c - 1 in this row.
    const double entering = c == 0 ? (column.rows == 0 ? 0.0 : kNegInf) : out.alpha[c - 1];
    const double reach = log_add(column.carry[c], entering);
    const EmitShift es = transition_probs(channel_, src, targets_[c]);
    const double word = word_log_dist(src, targets_[c])[static_cast<std::size_t>(x_[c])];
    out.alpha[c] = word + es.log_emit + reach;
    out.carry[c] = es.log_shift + reach;
    out.mass[c] = log_add(column.mass[c], out.alpha[c]);
  }
  return out;
}

ChannelColumn extend_channel_column(const ChannelContext& context, const ChannelColumn& column,
                                    std::size_t prefix_length, int token) {
  if (column.rows != prefix_length) {
    throw InternalError("stale channel column: it covers " + std::to_string(column.rows) +
                        " tokens, the hypothesis has " + std::to_string(prefix_length));
  }
  return context.extend(column, token);
}

// ---- search ---------------------------------------------------------------------

namespace {

constexpr double kNotComputed = std::numeric_limits<double>::quiet_NaN();

struct Hyp {
  double total;
  double direct;
  double channel;
  double lm;
  int token;
  std::uint32_t k;
  std::uint32_t rank;
  bool complete;
  std::uint32_t prefix;  // node of the output prefix ending in `token`
};

// Direct-decoder state, LM state and channel column depend on the output
// prefix only, so hypotheses in different cells share them through a trie.
struct PrefixNode {
  std::uint32_t parent = 0;
  int token = Vocabulary::kBos;
  std::size_t length = 0;
  bool expanded = false;
  StateId state = 0;
  LmState lm_state;
  Vec lm_dist;
  std::shared_ptr<const ChannelColumn> column;
  std::map<int, std::uint32_t> children;
};

using Column = std::vector<std::vector<Hyp>>;

struct Pos {
  std::size_t i;
  std::size_t j;
  std::size_t rank;
};

bool hyp_before(const Hyp& a, const Hyp& b) {
  if (a.total != b.total) return a.total > b.total;
  if (a.token != b.token) return a.token < b.token;
  if (a.k != b.k) return a.k < b.k;
  return a.rank < b.rank;
}

NoisyChannelCandidate backtrack(const std::vector<Column>& chart, Pos at) {
  const Hyp& last = chart[at.j][at.i][at.rank];
  NoisyChannelCandidate c;
  c.total = last.total;
  c.direct = last.direct;
  c.channel = last.channel;
  c.lm = last.lm;
  c.complete = last.complete;
  c.tokens.resize(at.j + 1);
  c.alignment.resize(at.j + 1);
  for (std::size_t j = at.j + 1; j-- > 0;) {
    const Hyp& h = chart[j][at.i][at.rank];
    c.tokens[j] = h.token;
    c.alignment[j] = at.i;
    at = Pos{h.k, j == 0 ? 0 : j - 1, h.rank};
  }
  return c;
}

}  // namespace

NoisyChannelResult noisy_channel_decode(StepScorer& direct, const ChannelContext& channel,
                                        const LmModel& lm, const CombinationWeights& weights,
                                        const NoisyChannelOptions& options) {
  if (options.k1 < 1 || options.k2 < 1) throw ConfigError("K1 and K2 must be >= 1");
  const std::size_t I = direct.input_length();
  if (I == 0) throw InputError("cannot decode an empty input");
  if (channel.output_length() != I) {
    throw UsageError("channel context and direct scorer see different inputs");
  }
  if (lm.vocab_size() != direct.vocab_size()) {
    throw ConfigError("language model and direct model vocabularies differ");
  }
  DecodeOptions limits;
  limits.j_max = options.j_max;
  limits.max_output_len = options.max_output_len;
  const std::size_t j_max = resolve_j_max(limits, I);
  const bool need_channel = weights.channel != 0.0 || options.nbest > 0;
  const bool need_lm = weights.lm != 0.0 || options.nbest > 0;

  std::deque<PrefixNode> prefixes(1);
  prefixes[0].expanded = true;
  prefixes[0].state = direct.start();
  if (need_lm) {
    prefixes[0].lm_state = lm_start(lm);
    prefixes[0].lm_dist = lm_next_log_dist(lm, prefixes[0].lm_state);
  }
  prefixes[0].column = std::make_shared<const ChannelColumn>(channel.empty_column());
  const auto child = [&](std::uint32_t parent, int token) {
    const auto found = prefixes[parent].children.find(token);
    if (found != prefixes[parent].children.end()) return found->second;
    const auto id = static_cast<std::uint32_t>(prefixes.size());
    PrefixNode node;
    node.parent = parent;
    node.token = token;
    node.length = prefixes[parent].length + 1;
    prefixes.push_back(std::move(node));
    prefixes[parent].children.emplace(token, id);
    return id;
  };
  const auto expand = [&](std::uint32_t id) -> PrefixNode& {
    PrefixNode& node = prefixes[id];
    if (!node.expanded) {
      const PrefixNode& parent = prefixes[node.parent];
      node.state = direct.advance(parent.state, node.token);
      if (need_lm) {
        node.lm_state = lm_advance(lm, parent.lm_state, node.token);
        node.lm_dist = lm_next_log_dist(lm, node.lm_state);
      }
      node.expanded = true;
    }
    return node;
  };
  const auto channel_column = [&](std::uint32_t id) -> const ChannelColumn& {
    PrefixNode& node = prefixes[id];
    if (!node.column) {
      const PrefixNode& parent = prefixes[node.parent];
      node.column = std::make_shared<const ChannelColumn>(
          extend_channel_column(channel, *parent.column, parent.length, node.token));
    }
    return *node.column;
  };
  // The virtual predecessor of the first column.
  const Hyp root{0.0, 0.0, 0.0, 0.0, Vocabulary::kBos, 0, 0, false, 0};

  std::vector<Column> chart;
  bool have_complete = false;
  Pos best_complete{};
  double best_complete_score = kNegInf;
  std::vector<Pos> completes;

  for (std::size_t j = 0; j < j_max; ++j) {
    std::vector<std::vector<Proposal>> per_cell(I);
    if (j == 0) {
      collect_proposals(direct, prefixes[0].state, 0, 0, 0.0, options.k1, per_cell);
    } else {
      const Column& prev = chart[j - 1];
      for (std::size_t k = 0; k < I; ++k) {
        for (std::size_t r = 0; r < prev[k].size(); ++r) {
          const Hyp& h = prev[k][r];
          if (h.complete) continue;
          const StateId state = expand(h.prefix).state;
          collect_proposals(direct, state, k, static_cast<std::uint32_t>(r), h.total,
                            options.k1, per_cell);
        }
      }
    }

    Column col(I);
    double best_open = kNegInf;
    bool any_open = false;
    for (std::size_t i = 0; i < I; ++i) {
      keep_top(per_cell[i], options.k1);
      std::vector<Hyp>& cell = col[i];
      for (const Proposal& p : per_cell[i]) {
        const Hyp& pred = j == 0 ? root : chart[j - 1][p.k][p.rank];
        const bool complete = p.token == Vocabulary::kEos;
        const PrefixNode& pred_node = expand(pred.prefix);
        const double lm_step = need_lm ? pred_node.lm_dist[static_cast<std::size_t>(p.token)]
                                       : kNotComputed;
        const std::uint32_t prefix = child(pred.prefix, p.token);
        Hyp h{0.0, pred.direct + p.increment, kNotComputed, pred.lm + lm_step,
              p.token, p.k, p.rank, complete, prefix};
        if (need_channel) {
          const ChannelColumn& ext = channel_column(prefix);
          // A complete hypothesis aligns the final x token with the final y
          // token; an open one covers x_1^i with any prefix of y.
          h.channel = complete ? ext.alpha[I - 1] : ext.mass[i];
        }
        h.total = combination_score(weights, h.direct, h.channel, h.lm, j + 1);
        cell.push_back(std::move(h));
      }
      std::sort(cell.begin(), cell.end(), hyp_before);
      if (cell.size() > options.k2) cell.erase(cell.begin() + static_cast<std::ptrdiff_t>(options.k2), cell.end());
      for (std::size_t r = 0; r < cell.size(); ++r) {
        if (cell[r].complete) {
          completes.push_back(Pos{i, j, r});
          if (!have_complete || cell[r].total > best_complete_score) {
            have_complete = true;
            best_complete_score = cell[r].total;
            best_complete = Pos{i, j, r};
          }
        } else {
          any_open = true;
          best_open = std::max(best_open, cell[r].total);
        }
      }
    }
    chart.push_back(std::move(col));
    if (!any_open) break;
    if (have_complete && best_complete_score >= best_open) break;
  }

  NoisyChannelResult result;
  if (have_complete) {
    result.best = backtrack(chart, best_complete);
  } else {
    bool found = false;
    Pos best{};
    for (std::size_t j = 0; j < chart.size(); ++j) {
      const auto& cell = chart[j][I - 1];
      if (!cell.empty() && (!found || cell[0].total > chart[best.j][I - 1][0].total)) {
        found = true;
        best = Pos{I - 1, j, 0};
      }
    }
    if (!found) throw InternalError("decoder produced no hypothesis in the last row");
    result.best = backtrack(chart, best);
  }
  if (options.nbest > 0) {
    std::stable_sort(completes.begin(), completes.end(), [&](const Pos& a, const Pos& b) {
      return chart[a.j][a.i][a.rank].total > chart[b.j][b.i][b.rank].total;
    });
    for (std::size_t n = 0; n < completes.size() && n < options.nbest; ++n) {
      result.nbest.push_back(backtrack(chart, completes[n]));
    }
  }
  return result;
}

NoisyChannelResult noisy_channel_decode(const SsntModel& direct, const SsntModel& channel,
                                        const LmModel& lm, std::span<const int> x,
                                        const CombinationWeights& weights,
                                        const NoisyChannelOptions& options) {
  if (direct.tgt_vocab_size() != channel.src_vocab_size() ||
      direct.src_vocab_size() != channel.tgt_vocab_size() ||
      direct.tgt_vocab_size() != lm.vocab_size()) {
    throw ConfigError("direct, channel and language model vocabularies do not line up");
  }
  SsntStepScorer scorer(direct, x);
  ChannelContext context(channel, x);
  return noisy_channel_decode(scorer, context, lm, weights, options);
}

// ---- weight tuning --------------------------------------------------------------

std::vector<double> default_weight_values() {
  std::vector<double> v;
  for (int n = 0; n <= 6; ++n) v.push_back(0.25 * n);
  return v;
}

std::vector<CombinationWeights> weight_grid(std::span<const double> values) {
  std::vector<CombinationWeights> grid;
  std::vector<std::array<double, 4>> seen;
  for (double a : values) {
    for (double b : values) {
      for (double c : values) {
        for (double d : values) {
          const std::array<double, 4> w{a, b, c, d};
          double scale = 0.0;
          for (double v : w) scale = std::max(scale, std::abs(v));
          if (scale == 0.0) continue;
          std::array<double, 4> key{};
          for (std::size_t n = 0; n < 4; ++n) key[n] = std::round(w[n] / scale * 1e9) / 1e9;
          if (std::find(seen.begin(), seen.end(), key) != seen.end()) continue;
          seen.push_back(key);
          grid.push_back(CombinationWeights{a, b, c, d});
        }
      }
    }
  }
  return grid;
}

TuneResult tune_weights(std::span<const CombinationWeights> grid,
                        const std::function<double(const CombinationWeights&)>& accuracy) {
  if (grid.empty()) throw ConfigError("empty weight grid");
  TuneResult result;
  for (const CombinationWeights& w : grid) {
    const double acc = accuracy(w);
    result.evaluated.emplace_back(w, acc);
    if (acc > result.best_accuracy) {
      result.best_accuracy = acc;
      result.best = w;
    }
  }
  return result;
}

}  // namespace ssnt
