#include "ssnt/decoder.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "ssnt/errors.hpp"

namespace ssnt {

// ---- SsntStepScorer -----------------------------------------------------------

SsntStepScorer::SsntStepScorer(const SsntModel& model, std::span<const int> x)
    : model_(model) {
  for (const Vec& h : encode(model, x)) sources_.push_back(project_source(model, h));
}

StateId SsntStepScorer::add(LstmState s) {
  Entry e;
  e.proj = project_target(model_, s.h);
  e.lstm = std::move(s);
  e.cells.resize(sources_.size());
  states_.push_back(std::move(e));
  return static_cast<StateId>(states_.size() - 1);
}

StateId SsntStepScorer::start() { return add(decoder_start(model_)); }

StateId SsntStepScorer::advance(StateId state, int token) {
  if (state >= states_.size()) throw UsageError("unknown decoder state");
  return add(decoder_advance(model_, states_[state].lstm, token));
}

SsntStepScorer::Cell& SsntStepScorer::cell(StateId state, std::size_t i) {
  if (state >= states_.size() || i >= sources_.size()) {
    throw UsageError("decoder state or input position out of range");
  }
  Entry& e = states_[state];
  Cell& c = e.cells[i];
  if (!c.ready) {
    c.word = ssnt::word_log_dist(sources_[i], e.proj);
    c.trans = transition_probs(model_, sources_[i], e.proj);
    c.ready = true;
  }
  return c;
}

const Vec& SsntStepScorer::word_log_dist(StateId state, std::size_t i) {
  return cell(state, i).word;
}

EmitShift SsntStepScorer::transition(StateId state, std::size_t i) {
  return cell(state, i).trans;
}

// ---- shared search pieces -----------------------------------------------------

bool proposal_before(const Proposal& a, const Proposal& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.token != b.token) return a.token < b.token;
  if (a.k != b.k) return a.k < b.k;
  return a.rank < b.rank;
}

void keep_top(std::vector<Proposal>& proposals, std::size_t limit) {
  if (proposals.size() > limit) {
    std::partial_sort(proposals.begin(),
                      proposals.begin() + static_cast<std::ptrdiff_t>(limit),
                      proposals.end(), proposal_before);
    proposals.resize(limit);
  } else {
    std::sort(proposals.begin(), proposals.end(), proposal_before);
  }
}

void collect_proposals(StepScorer& scorer, StateId state, std::size_t k,
                       std::uint32_t rank, double base, std::size_t limit,
                       std::vector<std::vector<Proposal>>& per_cell) {
  const std::size_t I = scorer.input_length();
  std::vector<int> ids;
  double shifted = 0.0;  // log prod of shifts over [k, i)
  for (std::size_t i = k; i < I; ++i) {
    const EmitShift es = scorer.transition(state, i);
    const double reach = shifted + es.log_emit;
    shifted += es.log_shift;
    const Vec& word = scorer.word_log_dist(state, i);
    ids.clear();
    for (std::size_t t = 0; t < word.size(); ++t) {
      const int tok = static_cast<int>(t);
      if (tok == Vocabulary::kBos) continue;
      if (tok == Vocabulary::kEos && i + 1 != I) continue;
      ids.push_back(tok);
    }
    const auto better = [&](int a, int b) {
      const double sa = word[static_cast<std::size_t>(a)];
      const double sb = word[static_cast<std::size_t>(b)];
      return sa != sb ? sa > sb : a < b;
    };
    const std::size_t take = std::min(limit, ids.size());
    std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(take), ids.end(),
                      better);
    for (std::size_t n = 0; n < take; ++n) {
      const int tok = ids[n];
      const double inc = reach + word[static_cast<std::size_t>(tok)];
      per_cell[i].push_back(Proposal{base + inc, inc, tok, i, static_cast<std::uint32_t>(k), rank});
    }
  }
}

std::size_t resolve_j_max(const DecodeOptions& options, std::size_t input_length) {
  const std::size_t wanted = options.j_max == 0 ? 2 * input_length + 10 : options.j_max;
  const std::size_t j_max = std::min(wanted, options.max_output_len);
  if (j_max < 1) throw ConfigError("J_max must be >= 1");
  return j_max;
}

// ---- beam search --------------------------------------------------------------

namespace {

struct Hyp {
  double score;
  int token;
  std::uint32_t k;
  std::uint32_t rank;
  bool complete;
  bool has_state = false;
  StateId state = 0;
};

using Column = std::vector<std::vector<Hyp>>;  // per input position, best first

struct Pos {
  std::size_t i;
  std::size_t j;
  std::size_t rank;
};

DecodeResult backtrack(const std::vector<Column>& chart, Pos at, std::size_t I) {
  DecodeResult r;
  r.score = chart[at.j][at.i][at.rank].score;
  r.complete = chart[at.j][at.i][at.rank].complete;
  r.tokens.resize(at.j + 1);
  r.alignment.resize(at.j + 1);
  for (std::size_t j = at.j + 1; j-- > 0;) {
    const Hyp& h = chart[j][at.i][at.rank];
    r.tokens[j] = h.token;
    r.alignment[j] = at.i;
    at = Pos{h.k, j == 0 ? 0 : j - 1, h.rank};
  }
  r.best = Grid(I, chart.size());
  for (std::size_t j = 0; j < chart.size(); ++j) {
    for (std::size_t i = 0; i < I; ++i) {
      if (!chart[j][i].empty()) r.best(i, j) = chart[j][i][0].score;
    }
  }
  return r;
}

// No complete hypothesis within J_max: best last-row hypothesis overall.
DecodeResult fallback(const std::vector<Column>& chart, std::size_t I) {
  bool found = false;
  Pos best{};
  double best_score = kNegInf;
  for (std::size_t j = 0; j < chart.size(); ++j) {
    const auto& cell = chart[j][I - 1];
    if (!cell.empty() && (!found || cell[0].score > best_score)) {
      found = true;
      best_score = cell[0].score;
      best = Pos{I - 1, j, 0};
    }
  }
  if (!found) throw InternalError("decoder produced no hypothesis in the last row");
  return backtrack(chart, best, I);
}

}  // namespace

DecodeResult beam_decode(StepScorer& scorer, const DecodeOptions& options) {
  if (options.beam < 1) throw ConfigError("beam width must be >= 1");
  const std::size_t I = scorer.input_length();
  if (I == 0) throw InputError("cannot decode an empty input");
  const std::size_t j_max = resolve_j_max(options, I);
  const std::size_t K = options.beam;

  std::vector<Column> chart;
  bool have_complete = false;
  Pos best_complete{};
  double best_complete_score = kNegInf;

  for (std::size_t j = 0; j < j_max; ++j) {
    std::vector<std::vector<Proposal>> per_cell(I);
    if (j == 0) {
      collect_proposals(scorer, scorer.start(), 0, 0, 0.0, K, per_cell);
    } else {
      Column& prev = chart[j - 1];
      for (std::size_t k = 0; k < I; ++k) {
        for (std::size_t r = 0; r < prev[k].size(); ++r) {
          Hyp& h = prev[k][r];
          if (h.complete) continue;
          if (!h.has_state) {
            const Hyp& parent = j == 1 ? h : chart[j - 2][h.k][h.rank];
            const StateId from = j == 1 ? scorer.start() : parent.state;
            h.state = scorer.advance(from, h.token);
            h.has_state = true;
          }
          collect_proposals(scorer, h.state, k, static_cast<std::uint32_t>(r), h.score, K,
                            per_cell);
        }
      }
    }
    Column col(I);
    double best_open = kNegInf;
    bool any_open = false;
    for (std::size_t i = 0; i < I; ++i) {
      keep_top(per_cell[i], K);
      for (const Proposal& p : per_cell[i]) {
        const bool complete = p.token == Vocabulary::kEos;
        col[i].push_back(Hyp{p.score, p.token, p.k, p.rank, complete});
        if (complete) {
          if (!have_complete || p.score > best_complete_score) {
            have_complete = true;
            best_complete_score = p.score;
            best_complete = Pos{i, j, col[i].size() - 1};
          }
        } else {
          any_open = true;
          best_open = std::max(best_open, p.score);
        }
      }
    }
    chart.push_back(std::move(col));
    if (!any_open) break;
    if (have_complete && best_complete_score >= best_open) break;
  }

  DecodeResult result;
  if (have_complete) {
    result = backtrack(chart, best_complete, I);
  } else {
    result = fallback(chart, I);
  }
  if (options.keep_chart) {
    result.chart.resize(chart.size());
    for (std::size_t j = 0; j < chart.size(); ++j) {
      result.chart[j].resize(I);
      for (std::size_t i = 0; i < I; ++i) {
        for (const Hyp& h : chart[j][i]) {
          result.chart[j][i].push_back({h.score, h.token, h.k, h.rank});
        }
      }
    }
  }
  return result;
}


DecodeResult greedy_decode(StepScorer& scorer, const DecodeOptions& options) {
  DecodeOptions o = options;
  o.beam = 1;
  return beam_decode(scorer, o);
}

DecodeResult beam_decode(const SsntModel& model, std::span<const int> x,
                         const DecodeOptions& options) {
  SsntStepScorer scorer(model, x);
  return beam_decode(scorer, options);
}

double joint_logprob(StepScorer& scorer, std::span<const int> y,
                     std::span<const std::size_t> z) {
  if (y.size() != z.size()) throw UsageError("joint_logprob: y and z differ in length");
  const std::size_t I = scorer.input_length();
  double total = 0.0;
  std::size_t prev = 0;
  StateId s = scorer.start();
  for (std::size_t j = 0; j < y.size(); ++j) {
    if (z[j] < prev || z[j] >= I) return kNegInf;
    for (std::size_t m = prev; m < z[j]; ++m) total += scorer.transition(s, m).log_shift;
    total += scorer.transition(s, z[j]).log_emit;
    total += scorer.word_log_dist(s, z[j])[static_cast<std::size_t>(y[j])];
    prev = z[j];
    if (j + 1 < y.size()) s = scorer.advance(s, y[j]);
  }
  return total;
}

std::string format_decode_line(const DecodeResult& result, const Vocabulary& vocab,
                               const std::string& sep) {
  std::string line;
  bool first = true;
  for (int t : result.tokens) {
    if (t == Vocabulary::kEos || t == Vocabulary::kBos) continue;
    if (!first) line += sep;
    line += vocab.token(t);
    first = false;
  }
  line += '\t';
  for (std::size_t j = 0; j < result.alignment.size(); ++j) {
    if (j > 0) line += ' ';
    line += std::to_string(j + 1) + ":" + std::to_string(result.alignment[j] + 1);
  }
  return line;
}

}  // namespace ssnt
