#include "ssnt/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "ssnt/errors.hpp"

namespace ssnt {

namespace {

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  return in;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write '" + path + "'");
  return out;
}

std::string location(const std::string& path, std::size_t line) {
  return path + ":" + std::to_string(line) + ": ";
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

Tokens tokenize(const std::string& text, Tokenization tok) {
  return tok == Tokenization::whitespace ? split_whitespace(text) : utf8_chars(text);
}

std::string detokenize(std::span<const std::string> tokens, Tokenization tok) {
  return tok == Tokenization::whitespace ? join(tokens, " ") : join(tokens, "");
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> cols;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    cols.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return cols;
}

}  // namespace

Tokens preprocess(std::span<const std::string> tokens, const PreprocessSpec& spec) {
  Tokens out(tokens.begin(), tokens.end());
  for (std::string& t : out) {
    for (char& c : t) {
      const auto u = static_cast<unsigned char>(c);
      if (spec.lowercase && u < 0x80) c = static_cast<char>(std::tolower(u));
      if (spec.digit_to_hash && c >= '0' && c <= '9') c = '#';
    }
  }
  return out;
}

Vocabulary build_vocab(std::span<const Tokens> side, std::size_t min_count) {
  if (min_count == 0) throw ConfigError("min_count must be >= 1");
  std::unordered_map<std::string, std::size_t> counts;
  for (const Tokens& seq : side) {
    for (const std::string& t : seq) ++counts[t];
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (const auto& [tok, n] : counts) {
    if (n >= min_count) kept.emplace_back(tok, n);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  Vocabulary vocab;
  for (const auto& [tok, n] : kept) vocab.add(tok);
  return vocab;
}

ParallelCorpus filter_pairs(const ParallelCorpus& corpus, const PreprocessSpec& spec) {
  if (spec.max_src_len == 0 || spec.max_tgt_len == 0 || spec.max_len_product == 0) {
    throw ConfigError("length caps must be >= 1");
  }
  ParallelCorpus out;
  out.provenance = corpus.provenance;
  out.filters = corpus.filters;
  for (const ParallelPair& p : corpus.pairs) {
    const std::size_t I = p.source.size();
    const std::size_t J = p.target.size();
    if (I == 0 || J == 0 || I > spec.max_src_len || J > spec.max_tgt_len ||
        I * J > spec.max_len_product) {
      continue;
    }
    out.pairs.push_back(p);
  }
  out.filters.push_back("filter_pairs(max_src_len=" + std::to_string(spec.max_src_len) +
                        ", max_tgt_len=" + std::to_string(spec.max_tgt_len) +
                        ", max_len_product=" + std::to_string(spec.max_len_product) +
                        "): kept " + std::to_string(out.pairs.size()) + " of " +
                        std::to_string(corpus.pairs.size()));
  return out;
}

std::vector<std::vector<std::size_t>> batch_iter(std::size_t count, std::size_t batch_size,
                                                 std::uint64_t seed, std::uint64_t epoch,
                                                 bool shuffle) {
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (shuffle) {
    Rng rng = Rng(seed, /*stream=*/0xBA7C).split(epoch);
    for (std::size_t k = count; k > 1; --k) std::swap(order[k - 1], order[rng.below(k)]);
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < count; start += batch_size) {
    const std::size_t end = std::min(count, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

Tokens utf8_chars(const std::string& s) {
  Tokens out;
  std::size_t k = 0;
  while (k < s.size()) {
    const auto lead = static_cast<unsigned char>(s[k]);
    std::size_t len = 0;
    if (lead < 0x80) len = 1;
    else if ((lead >> 5) == 0x6) len = 2;
    else if ((lead >> 4) == 0xE) len = 3;
    else if ((lead >> 3) == 0x1E) len = 4;
    else throw InputError("invalid UTF-8 lead byte at offset " + std::to_string(k));
    if (k + len > s.size()) throw InputError("truncated UTF-8 sequence");
    for (std::size_t c = 1; c < len; ++c) {
      if ((static_cast<unsigned char>(s[k + c]) >> 6) != 0x2) {
        throw InputError("invalid UTF-8 continuation byte at offset " +
                         std::to_string(k + c));
      }
    }
    out.push_back(s.substr(k, len));
    k += len;
  }
  return out;
}

Tokens split_whitespace(const std::string& s) {
  std::istringstream in(s);
  Tokens out;
  std::string t;
  while (in >> t) out.push_back(t);
  return out;
}

std::string join(std::span<const std::string> tokens, const std::string& sep) {
  std::string out;
  for (std::size_t k = 0; k < tokens.size(); ++k) {
    if (k > 0) out += sep;
    out += tokens[k];
  }
  return out;
}

// ---- synthetic tasks -------------------------------------------------------

ParallelCorpus gen_copy_task(Rng& rng, std::size_t n, std::size_t min_len,
                             std::size_t max_len, std::size_t vocab_size) {
  if (vocab_size < 2) throw ConfigError("copy task needs vocab_size >= 2");
  if (min_len == 0 || min_len > max_len) throw ConfigError("copy task needs 1 <= min_len <= max_len");
  ParallelCorpus corpus;
  corpus.provenance = "gen_copy_task(seed=" + std::to_string(rng.seed()) + ")";
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t len = rng.between(min_len, max_len);
    Tokens seq;
    for (std::size_t t = 0; t < len; ++t) seq.push_back("w" + std::to_string(rng.below(vocab_size)));
    corpus.pairs.push_back(ParallelPair{seq, seq});
  }
  return corpus;
}

std::string RuleTable::apply(const std::string& stem) const {
  const Tokens chars = utf8_chars(stem);
  if (chars.empty()) throw InputError("cannot inflect an empty stem");
  const auto it = by_final.find(chars.back());
  const InflectionRule* rule = nullptr;
  if (it != by_final.end()) rule = &it->second;
  else if (fallback) rule = &*fallback;
  else throw InputError("no inflection rule for final character '" + chars.back() + "'");
  std::string out;
  for (std::size_t k = 0; k + 1 < chars.size(); ++k) out += chars[k];
  out += rule->replace_last ? *rule->replace_last : chars.back();
  out += rule->suffix;
  return out;
}

RuleTable RuleTable::default_table() {
  RuleTable t;
  t.by_final["a"] = {std::nullopt, "ssa"};
  t.by_final["e"] = {std::string("i"), "ssa"};
  t.by_final["i"] = {std::nullopt, "sta"};
  t.by_final["o"] = {std::nullopt, "lla"};
  t.by_final["u"] = {std::string("o"), "ksi"};
  t.by_final["k"] = {std::string(""), "gen"};
  t.by_final["n"] = {std::string("m"), "en"};
  t.by_final["s"] = {std::string("ks"), "et"};
  t.by_final["t"] = {std::string("d"), "en"};
  t.fallback = InflectionRule{std::nullopt, "en"};
  return t;
}

InflectionSplits gen_suffix_inflection(Rng& rng, std::size_t n_train, std::size_t n_dev,
                                       std::size_t n_test, std::size_t min_stem,
                                       std::size_t max_stem, const RuleTable& rules) {
  if (min_stem == 0 || min_stem > max_stem) {
    throw ConfigError("inflection task needs 1 <= min_stem <= max_stem");
  }
  static constexpr std::string_view kAlphabet = "abdefghiklmnoprstuvy";
  const std::size_t total = n_train + n_dev + n_test;
  std::set<std::string> seen;
  std::vector<std::string> stems;
  std::size_t attempts = 0;
  while (stems.size() < total) {
    if (++attempts > 100 * total + 1000) {
      throw ConfigError("cannot draw enough distinct stems; widen the length range");
    }
    const std::size_t len = rng.between(min_stem, max_stem);
    std::string stem;
    for (std::size_t k = 0; k < len; ++k) stem += kAlphabet[rng.below(kAlphabet.size())];
    if (seen.insert(stem).second) stems.push_back(stem);
  }
  InflectionSplits out;
  const std::string prov = "gen_suffix_inflection(seed=" + std::to_string(rng.seed()) + ")";
  out.train.provenance = out.dev.provenance = out.test.provenance = prov;
  for (std::size_t k = 0; k < total; ++k) {
    ParallelPair p{utf8_chars(stems[k]), utf8_chars(rules.apply(stems[k]))};
    ParallelCorpus& dst = k < n_train ? out.train : k < n_train + n_dev ? out.dev : out.test;
    dst.pairs.push_back(std::move(p));
  }
  return out;
}

namespace {

// Source sentence over "s0".."s{k-1}" and "A"; returns (source, symbol ids)
// with -1 marking the ambiguous symbol.
std::vector<int> ambiguity_source(Rng& rng, std::size_t min_len, std::size_t max_len,
                                  std::size_t vocab_size, double ambiguous_rate) {
  const std::size_t len = rng.between(min_len, max_len);
  std::vector<int> ids(len);
  for (auto& id : ids) {
    id = rng.bernoulli(ambiguous_rate) ? -1 : static_cast<int>(rng.below(vocab_size));
  }
  return ids;
}

Tokens ambiguity_tokens(const std::vector<int>& ids, bool is_source) {
  Tokens out;
  for (int id : ids) out.push_back(id < 0 ? "A" : (is_source ? "s" : "t") + std::to_string(id));
  return out;
}

Tokens ambiguity_target(const std::vector<int>& ids, Rng* random_choice) {
  Tokens out;
  int prev = -1;
  for (int id : ids) {
    if (id >= 0) {
      out.push_back("t" + std::to_string(id));
    } else if (random_choice != nullptr) {
      out.push_back(random_choice->bernoulli(0.5) ? "a1" : "a2");
    } else {
      out.push_back(prev >= 0 && prev % 2 == 1 ? "a2" : "a1");
    }
    prev = id;
  }
  return out;
}

}  // namespace

AmbiguitySplits gen_ambiguity_task(Rng& rng, std::size_t n_train, std::size_t n_dev,
                                   std::size_t n_test, std::size_t n_mono,
                                   std::size_t min_len, std::size_t max_len,
                                   std::size_t vocab_size, double ambiguous_rate) {
  if (vocab_size < 2) throw ConfigError("ambiguity task needs vocab_size >= 2");
  if (min_len == 0 || min_len > max_len) throw ConfigError("ambiguity task needs 1 <= min_len <= max_len");
  if (!(ambiguous_rate >= 0.0 && ambiguous_rate <= 1.0)) {
    throw ConfigError("ambiguous_rate must be in [0, 1]");
  }
  AmbiguitySplits out;
  const std::string prov = "gen_ambiguity_task(seed=" + std::to_string(rng.seed()) + ")";
  out.train.provenance = out.dev.provenance = out.test.provenance = prov;
  for (std::size_t k = 0; k < n_train; ++k) {
    const auto ids = ambiguity_source(rng, min_len, max_len, vocab_size, ambiguous_rate);
    out.train.pairs.push_back({ambiguity_tokens(ids, true), ambiguity_target(ids, &rng)});
  }
  for (ParallelCorpus* split : {&out.dev, &out.test}) {
    const std::size_t n = split == &out.dev ? n_dev : n_test;
    for (std::size_t k = 0; k < n; ++k) {
      const auto ids = ambiguity_source(rng, min_len, max_len, vocab_size, ambiguous_rate);
      split->pairs.push_back({ambiguity_tokens(ids, true), ambiguity_target(ids, nullptr)});
    }
  }
  for (std::size_t k = 0; k < n_mono; ++k) {
    const auto ids = ambiguity_source(rng, min_len, max_len, vocab_size, ambiguous_rate);
    out.mono.push_back(ambiguity_target(ids, nullptr));
  }
  return out;
}

// ---- files -----------------------------------------------------------------

ParallelCorpus load_parallel_tsv(const std::string& path, Tokenization tok) {
  std::ifstream in = open_input(path);
  ParallelCorpus corpus;
  corpus.provenance = path;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (line.empty()) continue;
    const auto cols = split_tabs(line);
    if (cols.size() != 2) {
      throw InputError(location(path, lineno) + "expected 2 tab-separated columns, found " +
                       std::to_string(cols.size()));
    }
    ParallelPair p;
    try {
      p = ParallelPair{tokenize(cols[0], tok), tokenize(cols[1], tok)};
    } catch (const InputError& e) {
      throw InputError(location(path, lineno) + e.what());
    }
    if (p.source.empty() || p.target.empty()) {
      throw InputError(location(path, lineno) + "empty source or target");
    }
    corpus.pairs.push_back(std::move(p));
  }
  return corpus;
}

std::vector<Tokens> load_mono(const std::string& path, Tokenization tok) {
  std::ifstream in = open_input(path);
  std::vector<Tokens> lines;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    Tokens t;
    try {
      t = tokenize(line, tok);
    } catch (const InputError& e) {
      throw InputError(location(path, lineno) + e.what());
    }
    if (!t.empty()) lines.push_back(std::move(t));
  }
  return lines;
}

std::map<std::string, ParallelCorpus> load_inflection_tsv(const std::string& path) {
  std::ifstream in = open_input(path);
  std::map<std::string, ParallelCorpus> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (line.empty()) continue;
    const auto cols = split_tabs(line);
    if (cols.size() != 3 || cols[0].empty() || cols[1].empty() || cols[2].empty()) {
      throw InputError(location(path, lineno) +
                       "expected base<TAB>inflected<TAB>type with nonempty fields");
    }
    ParallelCorpus& corpus = out[cols[2]];
    corpus.provenance = path + "#" + cols[2];
    try {
      corpus.pairs.push_back({utf8_chars(cols[0]), utf8_chars(cols[1])});
    } catch (const InputError& e) {
      throw InputError(location(path, lineno) + e.what());
    }
  }
  return out;
}

void write_parallel_tsv(const std::string& path, const ParallelCorpus& corpus,
                        Tokenization tok) {
  std::ofstream out = open_output(path);
  for (const auto& p : corpus.pairs) {
    out << detokenize(p.source, tok) << '\t' << detokenize(p.target, tok) << '\n';
  }
  if (!out) throw InputError("failed writing '" + path + "'");
}

void write_mono(const std::string& path, std::span<const Tokens> lines, Tokenization tok) {
  std::ofstream out = open_output(path);
  for (const auto& l : lines) out << detokenize(l, tok) << '\n';
  if (!out) throw InputError("failed writing '" + path + "'");
}

void write_json(const std::string& path, const nlohmann::json& value) {
  std::ofstream out = open_output(path);
  out << value.dump(2) << '\n';
  if (!out) throw InputError("failed writing '" + path + "'");
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in = open_input(path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("'" + path + "' is not valid JSON: " + e.what());
  }
}

}  // namespace ssnt
