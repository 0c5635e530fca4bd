#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "ssnt/rng.hpp"
#include "ssnt/vocab.hpp"

namespace ssnt {

using Tokens = std::vector<std::string>;

struct ParallelPair {
  Tokens source;
  Tokens target;
  bool operator==(const ParallelPair&) const = default;
};

struct ParallelCorpus {
  std::vector<ParallelPair> pairs;
  std::string provenance;
  std::vector<std::string> filters;  // human-readable record of applied filters

  std::size_t size() const { return pairs.size(); }
};

struct PreprocessSpec {
  bool lowercase = false;
  bool digit_to_hash = false;
  std::size_t min_count = 5;
  // Length caps count tokens without the terminal EOS.
  std::size_t max_src_len = 50;
  std::size_t max_tgt_len = 25;
  std::size_t max_len_product = 500;
};

// Lowercases ASCII letters and/or maps each ASCII digit to '#'.
Tokens preprocess(std::span<const std::string> tokens, const PreprocessSpec& spec);

// Tokens with count >= min_count after the reserved ones, ordered by count
// (descending) then lexicographically.
Vocabulary build_vocab(std::span<const Tokens> side, std::size_t min_count);

// Drops pairs with an empty side, a side over its cap, or I*J over the
// product cap.
ParallelCorpus filter_pairs(const ParallelCorpus& corpus, const PreprocessSpec& spec);

// Minibatches of example indices covering [0, count) exactly once. With
// shuffle, the order is a permutation determined by (seed, epoch).
std::vector<std::vector<std::size_t>> batch_iter(std::size_t count, std::size_t batch_size,
                                                 std::uint64_t seed, std::uint64_t epoch,
                                                 bool shuffle);

// Splits a UTF-8 string into code-point substrings. InputError on invalid
// UTF-8.
Tokens utf8_chars(const std::string& s);
Tokens split_whitespace(const std::string& s);
std::string join(std::span<const std::string> tokens, const std::string& sep = " ");

// ---- synthetic tasks -------------------------------------------------------

// Symbols "w0" .. "w{vocab_size-1}"; target = source.
ParallelCorpus gen_copy_task(Rng& rng, std::size_t n, std::size_t min_len,
                             std::size_t max_len, std::size_t vocab_size);

// Suffix edit keyed by the final character of a stem: optionally replace the
// final character, then append a suffix.
struct InflectionRule {
  std::optional<std::string> replace_last;
  std::string suffix;
};
struct RuleTable {
  std::map<std::string, InflectionRule> by_final;
  std::optional<InflectionRule> fallback;

  // Applies the rule for the stem's last character. InputError when no rule
  // matches.
  std::string apply(const std::string& stem) const;
  static RuleTable default_table();
};

struct InflectionSplits {
  ParallelCorpus train;
  ParallelCorpus dev;
  ParallelCorpus test;
};

// Distinct random stems over a lowercase alphabet, split so that no stem
// occurs in two splits; sources and targets are character-tokenized.
InflectionSplits gen_suffix_inflection(Rng& rng, std::size_t n_train, std::size_t n_dev,
                                       std::size_t n_test, std::size_t min_stem,
                                       std::size_t max_stem, const RuleTable& rules);

// Copy task with one ambiguous source symbol "A" that maps to "a1" or "a2".
// Parallel targets pick uniformly at random; grammatical targets (mono data
// and references) use "a1" right after an even-numbered symbol or at the
// start, and "a2" right after an odd-numbered one.
struct AmbiguitySplits {
  ParallelCorpus train;  // random a1/a2
  ParallelCorpus dev;    // grammatical references
  ParallelCorpus test;   // grammatical references
  std::vector<Tokens> mono;  // grammatical target-side sentences
};
AmbiguitySplits gen_ambiguity_task(Rng& rng, std::size_t n_train, std::size_t n_dev,
                                   std::size_t n_test, std::size_t n_mono,
                                   std::size_t min_len, std::size_t max_len,
                                   std::size_t vocab_size, double ambiguous_rate);

// ---- files -----------------------------------------------------------------

enum class Tokenization { whitespace, characters };

// "source<TAB>target" per line.
ParallelCorpus load_parallel_tsv(const std::string& path,
                                 Tokenization tok = Tokenization::whitespace);
// One sequence per line.
std::vector<Tokens> load_mono(const std::string& path,
                              Tokenization tok = Tokenization::whitespace);
// "base<TAB>inflected<TAB>type" per line, character-tokenized, grouped by type.
std::map<std::string, ParallelCorpus> load_inflection_tsv(const std::string& path);

void write_parallel_tsv(const std::string& path, const ParallelCorpus& corpus,
                        Tokenization tok = Tokenization::whitespace);
void write_mono(const std::string& path, std::span<const Tokens> lines,
                Tokenization tok = Tokenization::whitespace);
void write_json(const std::string& path, const nlohmann::json& value);
nlohmann::json read_json(const std::string& path);

}  // namespace ssnt
