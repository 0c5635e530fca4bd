#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "ssnt/config.hpp"
#include "ssnt/data.hpp"
#include "ssnt/lang_model.hpp"
#include "ssnt/ssnt_model.hpp"
#include "ssnt/vocab.hpp"

namespace ssnt {

// How raw text lines become tokens; stored with every model so decoding
// applies the same treatment as training.
struct TextOptions {
  Tokenization tokenization = Tokenization::whitespace;
  bool lowercase = false;
  bool digit_to_hash = false;

  Tokens tokenize(const std::string& line) const;
  // Separator used when writing decoded tokens back out.
  std::string separator() const;
  nlohmann::json to_json() const;
  static TextOptions from_json(const nlohmann::json& j);
  static TextOptions from_config(const RunConfig& cfg);
};

Tokenization parse_tokenization(const std::string& s);

// A checkpoint plus its "<path>.meta.json" sidecar (architecture, vocabularies,
// text options). `reverse` records that the model was trained target -> source.
struct SsntBundle {
  SsntModel model;
  Vocabulary src;
  Vocabulary tgt;
  TextOptions text;
  bool reverse = false;
};

struct LmBundle {
  LmModel model;
  Vocabulary vocab;
  TextOptions text;
};

std::string meta_path(const std::string& checkpoint);
void save_bundle(const std::string& path, const SsntBundle& bundle);
void save_bundle(const std::string& path, const LmBundle& bundle);
SsntBundle load_ssnt_bundle(const std::string& path);
LmBundle load_lm_bundle(const std::string& path);

SsntConfig ssnt_config_from(const RunConfig& cfg);
LmConfig lm_config_from(const RunConfig& cfg);

struct AccuracyReport {
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy() const { return total == 0 ? 0.0 : static_cast<double>(correct) / total; }
};

// Exact string match of TAB field `ref_field` / `hyp_field` line by line.
// InputError on differing line counts or a missing field.
AccuracyReport exact_match(const std::vector<std::string>& refs,
                           const std::vector<std::string>& hyps, std::size_t ref_field,
                           std::size_t hyp_field);

std::vector<std::string> read_lines(const std::string& path);
std::vector<std::string> split_tabs(const std::string& line);

// Subcommands. `out` receives primary output whose path is not configured
// (decoded lines, metrics, reports); `log` receives progress messages. Errors
// are thrown as ssnt::Error; the return value is the process exit status.
int cmd_gen_data(const RunConfig& cfg, std::ostream& out, std::ostream& log);
int cmd_train_ssnt(const RunConfig& cfg, std::ostream& out, std::ostream& log);
int cmd_train_lm(const RunConfig& cfg, std::ostream& out, std::ostream& log);
int cmd_decode(const RunConfig& cfg, std::ostream& out, std::ostream& log);
int cmd_decode_nc(const RunConfig& cfg, std::ostream& out, std::ostream& log);
int cmd_eval(const RunConfig& cfg, std::ostream& out, std::ostream& log);
int cmd_gradcheck(const RunConfig& cfg, std::ostream& out, std::ostream& log);

}  // namespace ssnt
