#include "ssnt/config.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ssnt/errors.hpp"

namespace ssnt {

namespace {

using Value = RunConfig::Value;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::string value_text(const Value& v) {
  if (const auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
  if (const auto* d = std::get_if<double>(&v)) return format_double(*d);
  if (const auto* b = std::get_if<bool>(&v)) return *b ? "true" : "false";
  return std::get<std::string>(v);
}

std::string type_name(const Value& v) {
  switch (v.index()) {
    case 0:
      return "integer";
    case 1:
      return "number";
    case 2:
      return "boolean";
    default:
      return "string";
  }
}

Value parse_as(const Value& like, const std::string& key, const std::string& text) {
  const auto bad = [&]() {
    return ConfigError("key '" + key + "' expects a " + type_name(like) + ", got '" + text + "'");
  };
  switch (like.index()) {
    case 0: {
      std::int64_t v = 0;
      const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
      if (ec != std::errc() || p != text.data() + text.size() || text.empty()) throw bad();
      return v;
    }
    case 1: {
      if (text.empty()) throw bad();
      char* end = nullptr;
      errno = 0;
      const double v = std::strtod(text.c_str(), &end);
      if (errno != 0 || end != text.c_str() + text.size() || !std::isfinite(v)) throw bad();
      return v;
    }
    case 2:
      if (text == "true" || text == "1" || text == "yes") return true;
      if (text == "false" || text == "0" || text == "no") return false;
      throw bad();
    default:
      return text;
  }
}

}  // namespace

const std::vector<RunConfig::KeyInfo>& RunConfig::schema() {
  using I = std::int64_t;
  static const std::vector<KeyInfo> keys = {
      // paths
      {"train", std::string(), "training data (parallel TSV, or one sequence per line for LMs)"},
      {"dev", std::string(), "development data used for model selection"},
      {"mono", std::string(), "unpaired target-side text for the language model"},
      {"input", std::string(), "file to decode (first TAB field of each line)"},
      {"output", std::string(), "decode output path (stdout when empty)"},
      {"model", std::string(), "checkpoint written by training / read by decode and eval"},
      {"direct", std::string(), "direct model checkpoint for decode-nc"},
      {"channel", std::string(), "channel model checkpoint for decode-nc"},
      {"lm", std::string(), "language model checkpoint for decode-nc"},
      {"metrics", std::string(), "JSON-lines metrics path (stdout when empty)"},
      {"report", std::string(), "JSON report path for eval / gradcheck / tuning"},
      {"refs", std::string(), "reference file for eval"},
      {"hyps", std::string(), "hypothesis file for eval"},
      {"nbest_out", std::string(), "JSON-lines dump of n-best candidates with component scores"},
      {"tune_dev", std::string(), "parallel TSV on which decode-nc tunes the lambdas"},
      {"vocab_from", std::string(), "reuse the vocabularies of this checkpoint"},
      {"out_dir", std::string("data"), "gen-data output directory"},
      // data
      {"tokenization", std::string("whitespace"), "whitespace | characters"},
      {"reverse", false, "swap source and target columns (channel models)"},
      {"lowercase", false, "lowercase ASCII letters"},
      {"digit_to_hash", false, "replace every digit with '#'"},
      {"min_count", I{5}, "tokens seen fewer times map to UNK"},
      {"max_src_len", I{50}, "drop training pairs with longer sources"},
      {"max_tgt_len", I{25}, "drop training pairs with longer targets"},
      {"max_len_product", I{500}, "drop training pairs with I*J above this"},
      // model
      {"hidden_dim", I{32}, "LSTM hidden size H"},
      {"embed_dim", I{32}, "token embedding size"},
      {"encoder", std::string("uni"), "uni | bi"},
      {"transition_kind", std::string("neural"), "neural | geometric"},
      {"transition_hidden_dim", I{0}, "transition MLP width (0 = hidden_dim)"},
      {"dropout", 0.0, "dropout on LSTM inputs and outputs"},
      {"max_cells", I{4096}, "largest I*J lattice accepted"},
      {"lm_hidden_dim", I{64}, "language model hidden size"},
      {"lm_embed_dim", I{64}, "language model embedding size"},
      {"lm_layers", I{1}, "language model LSTM layers (1 or 2)"},
      {"lm_dropout", 0.0, "language model dropout"},
      // training
      {"lr", 0.001, "Adam learning rate"},
      {"beta1", 0.9, "Adam beta1"},
      {"beta2", 0.999, "Adam beta2"},
      {"adam_eps", 1e-8, "Adam epsilon"},
      {"batch_size", I{32}, "minibatch size"},
      {"clip_norm", 5.0, "global gradient norm clip"},
      {"epochs", I{10}, "maximum number of epochs"},
      {"patience", I{0}, "stop after this many epochs without dev improvement (0 = never)"},
      {"seed", I{1}, "seed for initialization, shuffling, dropout and generators"},
      {"workers", I{1}, "gradient worker threads"},
      {"shuffle", true, "shuffle training examples every epoch"},
      // decoding
      {"beam", I{1}, "beam width (1 = greedy)"},
      {"j_max", I{0}, "maximum output length (0 = 2*I + 10)"},
      {"max_output_len", I{200}, "hard cap on the output length"},
      {"k1", I{20}, "direct-model proposals per cell"},
      {"k2", I{10}, "hypotheses kept per cell after rescoring"},
      {"lambda1", 1.0, "weight of the direct model"},
      {"lambda2", 0.0, "weight of the channel model"},
      {"lambda3", 0.0, "weight of the language model"},
      {"lambda4", 0.0, "weight of the output length"},
      {"lambda_grid", std::string("0,0.25,0.5,0.75,1,1.25,1.5"), "values tried for each lambda"},
      {"nbest", I{0}, "complete candidates per line written to nbest_out"},
      // evaluation
      {"metric", std::string("accuracy"), "accuracy | perplexity-file"},
      {"ref_field", I{0}, "TAB field of each reference line to compare"},
      {"hyp_field", I{0}, "TAB field of each hypothesis line to compare"},
      // data generation
      {"task", std::string("copy"), "copy | inflection | ambiguity"},
      {"n_train", I{2000}, "generated training pairs (stems for inflection)"},
      {"n_dev", I{200}, "generated development pairs"},
      {"n_test", I{200}, "generated test pairs"},
      {"n_mono", I{2000}, "generated unpaired target sentences (ambiguity task)"},
      {"min_len", I{3}, "shortest generated sequence"},
      {"max_len", I{8}, "longest generated sequence"},
      {"vocab_size", I{12}, "generated symbol inventory"},
      {"ambiguous_rate", 0.3, "probability of the ambiguous symbol per position"},
      {"min_stem", I{3}, "shortest generated stem"},
      {"max_stem", I{8}, "longest generated stem"},
      // gradient check
      {"gradcheck_threshold", 1e-5, "largest accepted relative error"},
      {"corrupt_param", std::string(), "test hook: perturb this parameter's analytic gradient"},
  };
  return keys;
}

std::string RunConfig::normalize_key(const std::string& key) {
  std::string k = key;
  std::replace(k.begin(), k.end(), '-', '_');
  return k;
}

RunConfig::RunConfig() {
  for (const KeyInfo& k : schema()) values_[k.name] = k.default_value;
}

RunConfig RunConfig::from_text(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    // A '#' inside a value (e.g. a path) is kept unless preceded by space.
    if (hash != std::string::npos && (hash == 0 || std::isspace(static_cast<unsigned char>(line[hash - 1])))) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(number) + ": expected key = value");
    }
    try {
      cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return from_text(ss.str(), path);
}

void RunConfig::set(const std::string& key, const std::string& text) {
  const std::string k = normalize_key(key);
  const auto it = values_.find(k);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second = parse_as(it->second, k, text);
  explicit_[k] = true;
}

bool RunConfig::is_set(const std::string& key) const {
  return explicit_.count(normalize_key(key)) > 0;
}

const Value& RunConfig::lookup(const std::string& key) const {
  const auto it = values_.find(normalize_key(key));
  if (it == values_.end()) throw InternalError("undeclared config key '" + key + "'");
  return it->second;
}

std::int64_t RunConfig::get_int(const std::string& key) const {
  return std::get<std::int64_t>(lookup(key));
}

std::size_t RunConfig::get_size(const std::string& key) const {
  const std::int64_t v = get_int(key);
  if (v < 0) throw ConfigError("key '" + key + "' must be non-negative");
  return static_cast<std::size_t>(v);
}

double RunConfig::get_double(const std::string& key) const {
  return std::get<double>(lookup(key));
}

bool RunConfig::get_bool(const std::string& key) const { return std::get<bool>(lookup(key)); }

const std::string& RunConfig::get_string(const std::string& key) const {
  return std::get<std::string>(lookup(key));
}

std::vector<double> RunConfig::get_doubles(const std::string& key) const {
  std::vector<double> out;
  std::istringstream in(get_string(key));
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(std::get<double>(parse_as(0.0, key, item)));
  }
  if (out.empty()) throw ConfigError("key '" + key + "' needs at least one number");
  return out;
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const KeyInfo& k : schema()) out += k.name + " = " + value_text(values_.at(k.name)) + "\n";
  return out;
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const KeyInfo& k : schema()) {
    std::visit([&](const auto& v) { j[k.name] = v; }, values_.at(k.name));
  }
  return j;
}

}  // namespace ssnt
