#include "ssnt/commands.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>

#include "ssnt/checkpoint.hpp"
#include "ssnt/decoder.hpp"
#include "ssnt/errors.hpp"
#include "ssnt/gradcheck.hpp"
#include "ssnt/lattice.hpp"
#include "ssnt/noisy_channel.hpp"
#include "ssnt/ssnt_gradient.hpp"
#include "ssnt/tape.hpp"
#include "ssnt/training.hpp"

namespace ssnt {

namespace fs = std::filesystem;

// ---- text ------------------------------------------------------------------

Tokenization parse_tokenization(const std::string& s) {
  if (s == "whitespace") return Tokenization::whitespace;
  if (s == "characters") return Tokenization::characters;
  throw ConfigError("tokenization must be 'whitespace' or 'characters', got '" + s + "'");
}

namespace {

std::string tokenization_name(Tokenization t) {
  return t == Tokenization::whitespace ? "whitespace" : "characters";
}

PreprocessSpec text_spec(const TextOptions& text) {
  PreprocessSpec spec;
  spec.lowercase = text.lowercase;
  spec.digit_to_hash = text.digit_to_hash;
  return spec;
}

}  // namespace

Tokens TextOptions::tokenize(const std::string& line) const {
  const Tokens raw = tokenization == Tokenization::whitespace ? split_whitespace(line)
                                                              : utf8_chars(line);
  return preprocess(raw, text_spec(*this));
}

std::string TextOptions::separator() const {
  return tokenization == Tokenization::whitespace ? " " : "";
}

nlohmann::json TextOptions::to_json() const {
  return {{"tokenization", tokenization_name(tokenization)},
          {"lowercase", lowercase},
          {"digit_to_hash", digit_to_hash}};
}

TextOptions TextOptions::from_json(const nlohmann::json& j) {
  TextOptions t;
  t.tokenization = parse_tokenization(j.at("tokenization").get<std::string>());
  t.lowercase = j.at("lowercase").get<bool>();
  t.digit_to_hash = j.at("digit_to_hash").get<bool>();
  return t;
}

TextOptions TextOptions::from_config(const RunConfig& cfg) {
  TextOptions t;
  t.tokenization = parse_tokenization(cfg.get_string("tokenization"));
  t.lowercase = cfg.get_bool("lowercase");
  t.digit_to_hash = cfg.get_bool("digit_to_hash");
  return t;
}

// ---- bundles ---------------------------------------------------------------

std::string meta_path(const std::string& checkpoint) { return checkpoint + ".meta.json"; }

SsntConfig ssnt_config_from(const RunConfig& cfg) {
  SsntConfig c;
  c.hidden_dim = cfg.get_size("hidden_dim");
  c.embed_dim = cfg.get_size("embed_dim");
  c.encoder = parse_encoder_direction(cfg.get_string("encoder"));
  c.transition = parse_transition_kind(cfg.get_string("transition_kind"));
  c.dropout = cfg.get_double("dropout");
  c.transition_hidden_dim = cfg.get_size("transition_hidden_dim");
  c.max_cells = cfg.get_size("max_cells");
  return c;
}

LmConfig lm_config_from(const RunConfig& cfg) {
  LmConfig c;
  c.hidden_dim = cfg.get_size("lm_hidden_dim");
  c.embed_dim = cfg.get_size("lm_embed_dim");
  c.layers = cfg.get_size("lm_layers");
  c.dropout = cfg.get_double("lm_dropout");
  return c;
}

namespace {

std::string dump_json(const nlohmann::json& j) { return j.dump(2) + "\n"; }

nlohmann::json read_meta(const std::string& checkpoint) {
  const std::string path = meta_path(checkpoint);
  if (!fs::exists(path)) throw InputError("missing model metadata " + path);
  try {
    return read_json(path);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

void expect_kind(const nlohmann::json& meta, const std::string& kind, const std::string& path) {
  const std::string found = meta.value("kind", std::string("?"));
  if (found != kind) {
    throw FormatError(path + " holds a " + found + " model, expected " + kind);
  }
}

// The vocabularies of the data the model was trained on, in the original
// (unreversed) direction.
struct SideVocabs {
  std::optional<Vocabulary> source;
  Vocabulary target;
};

SideVocabs side_vocabs(const std::string& checkpoint) {
  const nlohmann::json meta = read_meta(checkpoint);
  const std::string kind = meta.value("kind", std::string());
  if (kind == "lm") return {std::nullopt, Vocabulary::from_json(meta.at("vocab"))};
  if (kind != "ssnt") throw FormatError(meta_path(checkpoint) + ": unknown model kind");
  Vocabulary src = Vocabulary::from_json(meta.at("src_vocab"));
  Vocabulary tgt = Vocabulary::from_json(meta.at("tgt_vocab"));
  if (meta.value("reverse", false)) std::swap(src, tgt);
  return {std::move(src), std::move(tgt)};
}

}  // namespace

void save_bundle(const std::string& path, const SsntBundle& b) {
  const SsntConfig& c = b.model.config();
  nlohmann::json meta = {
      {"kind", "ssnt"},
      {"config",
       {{"hidden_dim", c.hidden_dim},
        {"embed_dim", c.embed_dim},
        {"encoder", to_string(c.encoder)},
        {"transition_kind", to_string(c.transition)},
        {"dropout", c.dropout},
        {"transition_hidden_dim", c.transition_hidden_dim},
        {"max_cells", c.max_cells}}},
      {"src_vocab", b.src.to_json()},
      {"tgt_vocab", b.tgt.to_json()},
      {"text", b.text.to_json()},
      {"reverse", b.reverse},
  };
  write_file_atomically(meta_path(path), dump_json(meta));
  save_checkpoint(path, ModelKind::ssnt, b.model.params());
}

void save_bundle(const std::string& path, const LmBundle& b) {
  const LmConfig& c = b.model.config();
  nlohmann::json meta = {
      {"kind", "lm"},
      {"config",
       {{"hidden_dim", c.hidden_dim},
        {"embed_dim", c.embed_dim},
        {"layers", c.layers},
        {"dropout", c.dropout}}},
      {"vocab", b.vocab.to_json()},
      {"text", b.text.to_json()},
  };
  write_file_atomically(meta_path(path), dump_json(meta));
  save_checkpoint(path, ModelKind::lm, b.model.params());
}

SsntBundle load_ssnt_bundle(const std::string& path) {
  const nlohmann::json meta = read_meta(path);
  expect_kind(meta, "ssnt", path);
  try {
    const auto& c = meta.at("config");
    SsntConfig cfg;
    cfg.hidden_dim = c.at("hidden_dim").get<std::size_t>();
    cfg.embed_dim = c.at("embed_dim").get<std::size_t>();
    cfg.encoder = parse_encoder_direction(c.at("encoder").get<std::string>());
    cfg.transition = parse_transition_kind(c.at("transition_kind").get<std::string>());
    cfg.dropout = c.at("dropout").get<double>();
    cfg.transition_hidden_dim = c.at("transition_hidden_dim").get<std::size_t>();
    cfg.max_cells = c.at("max_cells").get<std::size_t>();
    Vocabulary src = Vocabulary::from_json(meta.at("src_vocab"));
    Vocabulary tgt = Vocabulary::from_json(meta.at("tgt_vocab"));
    SsntBundle b{SsntModel(cfg, src.size(), tgt.size()), std::move(src), std::move(tgt),
                 TextOptions::from_json(meta.at("text")), meta.at("reverse").get<bool>()};
    load_checkpoint(path, ModelKind::ssnt, b.model.params());
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(meta_path(path) + ": " + e.what());
  }
}

LmBundle load_lm_bundle(const std::string& path) {
  const nlohmann::json meta = read_meta(path);
  expect_kind(meta, "lm", path);
  try {
    const auto& c = meta.at("config");
    LmConfig cfg;
    cfg.hidden_dim = c.at("hidden_dim").get<std::size_t>();
    cfg.embed_dim = c.at("embed_dim").get<std::size_t>();
    cfg.layers = c.at("layers").get<std::size_t>();
    cfg.dropout = c.at("dropout").get<double>();
    Vocabulary vocab = Vocabulary::from_json(meta.at("vocab"));
    LmBundle b{LmModel(cfg, vocab.size()), std::move(vocab),
               TextOptions::from_json(meta.at("text"))};
    load_checkpoint(path, ModelKind::lm, b.model.params());
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(meta_path(path) + ": " + e.what());
  }
}

// ---- small helpers ---------------------------------------------------------

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
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

AccuracyReport exact_match(const std::vector<std::string>& refs,
                           const std::vector<std::string>& hyps, std::size_t ref_field,
                           std::size_t hyp_field) {
  if (refs.size() != hyps.size()) {
    throw InputError("line count mismatch: " + std::to_string(refs.size()) + " references, " +
                     std::to_string(hyps.size()) + " hypotheses");
  }
  const auto field = [](const std::string& line, std::size_t f, const char* what,
                        std::size_t lineno) {
    const auto cols = split_tabs(line);
    if (f >= cols.size()) {
      throw InputError(std::string(what) + " line " + std::to_string(lineno) + " has no field " +
                       std::to_string(f));
    }
    return cols[f];
  };
  AccuracyReport r;
  r.total = refs.size();
  for (std::size_t k = 0; k < refs.size(); ++k) {
    if (field(refs[k], ref_field, "reference", k + 1) ==
        field(hyps[k], hyp_field, "hypothesis", k + 1)) {
      ++r.correct;
    }
  }
  return r;
}

namespace {

const std::string& required(const RunConfig& cfg, const std::string& key) {
  const std::string& v = cfg.get_string(key);
  if (v.empty()) throw ConfigError("missing required setting '" + key + "'");
  return v;
}

// Writes to `path`, or to `out` when the path is empty.
void emit_text(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty()) {
    out << text;
    out.flush();
  } else {
    write_file_atomically(path, text);
  }
}

TrainOptions train_options_from(const RunConfig& cfg) {
  TrainOptions o;
  o.batch_size = cfg.get_size("batch_size");
  o.adam.lr = cfg.get_double("lr");
  o.adam.beta1 = cfg.get_double("beta1");
  o.adam.beta2 = cfg.get_double("beta2");
  o.adam.epsilon = cfg.get_double("adam_eps");
  o.clip_norm = cfg.get_double("clip_norm");
  o.workers = std::max<std::size_t>(1, cfg.get_size("workers"));
  o.shuffle = cfg.get_bool("shuffle");
  o.seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
  if (o.batch_size == 0) throw ConfigError("batch_size must be at least 1");
  return o;
}

PreprocessSpec preprocess_from(const RunConfig& cfg) {
  PreprocessSpec s;
  s.lowercase = cfg.get_bool("lowercase");
  s.digit_to_hash = cfg.get_bool("digit_to_hash");
  s.min_count = cfg.get_size("min_count");
  s.max_src_len = cfg.get_size("max_src_len");
  s.max_tgt_len = cfg.get_size("max_tgt_len");
  s.max_len_product = cfg.get_size("max_len_product");
  if (s.min_count < 1) throw ConfigError("min_count must be at least 1");
  return s;
}

ParallelCorpus load_corpus(const std::string& path, const RunConfig& cfg) {
  ParallelCorpus c = load_parallel_tsv(path, parse_tokenization(cfg.get_string("tokenization")));
  const PreprocessSpec spec = preprocess_from(cfg);
  const bool reverse = cfg.get_bool("reverse");
  for (auto& p : c.pairs) {
    p.source = preprocess(p.source, spec);
    p.target = preprocess(p.target, spec);
    if (reverse) std::swap(p.source, p.target);
  }
  return c;
}

std::vector<Tokens> load_sequences(const std::string& path, const RunConfig& cfg) {
  std::vector<Tokens> lines =
      load_mono(path, parse_tokenization(cfg.get_string("tokenization")));
  const PreprocessSpec spec = preprocess_from(cfg);
  for (auto& l : lines) l = preprocess(l, spec);
  return lines;
}

std::vector<Tokens> side(const ParallelCorpus& c, bool source) {
  std::vector<Tokens> out;
  out.reserve(c.size());
  for (const auto& p : c.pairs) out.push_back(source ? p.source : p.target);
  return out;
}

struct EncodedPairs {
  std::vector<std::vector<int>> x;
  std::vector<std::vector<int>> y;
  std::size_t tokens = 0;
};

EncodedPairs encode_pairs(const ParallelCorpus& c, const Vocabulary& src, const Vocabulary& tgt) {
  EncodedPairs e;
  for (const auto& p : c.pairs) {
    e.x.push_back(src.encode(p.source));
    e.y.push_back(tgt.encode(p.target));
    e.tokens += e.y.back().size();
  }
  return e;
}

nlohmann::json epoch_record(std::size_t epoch, double train_nll, std::optional<double> dev_nll) {
  nlohmann::json rec = {{"epoch", epoch}, {"train_nll", train_nll}};
  if (dev_nll) {
    rec["dev_nll"] = *dev_nll;
    rec["dev_ppl"] = std::exp(*dev_nll);
  } else {
    rec["dev_nll"] = nullptr;
    rec["dev_ppl"] = nullptr;
  }
  return rec;
}

// Shared epoch loop: model selection on dev NLL (train NLL without dev data),
// patience-based early stopping, abort on non-finite values.
class MetricsSink {
 public:
  MetricsSink(const std::string& path, std::ostream& out) : out_(&out) {
    if (!path.empty()) {
      file_ = std::make_unique<std::ofstream>(path, std::ios::binary | std::ios::trunc);
      if (!*file_) throw InputError("cannot write '" + path + "'");
      out_ = file_.get();
    }
  }
  void write(const nlohmann::json& rec) {
    *out_ << rec.dump() << '\n';
    out_->flush();
  }

 private:
  std::unique_ptr<std::ofstream> file_;
  std::ostream* out_;
};

struct EpochLoop {
  std::size_t epochs;
  std::size_t patience;
  std::string checkpoint;
  std::function<double(std::size_t epoch, std::uint64_t& step)> train;
  std::function<std::optional<double>()> dev;
  std::function<void()> save;
};

void run_epochs(const EpochLoop& loop, MetricsSink& metrics, std::ostream& log) {
  std::uint64_t step = 0;
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
  std::size_t since_best = 0;
  const auto abort = [&](const std::string& why) {
    const std::string kept = best_epoch == 0
                                 ? "no checkpoint was written"
                                 : "last good checkpoint (epoch " + std::to_string(best_epoch) +
                                       ") kept at " + loop.checkpoint;
    log << "aborting: " << why << "; " << kept << "\n";
    throw NumericError(why + "; " + kept);
  };
  for (std::size_t e = 1; e <= loop.epochs; ++e) {
    double train_nll = 0.0;
    try {
      train_nll = loop.train(e - 1, step);
    } catch (const NumericError& err) {
      abort("non-finite training loss in epoch " + std::to_string(e) + " (" + err.what() + ")");
    }
    if (!std::isfinite(train_nll)) abort("non-finite training loss in epoch " + std::to_string(e));
    std::optional<double> dev_nll;
    try {
      dev_nll = loop.dev();
    } catch (const Error& err) {
      abort("dev loss undefined after epoch " + std::to_string(e) + " (" + err.what() + ")");
    }
    if (dev_nll && !std::isfinite(*dev_nll)) {
      abort("non-finite dev loss after epoch " + std::to_string(e));
    }
    metrics.write(epoch_record(e, train_nll, dev_nll));
    const double score = dev_nll ? *dev_nll : train_nll;
    log << "epoch " << e << " train_nll " << train_nll;
    if (dev_nll) log << " dev_nll " << *dev_nll;
    if (score < best) {
      best = score;
      best_epoch = e;
      since_best = 0;
      loop.save();
      log << " (saved)";
    } else {
      ++since_best;
    }
    log << "\n";
    if (loop.patience > 0 && since_best >= loop.patience) {
      log << "early stop after epoch " << e << "\n";
      break;
    }
  }
  log << "best epoch " << best_epoch << ", checkpoint " << loop.checkpoint << "\n";
}

}  // namespace

// ---- gen-data --------------------------------------------------------------

int cmd_gen_data(const RunConfig& cfg, std::ostream& out, std::ostream& log) {
  const fs::path dir = cfg.get_string("out_dir");
  fs::create_directories(dir);
  const std::string task = cfg.get_string("task");
  const auto seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
  const Rng root(seed);
  const std::size_t n_train = cfg.get_size("n_train");
  const std::size_t n_dev = cfg.get_size("n_dev");
  const std::size_t n_test = cfg.get_size("n_test");

  nlohmann::json manifest = {{"task", task}, {"seed", seed}};
  nlohmann::json files = nlohmann::json::object();
  const auto path = [&](const std::string& name) { return (dir / name).string(); };
  const auto write_splits = [&](const ParallelCorpus& train, const ParallelCorpus& dev,
                                const ParallelCorpus& test, Tokenization tok) {
    write_parallel_tsv(path("train.tsv"), train, tok);
    write_parallel_tsv(path("dev.tsv"), dev, tok);
    write_parallel_tsv(path("test.tsv"), test, tok);
    files["train"] = "train.tsv";
    files["dev"] = "dev.tsv";
    files["test"] = "test.tsv";
    manifest["tokenization"] = tokenization_name(tok);
    manifest["sizes"] = {{"train", train.size()}, {"dev", dev.size()}, {"test", test.size()}};
  };

  if (task == "copy") {
    const std::size_t min_len = cfg.get_size("min_len"), max_len = cfg.get_size("max_len");
    const std::size_t vocab = cfg.get_size("vocab_size");
    Rng r1 = root.split(1), r2 = root.split(2), r3 = root.split(3);
    write_splits(gen_copy_task(r1, n_train, min_len, max_len, vocab),
                 gen_copy_task(r2, n_dev, min_len, max_len, vocab),
                 gen_copy_task(r3, n_test, min_len, max_len, vocab), Tokenization::whitespace);
    manifest["params"] = {{"min_len", min_len}, {"max_len", max_len}, {"vocab_size", vocab}};
  } else if (task == "inflection") {
    const std::size_t min_stem = cfg.get_size("min_stem"), max_stem = cfg.get_size("max_stem");
    Rng r = root.split(1);
    const InflectionSplits s = gen_suffix_inflection(r, n_train, n_dev, n_test, min_stem,
                                                     max_stem, RuleTable::default_table());
    write_splits(s.train, s.dev, s.test, Tokenization::characters);
    manifest["params"] = {{"min_stem", min_stem}, {"max_stem", max_stem}, {"rules", "default"}};
  } else if (task == "ambiguity") {
    const std::size_t min_len = cfg.get_size("min_len"), max_len = cfg.get_size("max_len");
    const std::size_t vocab = cfg.get_size("vocab_size");
    const std::size_t n_mono = cfg.get_size("n_mono");
    const double rate = cfg.get_double("ambiguous_rate");
    Rng r = root.split(1);
    const AmbiguitySplits s =
        gen_ambiguity_task(r, n_train, n_dev, n_test, n_mono, min_len, max_len, vocab, rate);
    write_splits(s.train, s.dev, s.test, Tokenization::whitespace);
    write_mono(path("mono.txt"), s.mono, Tokenization::whitespace);
    files["mono"] = "mono.txt";
    manifest["sizes"]["mono"] = s.mono.size();
    manifest["params"] = {{"min_len", min_len},
                          {"max_len", max_len},
                          {"vocab_size", vocab},
                          {"ambiguous_rate", rate}};
  } else {
    throw ConfigError("task must be copy, inflection or ambiguity, got '" + task + "'");
  }
  manifest["files"] = files;
  write_file_atomically(path("manifest.json"), dump_json(manifest));
  log << "wrote " << task << " data to " << dir.string() << "\n";
  out.flush();
  return 0;
}

// ---- train-ssnt ------------------------------------------------------------

int cmd_train_ssnt(const RunConfig& cfg, std::ostream& out, std::ostream& log) {
  const std::string& model_path = required(cfg, "model");
  const PreprocessSpec spec = preprocess_from(cfg);
  const ParallelCorpus raw = load_corpus(required(cfg, "train"), cfg);
  const ParallelCorpus train = filter_pairs(raw, spec);
  if (train.size() == 0) throw InputError("no training pairs left after filtering");
  log << "training pairs: " << train.size() << " of " << raw.size() << "\n";

  const bool reverse = cfg.get_bool("reverse");
  Vocabulary src, tgt;
  if (const std::string& from = cfg.get_string("vocab_from"); !from.empty()) {
    SideVocabs v = side_vocabs(from);
    if (!v.source) throw ConfigError("vocab_from '" + from + "' has no source vocabulary");
    src = reverse ? v.target : *v.source;
    tgt = reverse ? *v.source : v.target;
  } else {
    src = build_vocab(side(train, true), spec.min_count);
    tgt = build_vocab(side(train, false), spec.min_count);
  }
  log << "vocabulary: " << src.size() << " source, " << tgt.size() << " target\n";

  const SsntConfig model_cfg = ssnt_config_from(cfg);
  SsntBundle bundle{SsntModel(model_cfg, src.size(), tgt.size()), src, tgt,
                    TextOptions::from_config(cfg), reverse};
  Rng init = Rng(static_cast<std::uint64_t>(cfg.get_int("seed"))).split(0x1417);
  bundle.model.initialize(init);

  const EncodedPairs data = encode_pairs(train, src, tgt);
  if (model_cfg.transition == TransitionKind::geometric) {
    std::vector<LengthPair> lengths;
    for (std::size_t k = 0; k < data.x.size(); ++k) {
      lengths.push_back({data.x[k].size(), data.y[k].size()});
    }
    bundle.model.set_emission(mle_emission(lengths));
    log << "geometric emission e = " << bundle.model.emission() << "\n";
  }

  EncodedPairs dev;
  bool has_dev = false;
  if (const std::string& dev_path = cfg.get_string("dev"); !dev_path.empty()) {
    ParallelCorpus d = load_corpus(dev_path, cfg);
    std::erase_if(d.pairs, [&](const ParallelPair& p) {
      return (p.source.size() + 1) * (p.target.size() + 1) > model_cfg.max_cells;
    });
    dev = encode_pairs(d, src, tgt);
    has_dev = !dev.x.empty();
  }

  const TrainOptions options = train_options_from(cfg);
  const bool use_dropout = model_cfg.dropout > 0.0;
  MetricsSink metrics(cfg.get_string("metrics"), out);
  EpochLoop loop;
  loop.epochs = cfg.get_size("epochs");
  loop.patience = cfg.get_size("patience");
  loop.checkpoint = model_path;
  loop.train = [&](std::size_t epoch, std::uint64_t& step) {
    const EpochStats stats = train_epoch(
        bundle.model.params(), data.x.size(),
        [&](std::size_t k, GradientBuffer& grads, Rng& rng) {
          return example_gradient(bundle.model, data.x[k], data.y[k], grads,
                                  use_dropout ? &rng : nullptr);
        },
        [&](std::size_t k) { return data.y[k].size(); }, options, epoch, step);
    return stats.mean_token_nll();
  };
  loop.dev = [&]() -> std::optional<double> {
    if (!has_dev) return std::nullopt;
    double total = 0.0;
    for (std::size_t k = 0; k < dev.x.size(); ++k) total += nll_loss(bundle.model, dev.x[k], dev.y[k]);
    return total / static_cast<double>(dev.tokens);
  };
  loop.save = [&]() { save_bundle(model_path, bundle); };
  run_epochs(loop, metrics, log);
  return 0;
}

// ---- train-lm --------------------------------------------------------------

int cmd_train_lm(const RunConfig& cfg, std::ostream& out, std::ostream& log) {
  const std::string& model_path = required(cfg, "model");
  const std::string& data_path =
      cfg.get_string("mono").empty() ? required(cfg, "train") : cfg.get_string("mono");
  const PreprocessSpec spec = preprocess_from(cfg);
  std::vector<Tokens> lines = load_sequences(data_path, cfg);
  std::erase_if(lines, [&](const Tokens& t) { return t.size() > spec.max_tgt_len; });
  if (lines.empty()) throw InputError("no training sequences in '" + data_path + "'");
  log << "training sequences: " << lines.size() << "\n";

  Vocabulary vocab;
  if (const std::string& from = cfg.get_string("vocab_from"); !from.empty()) {
    vocab = side_vocabs(from).target;
  } else {
    vocab = build_vocab(lines, spec.min_count);
  }
  log << "vocabulary: " << vocab.size() << "\n";

  LmBundle bundle{LmModel(lm_config_from(cfg), vocab.size()), vocab,
                  TextOptions::from_config(cfg)};
  Rng init = Rng(static_cast<std::uint64_t>(cfg.get_int("seed"))).split(0x1417);
  bundle.model.initialize(init);

  std::vector<std::vector<int>> corpus;
  for (const auto& l : lines) corpus.push_back(vocab.encode(l));
  std::vector<std::vector<int>> dev;
  if (const std::string& dev_path = cfg.get_string("dev"); !dev_path.empty()) {
    for (const auto& l : load_sequences(dev_path, cfg)) dev.push_back(vocab.encode(l));
  }

  const TrainOptions options = train_options_from(cfg);
  MetricsSink metrics(cfg.get_string("metrics"), out);
  EpochLoop loop;
  loop.epochs = cfg.get_size("epochs");
  loop.patience = cfg.get_size("patience");
  loop.checkpoint = model_path;
  loop.train = [&](std::size_t epoch, std::uint64_t& step) {
    return lm_train_epoch(bundle.model, corpus, options, epoch, step);
  };
  loop.dev = [&]() -> std::optional<double> {
    if (dev.empty()) return std::nullopt;
    return lm_mean_nll(bundle.model, dev);
  };
  loop.save = [&]() { save_bundle(model_path, bundle); };
  run_epochs(loop, metrics, log);
  return 0;
}

// ---- decode ----------------------------------------------------------------

namespace {

std::vector<int> encode_input(const std::string& line, const TextOptions& text,
                              const Vocabulary& vocab) {
  return vocab.encode(text.tokenize(split_tabs(line)[0]));
}

std::string format_candidate(const NoisyChannelCandidate& c, const Vocabulary& vocab,
                             const std::string& sep) {
  DecodeResult r;
  r.tokens = c.tokens;
  r.alignment = c.alignment;
  return format_decode_line(r, vocab, sep);
}

}  // namespace

int cmd_decode(const RunConfig& cfg, std::ostream& out, std::ostream& log) {
  const SsntBundle bundle = load_ssnt_bundle(required(cfg, "model"));
  const std::vector<std::string> lines = read_lines(required(cfg, "input"));
  DecodeOptions opts;
  opts.beam = cfg.get_size("beam");
  opts.j_max = cfg.get_size("j_max");
  opts.max_output_len = cfg.get_size("max_output_len");
  std::string text;
  std::size_t fallbacks = 0;
  for (const std::string& line : lines) {
    const std::vector<int> x = encode_input(line, bundle.text, bundle.src);
    const DecodeResult r = beam_decode(bundle.model, x, opts);
    if (!r.complete) ++fallbacks;
    text += format_decode_line(r, bundle.tgt, bundle.text.separator()) + "\n";
  }
  emit_text(cfg.get_string("output"), text, out);
  log << "decoded " << lines.size() << " lines";
  if (fallbacks > 0) log << " (" << fallbacks << " without a complete hypothesis)";
  log << "\n";
  return 0;
}

// ---- decode-nc -------------------------------------------------------------

int cmd_decode_nc(const RunConfig& cfg, std::ostream& out, std::ostream& log) {
  const std::string& direct_path = required(cfg, "direct");
  const std::string& channel_path = required(cfg, "channel");
  const std::string& lm_path = required(cfg, "lm");
  const SsntBundle direct = load_ssnt_bundle(direct_path);
  const SsntBundle channel = load_ssnt_bundle(channel_path);
  const LmBundle lm = load_lm_bundle(lm_path);
  if (!(channel.src == direct.tgt) || !(channel.tgt == direct.src)) {
    throw ConfigError("vocabulary mismatch between direct model '" + direct_path +
                      "' and channel model '" + channel_path +
                      "' (the channel must map the direct target vocabulary to its source "
                      "vocabulary)");
  }
  if (!(lm.vocab == direct.tgt)) {
    throw ConfigError("vocabulary mismatch between direct model '" + direct_path +
                      "' and language model '" + lm_path + "'");
  }
  if (channel.model.config().encoder != EncoderDirection::uni) {
    throw ConfigError("channel model '" + channel_path + "' must use a unidirectional encoder");
  }

  NoisyChannelOptions opts;
  opts.k1 = cfg.get_size("k1");
  opts.k2 = cfg.get_size("k2");
  opts.j_max = cfg.get_size("j_max");
  opts.max_output_len = cfg.get_size("max_output_len");
  CombinationWeights weights{cfg.get_double("lambda1"), cfg.get_double("lambda2"),
                             cfg.get_double("lambda3"), cfg.get_double("lambda4")};
  const std::string sep = direct.text.separator();

  nlohmann::json report = nlohmann::json::object();
  if (const std::string& tune_path = cfg.get_string("tune_dev"); !tune_path.empty()) {
    const ParallelCorpus dev = load_parallel_tsv(tune_path, direct.text.tokenization);
    const PreprocessSpec spec = text_spec(direct.text);
    struct Item {
      std::vector<int> x;
      Tokens ref;
      std::unique_ptr<ChannelContext> context;
    };
    std::vector<Item> items;
    for (const auto& p : dev.pairs) {
      Item it;
      it.x = direct.src.encode(preprocess(p.source, spec));
      it.ref = preprocess(p.target, spec);
      it.context = std::make_unique<ChannelContext>(channel.model, it.x);
      items.push_back(std::move(it));
    }
    NoisyChannelOptions tune_opts = opts;
    tune_opts.nbest = 0;
    const std::vector<CombinationWeights> grid = weight_grid(cfg.get_doubles("lambda_grid"));
    log << "tuning weights on " << items.size() << " pairs over " << grid.size()
        << " grid points\n";
    const TuneResult tuned = tune_weights(grid, [&](const CombinationWeights& w) {
      std::size_t correct = 0;
      for (const Item& it : items) {
        // A fresh scorer per decode: its state cache grows with every search.
        SsntStepScorer scorer(direct.model, it.x);
        const auto r = noisy_channel_decode(scorer, *it.context, lm.model, w, tune_opts);
        if (direct.tgt.decode(r.best.tokens) == it.ref) ++correct;
      }
      return items.empty() ? 0.0 : static_cast<double>(correct) / items.size();
    });
    weights = tuned.best;
    log << "tuned weights " << weights.direct << " " << weights.channel << " " << weights.lm
        << " " << weights.length << " (dev accuracy " << tuned.best_accuracy << ")\n";
    report["tuned"] = {{"lambda1", weights.direct},
                       {"lambda2", weights.channel},
                       {"lambda3", weights.lm},
                       {"lambda4", weights.length},
                       {"dev_accuracy", tuned.best_accuracy},
                       {"grid_points", tuned.evaluated.size()}};
  }
  report["weights"] = {{"lambda1", weights.direct},
                       {"lambda2", weights.channel},
                       {"lambda3", weights.lm},
                       {"lambda4", weights.length}};

  const std::string& nbest_path = cfg.get_string("nbest_out");
  opts.nbest = cfg.get_size("nbest");
  if (!nbest_path.empty() && opts.nbest == 0) opts.nbest = 1;

  const std::vector<std::string> lines = read_lines(required(cfg, "input"));
  std::string text, nbest_text;
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const std::vector<int> x = encode_input(lines[n], direct.text, direct.src);
    const NoisyChannelResult r =
        noisy_channel_decode(direct.model, channel.model, lm.model, x, weights, opts);
    text += format_candidate(r.best, direct.tgt, sep) + "\n";
    if (nbest_path.empty()) continue;
    for (std::size_t rank = 0; rank < r.nbest.size(); ++rank) {
      const NoisyChannelCandidate& c = r.nbest[rank];
      nlohmann::json rec = {{"line", n + 1},
                            {"rank", rank + 1},
                            {"output", join(direct.tgt.decode(c.tokens), sep)},
                            {"total", c.total},
                            {"direct", c.direct},
                            {"channel", c.channel},
                            {"lm", c.lm},
                            {"length", c.tokens.size()}};
      nbest_text += rec.dump() + "\n";
    }
  }
  emit_text(cfg.get_string("output"), text, out);
  if (!nbest_path.empty()) write_file_atomically(nbest_path, nbest_text);
  if (const std::string& rp = cfg.get_string("report"); !rp.empty()) {
    write_file_atomically(rp, dump_json(report));
  }
  log << "decoded " << lines.size() << " lines\n";
  return 0;
}

// ---- eval ------------------------------------------------------------------

int cmd_eval(const RunConfig& cfg, std::ostream& out, std::ostream& log) {
  const std::string& metric = cfg.get_string("metric");
  nlohmann::json report;
  if (metric == "accuracy") {
    const AccuracyReport r =
        exact_match(read_lines(required(cfg, "refs")), read_lines(required(cfg, "hyps")),
                    cfg.get_size("ref_field"), cfg.get_size("hyp_field"));
    report = {{"metric", "accuracy"},
              {"accuracy", r.accuracy()},
              {"correct", r.correct},
              {"total", r.total}};
    out << "accuracy " << std::setprecision(6) << std::fixed << r.accuracy() << " (" << r.correct
        << "/" << r.total << ")\n";
  } else if (metric == "perplexity-file") {
    const std::string& model_path = required(cfg, "model");
    const std::string& data_path = required(cfg, "refs");
    const std::string kind = read_meta(model_path).value("kind", std::string());
    double total = 0.0;
    std::size_t tokens = 0, sequences = 0;
    if (kind == "lm") {
      const LmBundle b = load_lm_bundle(model_path);
      for (const std::string& line : read_lines(data_path)) {
        const Tokens t = b.text.tokenize(line);
        if (t.empty()) continue;
        const std::vector<int> y = b.vocab.encode(t);
        total -= lm_logprob(b.model, y);
        tokens += y.size();
        ++sequences;
      }
    } else {
      const SsntBundle b = load_ssnt_bundle(model_path);
      const ParallelCorpus c = load_parallel_tsv(data_path, b.text.tokenization);
      const PreprocessSpec spec = text_spec(b.text);
      for (const auto& p : c.pairs) {
        Tokens s = preprocess(p.source, spec), t = preprocess(p.target, spec);
        if (b.reverse) std::swap(s, t);
        const std::vector<int> x = b.src.encode(s), y = b.tgt.encode(t);
        total += nll_loss(b.model, x, y);
        tokens += y.size();
        ++sequences;
      }
    }
    if (tokens == 0) throw InputError("no sequences in '" + data_path + "'");
    const double nll = total / static_cast<double>(tokens);
    report = {{"metric", "perplexity-file"},
              {"nll_per_token", nll},
              {"perplexity", std::exp(nll)},
              {"tokens", tokens},
              {"sequences", sequences}};
    out << "perplexity " << std::setprecision(6) << std::fixed << std::exp(nll)
        << " (nll/token " << nll << ", " << tokens << " tokens)\n";
  } else {
    throw ConfigError("metric must be 'accuracy' or 'perplexity-file', got '" + metric + "'");
  }
  if (const std::string& rp = cfg.get_string("report"); !rp.empty()) {
    write_file_atomically(rp, dump_json(report));
  }
  log.flush();
  return 0;
}

// ---- gradcheck -------------------------------------------------------------

namespace {

struct Suite {
  std::string name;
  GradCheckReport report;
  bool transition_zero_checked = false;
  bool transition_zero = false;
};

// Adds a fixed offset to the first analytic entry of `name`, if present.
bool corrupt(const ParameterSet& params, GradientBuffer& grads, const std::string& name) {
  if (name.empty()) return false;
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params.at(k).name == name && grads.at(k).size() > 0) {
      grads.at(k).data()[0] += 1e-2;
      return true;
    }
  }
  return false;
}

std::vector<int> tiny_sequence(Rng& rng, std::size_t len, std::size_t vocab) {
  std::vector<int> s;
  for (std::size_t k = 0; k + 1 < len; ++k) s.push_back(static_cast<int>(rng.between(3, vocab - 1)));
  s.push_back(Vocabulary::kEos);
  return s;
}

}  // namespace

int cmd_gradcheck(const RunConfig& cfg, std::ostream& out, std::ostream& log) {
  const double threshold = cfg.get_double("gradcheck_threshold");
  const std::string& target = cfg.get_string("corrupt_param");
  const Rng root(static_cast<std::uint64_t>(cfg.get_int("seed")));
  constexpr std::size_t kH = 3;
  constexpr std::size_t kVocab = 6;
  std::vector<Suite> suites;
  bool corrupted = false;

  {  // nn-core: a three-step LSTM with a softmax readout
    Rng rng = root.split(1);
    ParameterSet params;
    const LstmParams lstm = add_lstm_params(params, "lstm", 2, kH);
    const ParamId readout = params.add("readout", {4, kH});
    params.init_uniform(rng, 1.0);
    std::vector<Vec> xs(3, Vec(2));
    for (auto& x : xs) {
      for (double& v : x) v = rng.uniform(-1.0, 1.0);
    }
    const auto record = [&](Tape& t) {
      LstmVars s{t.constant(Vec(kH, 0.0)), t.constant(Vec(kH, 0.0))};
      for (const Vec& x : xs) s = lstm_step(t, lstm, t.constant(x), s);
      return t.log_softmax_pick(t.linear(readout, s.h), 1);
    };
    Tape tape(params);
    const Var lp = record(tape);
    GradientBuffer grads(params);
    const std::pair<Var, double> seeds[1] = {{lp, -1.0}};
    tape.backward_scalars(seeds, grads);
    corrupted |= corrupt(params, grads, target);
    const auto loss = [&]() {
      Tape t(params);
      return -t.scalar(record(t));
    };
    suites.push_back({"nn-core/lstm", check_gradients(params, loss, grads)});
  }

  std::uint64_t stream = 2;
  for (EncoderDirection dir : {EncoderDirection::uni, EncoderDirection::bi}) {
    for (TransitionKind kind : {TransitionKind::geometric, TransitionKind::neural}) {
      Rng rng = root.split(stream++);
      SsntConfig c;
      c.hidden_dim = kH;
      c.embed_dim = kH;
      c.encoder = dir;
      c.transition = kind;
      SsntModel model(c, kVocab, kVocab);
      model.initialize(rng);
      model.params().init_uniform(rng, 0.8);
      if (kind == TransitionKind::geometric) model.set_emission(0.4);
      const std::vector<int> x = tiny_sequence(rng, 3 + rng.below(2), kVocab);
      const std::vector<int> y = tiny_sequence(rng, 2 + rng.below(3), kVocab);
      GradientBuffer grads(model.params());
      example_gradient(model, x, y, grads);
      Suite s{"ssnt/" + to_string(dir) + "-" + to_string(kind), {}};
      if (kind == TransitionKind::geometric) {
        const SsntLayout& l = model.layout();
        s.transition_zero_checked = true;
        s.transition_zero = true;
        for (ParamId id : {l.transition_w, l.transition_b, l.readout_w, l.readout_b}) {
          for (double g : grads[id].data()) s.transition_zero &= g == 0.0;
        }
      }
      corrupted |= corrupt(model.params(), grads, target);
      s.report = check_gradients(model.params(), [&] { return nll_loss(model, x, y); }, grads);
      suites.push_back(std::move(s));
    }
  }

  for (std::size_t layers : {1u, 2u}) {
    Rng rng = root.split(stream++);
    LmModel model(LmConfig{kH, kH, layers, 0.0}, kVocab);
    model.initialize(rng);
    model.params().init_uniform(rng, 0.8);
    const std::vector<int> y = tiny_sequence(rng, 4, kVocab);
    GradientBuffer grads(model.params());
    lm_example_gradient(model, y, grads);
    corrupted |= corrupt(model.params(), grads, target);
    suites.push_back({"lm/" + std::to_string(layers) + "-layer",
                      check_gradients(model.params(), [&] { return -lm_logprob(model, y); },
                                      grads)});
  }
  if (!target.empty() && !corrupted) {
    throw ConfigError("corrupt_param '" + target + "' names no parameter of any suite");
  }

  bool ok = true;
  double worst = 0.0;
  std::string worst_name;
  nlohmann::json report = {{"threshold", threshold}, {"suites", nlohmann::json::array()}};
  out << std::scientific << std::setprecision(3);
  for (const Suite& s : suites) {
    nlohmann::json js = {{"suite", s.name}, {"parameters", nlohmann::json::array()}};
    for (const GradCheckEntry& e : s.report.entries) {
      const bool bad = !(e.max_rel_error < threshold);
      out << s.name << "  " << e.name << "  max_rel_error " << e.max_rel_error
          << "  max_abs_grad " << e.max_abs_analytic << (bad ? "  FAIL" : "") << "\n";
      js["parameters"].push_back({{"name", e.name},
                                  {"max_rel_error", e.max_rel_error},
                                  {"max_abs_grad", e.max_abs_analytic},
                                  {"count", e.count}});
      if (bad) ok = false;
      if (!(e.max_rel_error <= worst)) {
        worst = e.max_rel_error;
        worst_name = s.name + " " + e.name;
      }
    }
    if (s.transition_zero_checked) {
      out << s.name << "  transition gradients identically zero: "
          << (s.transition_zero ? "yes" : "NO") << "\n";
      js["transition_grads_zero"] = s.transition_zero;
      if (!s.transition_zero) ok = false;
    }
    report["suites"].push_back(js);
  }
  out << "worst " << worst_name << " " << worst << "\n";
  out << (ok ? "gradcheck PASS" : "gradcheck FAIL") << "\n";
  report["worst"] = worst;
  report["worst_parameter"] = worst_name;
  report["pass"] = ok;
  if (const std::string& rp = cfg.get_string("report"); !rp.empty()) {
    write_file_atomically(rp, dump_json(report));
  }
  if (!ok) log << "gradient check failed: worst " << worst_name << "\n";
  return ok ? 0 : 1;
}

}  // namespace ssnt
