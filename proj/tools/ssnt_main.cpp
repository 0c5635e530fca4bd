#include <exception>
#include <functional>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "ssnt/commands.hpp"
#include "ssnt/config.hpp"
#include "ssnt/errors.hpp"

namespace {

using Command = std::function<int(const ssnt::RunConfig&, std::ostream&, std::ostream&)>;

struct Subcommand {
  const char* name;
  const char* help;
  Command run;
};

std::string flag_name(const std::string& key) {
  std::string f = key;
  for (char& c : f) {
    if (c == '_') c = '-';
  }
  return "--" + f;
}

}  // namespace

int main(int argc, char** argv) {
  const Subcommand commands[] = {
      {"gen-data", "generate a synthetic task (copy, inflection, ambiguity)", ssnt::cmd_gen_data},
      {"train-ssnt", "train an SSNT model", ssnt::cmd_train_ssnt},
      {"train-lm", "train a recurrent language model", ssnt::cmd_train_lm},
      {"decode", "decode with an SSNT model (greedy or beam)", ssnt::cmd_decode},
      {"decode-nc", "noisy-channel decoding with direct, channel and language models",
       ssnt::cmd_decode_nc},
      {"eval", "exact-match accuracy or per-token perplexity", ssnt::cmd_eval},
      {"gradcheck", "finite-difference check of every analytic gradient", ssnt::cmd_gradcheck},
  };

  CLI::App app{"Segment-to-segment neural transduction toolkit"};
  app.require_subcommand(1);
  std::map<std::string, std::string> overrides;
  std::string config_path;
  std::map<const CLI::App*, const Subcommand*> by_app;
  for (const Subcommand& cmd : commands) {
    CLI::App* sub = app.add_subcommand(cmd.name, cmd.help);
    by_app[sub] = &cmd;
    sub->add_option("--config", config_path, "key = value settings file (flags override it)");
    for (const auto& key : ssnt::RunConfig::schema()) {
      sub->add_option_function<std::string>(
             flag_name(key.name),
             [&overrides, name = key.name](const std::string& v) { overrides[name] = v; },
             key.help)
          ->type_name("VALUE");
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  const Subcommand* chosen = nullptr;
  for (const auto& [sub, cmd] : by_app) {
    if (sub->parsed()) chosen = cmd;
  }
  try {
    ssnt::RunConfig cfg =
        config_path.empty() ? ssnt::RunConfig() : ssnt::RunConfig::from_file(config_path);
    for (const auto& [key, value] : overrides) cfg.set(key, value);
    return chosen->run(cfg, std::cout, std::cerr);
  } catch (const ssnt::ConfigError& e) {
    std::cerr << "ssnt " << chosen->name << ": configuration error: " << e.what() << "\n";
    return 2;
  } catch (const ssnt::Error& e) {
    std::cerr << "ssnt " << chosen->name << ": error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "ssnt " << chosen->name << ": unexpected error: " << e.what() << "\n";
    return 1;
  }
}
