#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "ssnt/config.hpp"
#include "ssnt/errors.hpp"

namespace ssnt {
namespace {

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "<no error>";
}

TEST(RunConfig, DefaultsAreTyped) {
  const RunConfig cfg;
  EXPECT_EQ(cfg.get_int("hidden_dim"), 32);
  EXPECT_EQ(cfg.get_int("lm_hidden_dim"), 64);
  EXPECT_EQ(cfg.get_int("lm_layers"), 1);
  EXPECT_EQ(cfg.get_int("beam"), 1);
  EXPECT_DOUBLE_EQ(cfg.get_double("lambda1"), 1.0);
  EXPECT_DOUBLE_EQ(cfg.get_double("lambda2"), 0.0);
  EXPECT_EQ(cfg.get_string("encoder"), "uni");
  EXPECT_TRUE(cfg.get_bool("shuffle"));
  EXPECT_FALSE(cfg.is_set("hidden_dim"));
  const std::vector<double> grid{0, 0.25, 0.5, 0.75, 1, 1.25, 1.5};
  EXPECT_EQ(cfg.get_doubles("lambda_grid"), grid);
}

TEST(RunConfig, DashesAndUnderscoresAreTheSameKey) {
  RunConfig cfg;
  cfg.set("hidden-dim", "7");
  EXPECT_EQ(cfg.get_int("hidden_dim"), 7);
  EXPECT_TRUE(cfg.is_set("hidden-dim"));
  cfg.set("max_output_len", "9");
  EXPECT_EQ(cfg.get_size("max-output-len"), 9u);
}

TEST(RunConfig, RejectsUnknownKeysAndBadValues) {
  RunConfig cfg;
  EXPECT_NE(error_of([&] { cfg.set("hiden_dim", "3"); }).find("hiden_dim"), std::string::npos);
  EXPECT_THROW(cfg.set("hidden_dim", "3.5"), ConfigError);
  EXPECT_THROW(cfg.set("hidden_dim", ""), ConfigError);
  EXPECT_THROW(cfg.set("hidden_dim", "12abc"), ConfigError);
  EXPECT_THROW(cfg.set("lr", "fast"), ConfigError);
  EXPECT_THROW(cfg.set("lr", "inf"), ConfigError);
  EXPECT_THROW(cfg.set("shuffle", "maybe"), ConfigError);
  cfg.set("patience", "-1");
  EXPECT_THROW(cfg.get_size("patience"), ConfigError);
  cfg.set("lambda_grid", "0, x");
  EXPECT_THROW(cfg.get_doubles("lambda_grid"), ConfigError);
  // A failed set leaves the old value.
  EXPECT_EQ(cfg.get_int("hidden_dim"), 32);
}

TEST(RunConfig, ParsesFilesWithCommentsAndLocatesErrors) {
  const auto path = (std::filesystem::temp_directory_path() / "ssnt_config_test.conf").string();
  {
    std::ofstream f(path);
    f << "# model\nhidden-dim = 16   # width\n\nencoder = bi\nmodel = out/run#2.ckpt\n"
         "lr=0.01\nshuffle = false\n";
  }
  const RunConfig cfg = RunConfig::from_file(path);
  EXPECT_EQ(cfg.get_int("hidden_dim"), 16);
  EXPECT_EQ(cfg.get_string("encoder"), "bi");
  EXPECT_EQ(cfg.get_string("model"), "out/run#2.ckpt");
  EXPECT_DOUBLE_EQ(cfg.get_double("lr"), 0.01);
  EXPECT_FALSE(cfg.get_bool("shuffle"));

  {
    std::ofstream f(path);
    f << "hidden_dim = 16\n\nbogus_key = 3\n";
  }
  const std::string msg = error_of([&] { RunConfig::from_file(path); });
  EXPECT_NE(msg.find(path + ":3:"), std::string::npos) << msg;
  EXPECT_NE(msg.find("bogus_key"), std::string::npos) << msg;

  {
    std::ofstream f(path);
    f << "epochs = ten\n";
  }
  EXPECT_NE(error_of([&] { RunConfig::from_file(path); }).find(path + ":1:"), std::string::npos);
  {
    std::ofstream f(path);
    f << "just words\n";
  }
  EXPECT_NE(error_of([&] { RunConfig::from_file(path); }).find(":1:"), std::string::npos);
  std::filesystem::remove(path);
  EXPECT_THROW(RunConfig::from_file(path), ConfigError);
}

TEST(RunConfig, TextRoundTrip) {
  RunConfig cfg;
  cfg.set("lr", "0.1");
  cfg.set("task", "inflection");
  cfg.set("reverse", "true");
  const RunConfig back = RunConfig::from_text(cfg.to_text());
  EXPECT_EQ(back.to_json(), cfg.to_json());
  EXPECT_EQ(back.to_text(), cfg.to_text());
  EXPECT_EQ(cfg.to_json()["hidden_dim"], 32);
  EXPECT_EQ(cfg.to_json()["lr"], 0.1);
}

}  // namespace
}  // namespace ssnt
