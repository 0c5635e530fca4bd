#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace {

namespace fs = std::filesystem;

// Runs the ssnt binary with `args` and returns its exit status.
int ssnt(const std::string& args) {
  const std::string cmd = std::string(SSNT_TOOL) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / "ssnt_cli_test";
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

TEST_F(Cli, ExitStatusIsZeroOnlyOnSuccess) {
  EXPECT_EQ(ssnt("gradcheck"), 0);
  EXPECT_EQ(ssnt("gradcheck --corrupt-param word.W"), 1);
  EXPECT_NE(ssnt(""), 0);
  EXPECT_NE(ssnt("frobnicate"), 0);
  EXPECT_NE(ssnt("decode --no-such-flag 3"), 0);
  EXPECT_EQ(ssnt("gen-data --hidden-dim notanumber"), 2);
  EXPECT_EQ(ssnt("decode --model " + path("missing.ckpt") + " --input " + path("x")), 1);
  EXPECT_EQ(ssnt("eval --refs " + path("missing") + " --hyps " + path("missing")), 1);
}

TEST_F(Cli, FlagsOverrideConfigFile) {
  {
    std::ofstream f(path("run.conf"));
    f << "task = copy\nn_train = 5\nn_dev = 2\nn_test = 2\nout_dir = " << path("a") << "\n";
  }
  EXPECT_EQ(ssnt("gen-data --config " + path("run.conf") + " --n-train 7"), 0);
  std::ifstream in(path("a/train.tsv"));
  int lines = 0;
  for (std::string l; std::getline(in, l);) ++lines;
  EXPECT_EQ(lines, 7);
  {
    std::ofstream f(path("bad.conf"));
    f << "n_train = 5\nunknown_key = 1\n";
  }
  EXPECT_EQ(ssnt("gen-data --config " + path("bad.conf")), 2);
}

TEST_F(Cli, EvalFromTheCommandLine) {
  {
    std::ofstream r(path("ref")), h(path("hyp"));
    r << "a\nb\nc\nd\n";
    h << "a\nb\nc\nx\n";
  }
  EXPECT_EQ(ssnt("eval --metric accuracy --refs " + path("ref") + " --hyps " + path("hyp") +
                 " --report " + path("r.json")),
            0);
  std::ifstream in(path("r.json"));
  const std::string text((std::istreambuf_iterator<char>(in)), {});
  EXPECT_NE(text.find("0.75"), std::string::npos) << text;
}

}  // namespace
