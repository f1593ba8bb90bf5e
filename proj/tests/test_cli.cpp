#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "unic_cli_test";

int run(const std::string& args) {
  const std::string cmd = std::string(UNIC_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string path(const std::string& rel) { return (kRoot / rel).string(); }

void write(const std::string& rel, const std::string& text) { std::ofstream(kRoot / rel) << text; }

const char* kTinyModel =
    R"("model":{"token_dim":8,"tokens":2,"points":48,"point_widths":[8,8],"mlp_hidden":8,"head_hidden":8})";

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);
    ASSERT_EQ(run("synth --out " + path("data") + " --episodes 6 --frames 2 --points 48 --seed 2"), 0);
    write("cfg.json", std::string("{") + kTinyModel + R"(,"train":{"epochs":1,"batch_size":4}})");
    ASSERT_EQ(run("train " + path("data") + " --config " + path("cfg.json") + " --out " + path("run")), 0);
  }
  static void TearDownTestSuite() { fs::remove_all(kRoot); }
};

}  // namespace

TEST_F(Cli, PipelineProducesArtifacts) {
  EXPECT_TRUE(fs::exists(kRoot / "data/manifest.json"));
  EXPECT_TRUE(fs::exists(kRoot / "run/model.unic"));
  EXPECT_TRUE(fs::exists(kRoot / "run/train_log.csv"));
  EXPECT_EQ(run("eval " + path("run/model.unic") + " " + path("data") + " --out " + path("eval")), 0);
  EXPECT_TRUE(fs::exists(kRoot / "eval/eval_report.json"));
  EXPECT_TRUE(fs::exists(kRoot / "eval/eval_report.csv"));
  EXPECT_EQ(run("infer " + path("run/model.unic") + " " + path("data/ep00000.unic") + " --drop tac,ft --out " + path("inf")), 0);
  EXPECT_TRUE(fs::exists(kRoot / "inf/ep00000.affordance.csv"));
  EXPECT_EQ(run("inspect " + path("data/ep00001.unic") + " --frame 1 --out " + path("f.ply")), 0);
  EXPECT_TRUE(fs::exists(kRoot / "f.ply"));
  EXPECT_EQ(run("label " + path("data") + " --out " + path("labels")), 0);
  EXPECT_TRUE(fs::exists(kRoot / "labels/ep00000.labels.json"));
  EXPECT_EQ(run("bench --points 64 --repeats 2"), 0);
}

TEST_F(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(run(""), 1);
  EXPECT_EQ(run("frobnicate"), 1);
  EXPECT_EQ(run("infer " + path("run/model.unic") + " " + path("data/ep00000.unic") + " --drop smell"), 1);
  EXPECT_EQ(run("inspect " + path("data/ep00000.unic") + " --frame 99 --out " + path("g.ply")), 1);
  write("bad_train.json", std::string("{") + kTinyModel + R"(,"train":{"batch_size":0}})");
  EXPECT_EQ(run("train " + path("data") + " --config " + path("bad_train.json") + " --out " + path("x")), 1);
}

TEST_F(Cli, DataErrorsExitTwo) {
  EXPECT_EQ(run("eval " + path("missing.unic") + " " + path("data")), 2);
  write("junk.unic", "definitely not an episode");
  EXPECT_EQ(run("inspect " + path("junk.unic") + " --out " + path("h.ply")), 2);
  write("broken.json", "{ not json");
  EXPECT_EQ(run("train " + path("data") + " --config " + path("broken.json") + " --out " + path("y")), 2);
}

TEST_F(Cli, NumericFailureExitsThree) {
  write("nan.json", std::string("{") + kTinyModel + R"(,"train":{"epochs":3,"batch_size":2,"lr":1e300}})");
  EXPECT_EQ(run("train " + path("data") + " --config " + path("nan.json") + " --out " + path("z")), 3);
}
