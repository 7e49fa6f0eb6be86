#include <sstream>

#include <gtest/gtest.h>

#include <json.hpp>

#include "cli.hpp"
#include "fixtures.hpp"

namespace zsr::cli {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

const char* kSmallSynth = R"({"synth": {"preset": "shifted", "classes": 6, "unseen_classes": 2,
  "anchor_dim": 12, "feature_dim": 10, "latent_dim": 5, "train_per_class": 6,
  "val_per_class": 3, "test_per_class": 6, "seen_test_per_class": 2}})";

class CliTree : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = new zsr::testing::TempDir("cli");
    zsr::testing::write_file(*root_ / "small.json", kSmallSynth);
    const auto s = cli({"synth", "--config", (*root_ / "small.json").string(), "--seed", "3", "--out",
                        tree().string()});
    ASSERT_EQ(s.code, 0) << s.err;
    const auto t = cli({"train", "--config", config(), "--max-epochs", "3"});
    ASSERT_EQ(t.code, 0) << t.err;
  }
  static void TearDownTestSuite() {
    delete root_;
    root_ = nullptr;
  }
  static fs::path tree() { return *root_ / "tree"; }
  static std::string config() { return (tree() / "config.json").string(); }
  static fs::path dir(const std::string& name) { return *root_ / name; }

  static zsr::testing::TempDir* root_;
};
zsr::testing::TempDir* CliTree::root_ = nullptr;

TEST_F(CliTree, SynthPrintsManifestsAndRefusesOverwrite) {
  const auto files = zsr::testing::list_files(tree());
  EXPECT_NE(std::find(files.begin(), files.end(), "test.json"), files.end());
  EXPECT_NE(std::find(files.begin(), files.end(), "params/params.json"), files.end());
  const auto again = cli({"synth", "--seed", "3", "--out", tree().string()});
  EXPECT_EQ(again.code, 3);
  EXPECT_NE(again.err.find("--force"), std::string::npos);
}

TEST_F(CliTree, SynthIsDeterministic) {
  const auto a = cli({"synth", "--config", (*root_ / "small.json").string(), "--seed", "3", "--out",
                      dir("synth_a").string()});
  ASSERT_EQ(a.code, 0) << a.err;
  const auto files = zsr::testing::list_files(dir("synth_a"));
  for (const auto& f : files) {
    EXPECT_EQ(zsr::testing::read_file(dir("synth_a") / f), zsr::testing::read_file(tree() / f)) << f;
  }
}

TEST_F(CliTree, TrainRespectsEpochLimitAndIsDeterministic) {
  const auto a = cli({"train", "--config", config(), "--max-epochs", "1", "--out", dir("pa").string()});
  const auto b = cli({"train", "--config", config(), "--max-epochs", "1", "--out", dir("pb").string()});
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_NE(a.out.find("validation top-1: "), std::string::npos);
  const json rep = json::parse(zsr::testing::read_file(dir("pa") / "train_report.json"));
  EXPECT_EQ(rep["epochs_run"], 1);
  for (const auto& f : zsr::testing::list_files(dir("pa"))) {
    EXPECT_EQ(zsr::testing::read_file(dir("pa") / f), zsr::testing::read_file(dir("pb") / f)) << f;
  }
}

TEST_F(CliTree, RunWritesReportAndCsv) {
  const auto r = cli({"run", "--config", config(), "--out", dir("zsl").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const json rep = json::parse(zsr::testing::read_file(dir("zsl") / "report.json"));
  EXPECT_EQ(rep["protocol"], "zsl");
  EXPECT_FALSE(rep.contains("H"));
  EXPECT_TRUE(rep.contains("effective_config"));
  const std::string csv = zsr::testing::read_file(dir("zsl") / "predictions.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "sample_id,true_class,predicted_class,confidence,entropy");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + static_cast<long>(rep["n_samples"]));
}

TEST_F(CliTree, GzslReportHasHarmonicKeys) {
  const auto r = cli({"run", "--config", config(), "--protocol", "gzsl", "--out", dir("gzsl").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const json rep = json::parse(zsr::testing::read_file(dir("gzsl") / "report.json"));
  for (const char* k : {"S", "U", "H", "delta"}) EXPECT_TRUE(rep.contains(k)) << k;
  EXPECT_TRUE(fs::exists(dir("gzsl") / "calibration.csv"));
}

TEST_F(CliTree, ClosedGateMatchesTtaOff) {
  ASSERT_EQ(cli({"run", "--config", config(), "--tta", "off", "--out", dir("off").string()}).code, 0);
  ASSERT_EQ(cli({"run", "--config", config(), "--tta", "full", "--conf-threshold", "1.0", "--out",
                 dir("closed").string()})
                .code,
            0);
  EXPECT_EQ(zsr::testing::read_file(dir("off") / "predictions.csv"),
            zsr::testing::read_file(dir("closed") / "predictions.csv"));
}

TEST_F(CliTree, RunIsDeterministic) {
  for (const char* protocol : {"zsl", "gzsl"}) {
    const std::string a = dir(std::string("det_a_") + protocol).string();
    const std::string b = dir(std::string("det_b_") + protocol).string();
    ASSERT_EQ(cli({"run", "--config", config(), "--protocol", protocol, "--seed", "5", "--out", a}).code, 0);
    ASSERT_EQ(cli({"run", "--config", config(), "--protocol", protocol, "--seed", "5", "--out", b}).code, 0);
    for (const auto& f : zsr::testing::list_files(a)) {
      EXPECT_EQ(zsr::testing::read_file(fs::path(a) / f), zsr::testing::read_file(fs::path(b) / f)) << f;
    }
  }
}

TEST_F(CliTree, ZslOnSeenOnlyTreeIsProtocolViolation) {
  zsr::testing::TinyDataset spec;
  spec.seen = spec.classes;
  const auto manifest = zsr::testing::write_tiny_dataset(dir("seen_only"), spec);
  ASSERT_EQ(cli({"train", "--data", manifest.string(), "--out", dir("seen_only_params").string(),
                 "--max-epochs", "1"})
                .code,
            0);
  for (const char* protocol : {"zsl", "gzsl"}) {
    const auto r = cli({"run", "--data", manifest.string(), "--params", dir("seen_only_params").string(),
                        "--protocol", protocol, "--out", dir(std::string("so_") + protocol).string()});
    EXPECT_EQ(r.code, 4) << r.err;
  }
}

TEST_F(CliTree, InspectTensorAndManifest) {
  const auto t = cli({"inspect", (tree() / "anchors.dpt").string()});
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_NE(t.out.find("float32 6x8x12 min="), std::string::npos) << t.out;
  EXPECT_EQ(std::count(t.out.begin(), t.out.end(), '\n'), 1);
  const auto m = cli({"inspect", (tree() / "test.json").string()});
  ASSERT_EQ(m.code, 0) << m.err;
  EXPECT_NE(m.out.find("classes=6 seen=4 unseen=2 granularities=8"), std::string::npos) << m.out;
}

TEST_F(CliTree, CorruptMagicExitsFive) {
  zsr::testing::write_file(dir("bad.dpt"), "XXXX0000000000000000000000000000");
  const auto r = cli({"inspect", dir("bad.dpt").string()});
  EXPECT_EQ(r.code, 5);
  EXPECT_NE(r.err.find("bad magic"), std::string::npos) << r.err;
  EXPECT_EQ(cli({"inspect", dir("nothing.dpt").string()}).code, 1);
}

TEST(Cli, UsageErrors) {
  zsr::testing::TempDir tmp("cli_usage");
  const auto preset = cli({"synth", "--preset", "nope", "--out", (tmp / "x").string()});
  EXPECT_EQ(preset.code, 2);
  EXPECT_NE(preset.err.find("unknown preset"), std::string::npos);
  EXPECT_NE(preset.err.find("--preset"), std::string::npos);
  EXPECT_EQ(cli({}).code, 2);
  EXPECT_EQ(cli({"frobnicate"}).code, 2);
  EXPECT_EQ(cli({"run", "--tta", "sometimes", "--out", (tmp / "y").string()}).code, 2);
  EXPECT_EQ(cli({"run", "--out", (tmp / "z").string()}).code, 2);
  zsr::testing::write_file(tmp / "cfg.json", R"({"stream": {"tta": "full", "bogus": 1}})");
  const auto bad = cli({"run", "--config", (tmp / "cfg.json").string(), "--out", (tmp / "w").string()});
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.err.find("stream.bogus"), std::string::npos);
}

TEST(Cli, HelpListsFlagsWithDefaults) {
  const auto run = cli({"run", "--help"});
  EXPECT_EQ(run.code, 0);
  for (const char* s : {"--protocol", "zsl", "--tta", "full", "--conf-threshold", "0.1", "--bank-capacity",
                        "16", "--bmin", "--delta", "--seed", "--out", "--force", "--config"}) {
    EXPECT_NE(run.out.find(s), std::string::npos) << s;
  }
  const auto train = cli({"train", "--help"});
  for (const char* s : {"--partition", "adaptive", "--max-epochs", "300"}) {
    EXPECT_NE(train.out.find(s), std::string::npos) << s;
  }
  const auto synth = cli({"synth", "--help"});
  for (const char* s : {"--preset", "shifted", "--list"}) EXPECT_NE(synth.out.find(s), std::string::npos) << s;
  const auto list = cli({"synth", "--list"});
  EXPECT_EQ(list.code, 0);
  EXPECT_NE(list.out.find("imbalanced"), std::string::npos);
}

}  // namespace
}  // namespace zsr::cli
