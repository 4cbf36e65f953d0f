#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "commands.hpp"
#include "ravit/dataset.hpp"

namespace fs = std::filesystem;
using namespace ravit;

namespace {

const fs::path kConfigs = fs::path(RAVIT_SOURCE_DIR) / "configs";

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result invoke(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string config(const std::string& name) { return (kConfigs / name).string(); }

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class TempDir {
 public:
  explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / name) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

void write_file(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

const char* kTinyRun = R"({
  "model": {"layers": [1, 1], "image_side": 16, "embed": 8, "hidden": 16, "heads": 2, "classes": 4},
  "train": {"epochs": 2, "batch": 8, "seed": 3},
  "exit": {"thresholds": 0.8, "sweep": [0, 0.5, 1.0, 1.4]},
  "data": {"synth": {"train_samples": 24, "test_samples": 20}}
})";

std::string field(const std::string& report, const std::string& key) {
  std::istringstream in(report);
  std::string line;
  while (std::getline(in, line))
    if (line.rfind(key + ' ', 0) == 0) return line.substr(key.size() + 1);
  return "";
}

}  // namespace

TEST(Cli, CostReportsReferenceTotals) {
  const Result vit4 = invoke({"cost", "--config", config("cifar_vit4.json")});
  ASSERT_EQ(vit4.code, 0) << vit4.err;
  EXPECT_NE(vit4.out.find("total 110.88 MFLOPs"), std::string::npos) << vit4.out;
  const Result big = invoke({"cost", "--config", config("imagenet_ravit_1_1_10.json")});
  ASSERT_EQ(big.code, 0) << big.err;
  EXPECT_NE(big.out.find("total 30.25 GFLOPs"), std::string::npos) << big.out;
}

TEST(Cli, CostOfZeroLayerModel) {
  TempDir dir("ravit_cli_zero");
  write_file(dir.file("zero.json"), R"({"model": {"layers": [0, 0]}})");
  const Result r = invoke({"cost", "--config", dir.file("zero.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("total 0.00 MFLOPs"), std::string::npos) << r.out;
}

TEST(Cli, CostWritesCsv) {
  TempDir dir("ravit_cli_cost_csv");
  const Result r = invoke({"cost", "--config", config("cifar_ravit_1_3.json"), "--out", dir.file("cost.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string csv = read_file(dir.file("cost.csv"));
  EXPECT_NE(csv.find("2,32,65,3,13861120,41583360,89999360\n"), std::string::npos) << csv;
}

TEST(Cli, SweepGrid) {
  const Result r = invoke({"sweep", "--config", config("cifar_ravit_1_3.json"), "--ranges", "0:3,0:7"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream in(r.out);
  std::string line;
  std::vector<std::string> rows;
  while (std::getline(in, line)) rows.push_back(line);
  ASSERT_EQ(rows.size(), 33u);
  EXPECT_EQ(rows[0], "l1,l2,mflops");
  EXPECT_EQ(rows[1], "0,0,0.00");
  EXPECT_NE(std::find(rows.begin(), rows.end(), "1,3,89.99"), rows.end());
}

TEST(Cli, SweepRejectsBadRanges) {
  EXPECT_EQ(invoke({"sweep", "--config", config("cifar_ravit_1_3.json"), "--ranges", "3:1,0:2"}).code, 2);
  EXPECT_EQ(invoke({"sweep", "--config", config("cifar_ravit_1_3.json"), "--ranges", "0:1"}).code, 2);
  EXPECT_EQ(invoke({"sweep", "--config", config("cifar_ravit_1_3.json")}).code, 2);
  EXPECT_THROW(cli::parse_ranges("1:x"), ConfigError);
  const auto single = cli::parse_ranges("2,0:4");
  ASSERT_EQ(single.size(), 2u);
  EXPECT_EQ(single[0].first, 2u);
  EXPECT_EQ(single[0].last, 2u);
  EXPECT_EQ(single[1].last, 4u);
}

TEST(Cli, ExitCodes) {
  TempDir dir("ravit_cli_codes");
  EXPECT_EQ(invoke({"cost", "--config", "/nonexistent.json"}).code, 2);
  write_file(dir.file("bad.json"), R"({"model": {"layers": [1], "color": 1}})");
  const Result bad = invoke({"cost", "--config", dir.file("bad.json")});
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.err.find("model.color"), std::string::npos) << bad.err;
  EXPECT_EQ(invoke({"frobnicate"}).code, 2);
  EXPECT_EQ(invoke({"cost"}).code, 2);
  EXPECT_EQ(invoke({"cost", "--config", config("cifar_vit3.json"), "--seed", "abc"}).code, 2);
  EXPECT_EQ(invoke({"--help"}).code, 0);

  write_file(dir.file("tiny.json"), kTinyRun);
  EXPECT_EQ(invoke({"eval", "--config", dir.file("tiny.json"), "--checkpoint", dir.file("missing.bin")}).code, 3);
  write_file(dir.file("garbage.bin"), "not a checkpoint");
  EXPECT_EQ(invoke({"eval", "--config", dir.file("tiny.json"), "--checkpoint", dir.file("garbage.bin")}).code, 3);
  EXPECT_EQ(invoke({"eval", "--config", dir.file("tiny.json")}).code, 2);
  EXPECT_EQ(invoke({"train", "--config", dir.file("tiny.json")}).code, 2);

  write_file(dir.file("cifar.json"),
             R"({"model": {"layers": [1]}, "data": {"source": "cifar10", "path": ")" + dir.file("none") + R"("}})");
  EXPECT_EQ(invoke({"train", "--config", dir.file("cifar.json"), "--out", dir.file("c.bin")}).code, 3);
}

TEST(Cli, TrainEvalExitdistPipeline) {
  TempDir dir("ravit_cli_pipeline");
  write_file(dir.file("tiny.json"), kTinyRun);
  const std::string cfg = dir.file("tiny.json"), ckpt = dir.file("model.bin");
  const Result trained = invoke({"train", "--config", cfg, "--out", ckpt, "--log", dir.file("log.csv")});
  ASSERT_EQ(trained.code, 0) << trained.err;
  const std::string log = read_file(dir.file("log.csv"));
  EXPECT_EQ(log.substr(0, log.find('\n')), "epoch,lr,loss,exit1_acc,exit2_acc");
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 3);

  const Result e1 = invoke({"eval", "--config", cfg, "--checkpoint", ckpt});
  const Result e2 = invoke({"eval", "--config", cfg, "--checkpoint", ckpt});
  ASSERT_EQ(e1.code, 0) << e1.err;
  EXPECT_EQ(e1.out, e2.out);
  EXPECT_EQ(field(e1.out, "samples"), "20");

  const Result d1 = invoke({"exitdist", "--config", cfg, "--checkpoint", ckpt});
  const Result d2 = invoke({"exitdist", "--config", cfg, "--checkpoint", ckpt});
  ASSERT_EQ(d1.code, 0) << d1.err;
  EXPECT_EQ(d1.out, d2.out);
  EXPECT_EQ(std::count(d1.out.begin(), d1.out.end(), '\n'), 5);

  // Threshold 0 never exits early, so it matches the exits-disabled run.
  const Result zero = invoke({"eval", "--config", cfg, "--checkpoint", ckpt, "--threshold", "0"});
  const Result full = invoke({"eval", "--config", cfg, "--checkpoint", ckpt, "--no-exits"});
  EXPECT_EQ(field(zero.out, "accuracy"), field(full.out, "accuracy"));
  EXPECT_EQ(field(zero.out, "exit_counts"), "0 20");
  EXPECT_EQ(field(zero.out, "expected_flops"), field(zero.out, "measured_flops"));

  // A checkpoint built for a different architecture is a config mismatch.
  write_file(dir.file("other.json"), R"({"model": {"layers": [1, 2], "image_side": 16, "embed": 8, "hidden": 16,
      "heads": 2, "classes": 4}})");
  const Result mismatch = invoke({"eval", "--config", dir.file("other.json"), "--checkpoint", ckpt});
  EXPECT_EQ(mismatch.code, 2);
  EXPECT_NE(mismatch.err.find("layers"), std::string::npos) << mismatch.err;
}

TEST(Cli, TrainIsDeterministicAndSeedOverrides) {
  TempDir dir("ravit_cli_determinism");
  write_file(dir.file("tiny.json"), kTinyRun);
  const std::string cfg = dir.file("tiny.json");
  ASSERT_EQ(invoke({"train", "--config", cfg, "--out", dir.file("a.bin")}).code, 0);
  ASSERT_EQ(invoke({"train", "--config", cfg, "--out", dir.file("b.bin")}).code, 0);
  ASSERT_EQ(invoke({"train", "--config", cfg, "--out", dir.file("c.bin"), "--seed", "3"}).code, 0);
  ASSERT_EQ(invoke({"train", "--config", cfg, "--out", dir.file("d.bin"), "--seed", "4"}).code, 0);
  EXPECT_EQ(read_file(dir.file("a.bin")), read_file(dir.file("b.bin")));
  EXPECT_EQ(read_file(dir.file("a.bin")), read_file(dir.file("c.bin")));
  EXPECT_NE(read_file(dir.file("a.bin")), read_file(dir.file("d.bin")));
}

TEST(Cli, SynthWritesCifarLayout) {
  TempDir dir("ravit_cli_synth");
  write_file(dir.file("tiny.json"), R"({"model": {"layers": [1]}, "data": {"synth": {"train_samples": 7,
      "test_samples": 5}}})");
  const Result r = invoke({"synth", "--config", dir.file("tiny.json"), "--out", dir.file("data")});
  ASSERT_EQ(r.code, 0) << r.err;
  const Dataset train = load_cifar10_split(dir.file("data"), true);
  const Dataset test = load_cifar10_split(dir.file("data"), false);
  EXPECT_EQ(train.size(), 7u);
  EXPECT_EQ(test.size(), 5u);
  EXPECT_EQ(fs::file_size(dir.file("data/data_batch_1.bin")), 7 * kCifarRecordBytes);
}

TEST(Cli, SweepWithTraining) {
  TempDir dir("ravit_cli_sweep_train");
  write_file(dir.file("tiny.json"), R"({
    "model": {"layers": [1, 1], "image_side": 16, "embed": 8, "hidden": 16, "heads": 2, "classes": 4},
    "train": {"epochs": 1, "batch": 8},
    "data": {"synth": {"train_samples": 8, "test_samples": 6}}})");
  const Result r = invoke({"sweep", "--config", dir.file("tiny.json"), "--ranges", "0:1,1", "--train"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream in(r.out);
  std::string header, row0, row1;
  std::getline(in, header);
  std::getline(in, row0);
  std::getline(in, row1);
  EXPECT_EQ(header, "l1,l2,mflops,accuracy");
  EXPECT_EQ(row0.substr(0, 4), "0,1,");
  EXPECT_EQ(row1.substr(0, 4), "1,1,");
  EXPECT_NE(row0.back(), ',');
}
