#include <gtest/gtest.h>

#include <cmath>

#include "ravit/run_config.hpp"

using namespace ravit;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_run_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(RunConfig, MinimalDocumentUsesDefaults) {
  const RunConfig c = parse_run_config(R"({"model": {"layers": [1, 3]}})");
  EXPECT_EQ(c.model.dims, (std::vector<std::size_t>{16, 32}));
  EXPECT_EQ(c.model.layers, (std::vector<std::size_t>{1, 3}));
  EXPECT_EQ(c.model.thresholds, (std::vector<double>{0.0}));
  EXPECT_EQ(c.model.loss_weights, (std::vector<double>{0.5, 0.5}));
  EXPECT_EQ(c.model.embed_dim, 32u);
  EXPECT_EQ(c.model.hidden_dim, 128u);
  EXPECT_EQ(c.model.heads, 4u);
  EXPECT_EQ(c.model.patch_size, 4u);
  EXPECT_EQ(c.train, TrainConfig{});
  EXPECT_EQ(c.data, DataConfig{});
  ASSERT_EQ(c.sweep.size(), 10u);
  EXPECT_EQ(c.sweep.front(), 0.0);
  EXPECT_NEAR(c.sweep.back(), std::log(10.0), 1e-15);
}

TEST(RunConfig, FullDocument) {
  const RunConfig c = parse_run_config(R"({
    "model": {"branches": 3, "layers": [1, 1, 10], "dims": [64, 128, 224], "patch": 16, "embed": 768,
              "hidden": 3072, "heads": 12, "classes": 1000, "channels": 3, "resize": "bilinear",
              "loss_weights": [1, 1, 2]},
    "train": {"epochs": 3, "batch": 8, "lr": 0.01, "lr_min": 0.001, "betas": [0.8, 0.99], "eps": 1e-6,
              "wd": 0.05, "seed": 12345678901234, "schedule": "constant", "augment": true, "checkpoint_every": 1},
    "exit": {"thresholds": [0.2, 0.4], "sweep": [0.1, 0.2]},
    "data": {"source": "synth", "limit_train": 5, "synth": {"train_samples": 10, "test_samples": 3,
             "easy_fraction": 0.25, "amplitude": 0.3, "noise": 0.05}}
  })");
  EXPECT_EQ(c.model.dims, (std::vector<std::size_t>{64, 128, 224}));
  EXPECT_EQ(c.model.resize, ResizeMode::Bilinear);
  EXPECT_EQ(c.model.loss_weights, (std::vector<double>{1, 1, 2}));
  EXPECT_EQ(c.model.thresholds, (std::vector<double>{0.2, 0.4}));
  EXPECT_EQ(c.train.seed, 12345678901234u);
  EXPECT_EQ(c.train.schedule, Schedule::Constant);
  EXPECT_EQ(c.train.adamw.beta1, 0.8);
  EXPECT_EQ(c.train.adamw.eps, 1e-6);
  EXPECT_TRUE(c.train.augment);
  EXPECT_EQ(c.sweep, (std::vector<double>{0.1, 0.2}));
  EXPECT_EQ(c.data.test_samples, 3u);
  EXPECT_EQ(c.data.easy_fraction, 0.25);
}

TEST(RunConfig, ScalarThresholdAppliesToEveryExit) {
  const RunConfig c = parse_run_config(R"({"model": {"layers": [1, 1, 1]}, "exit": {"thresholds": 0.7}})");
  EXPECT_EQ(c.model.thresholds, (std::vector<double>{0.7, 0.7}));
}

TEST(RunConfig, RoundTripsThroughJson) {
  const RunConfig c = parse_run_config(R"({"model": {"layers": [2, 0, 3], "image_side": 64, "embed": 16,
      "heads": 2, "resize": "bilinear"}, "train": {"seed": 9, "lr": 0.0003}, "exit": {"thresholds": [0.1, 0.9]}})");
  const nlohmann::json doc = to_json(c);
  const RunConfig back = parse_run_config(doc.dump());
  EXPECT_EQ(back, c);
  EXPECT_EQ(to_json(back), doc);
}

TEST(RunConfig, UnknownKeysRejected) {
  EXPECT_NE(error_of(R"({"model": {"layers": [1]}, "extra": 1})").find("field extra"), std::string::npos);
  EXPECT_NE(error_of(R"({"model": {"layers": [1], "depth": 3}})").find("field model.depth"), std::string::npos);
  EXPECT_NE(error_of(R"({"model": {"layers": [1]}, "data": {"synth": {"size": 3}}})").find("data.synth.size"),
            std::string::npos);
}

TEST(RunConfig, FieldErrorsNameTheField) {
  EXPECT_NE(error_of(R"({"train": {}})").find("field model"), std::string::npos);
  EXPECT_NE(error_of(R"({"model": {}})").find("model.layers"), std::string::npos);
  EXPECT_NE(error_of(R"({"model": {"layers": [1, -2]}})").find("model.layers[1]"), std::string::npos);
  EXPECT_NE(error_of(R"({"model": {"layers": [1], "embed": "wide"}})").find("model.embed"), std::string::npos);
  EXPECT_NE(error_of(R"({"model": {"layers": [1, 1], "dims": [32]}})").find("model.dims"), std::string::npos);
  EXPECT_NE(error_of(R"({"model": {"layers": [1, 1], "branches": 3}})").find("model.branches"), std::string::npos);
  EXPECT_NE(error_of(R"({"model": {"layers": [1, 1]}, "exit": {"thresholds": [1, 2]}})").find("exit.thresholds"),
            std::string::npos);
  EXPECT_NE(error_of(R"({"model": {"layers": [1]}, "train": {"schedule": "step"}})").find("train.schedule"),
            std::string::npos);
  EXPECT_NE(error_of(R"({"model": {"layers": [1]}, "train": {"seed": -1}})").find("train.seed"), std::string::npos);
  EXPECT_NE(error_of(R"({"model": {"layers": [1]}, "data": {"source": "mnist"}})").find("data.source"),
            std::string::npos);
  EXPECT_NE(error_of(R"({"model": {"layers": [1]}, "data": {"source": "cifar10"}})").find("data.path"),
            std::string::npos);
  EXPECT_NE(error_of(R"({"model": {"layers": [1], "heads": 3}})").find("field model"), std::string::npos);
  EXPECT_NE(error_of(R"({"model": {"layers": [1], "resize": "lanczos"}})").find("model.resize"), std::string::npos);
}

TEST(RunConfig, SyntaxErrorsReportLineAndColumn) {
  const std::string msg = error_of("{\n  \"model\": {\n    \"layers\": [1,]\n  }\n}");
  EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
  EXPECT_NE(msg.find("column"), std::string::npos) << msg;
}

TEST(RunConfig, MissingFileIsConfigError) {
  EXPECT_THROW(load_run_config("/nonexistent/run.json"), ConfigError);
}

TEST(RunConfig, SynthSeedsFollowRunSeed) {
  RunConfig c = parse_run_config(R"({"model": {"layers": [1]}, "train": {"seed": 4}})");
  const SynthOptions train_opts = synth_options(c, true), test_opts = synth_options(c, false);
  EXPECT_NE(train_opts.seed, test_opts.seed);
  EXPECT_EQ(train_opts.seed, derive_seed(4, seed_stream::kSynthTrain));
  c.train.seed = 5;
  EXPECT_NE(synth_options(c, true).seed, train_opts.seed);
}
