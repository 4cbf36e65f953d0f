#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "ravit/dataset.hpp"
#include "ravit/model_config.hpp"
#include "ravit/training.hpp"

namespace ravit {

struct DataConfig {
  std::string source = "synth";  // "synth" or "cifar10"
  std::string path;              // cifar10 directory
  std::size_t limit_train = 0;   // 0 = all records
  std::size_t limit_test = 0;
  std::size_t train_samples = 1000;
  std::size_t test_samples = 400;
  double easy_fraction = 0.5;
  double amplitude = 0.2;
  double noise = 0.1;

  friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

/// Parsed run configuration document.
///
/// Sections and defaults:
///   model: layers (required), branches (= len(layers)), image_side 32,
///          dims (factor-2 pyramid ending at image_side), patch 4, embed 32,
///          hidden 128, heads 4, classes 10, channels 3, resize "box",
///          loss_weights (1/B each)
///   train: epochs 10, batch 32, lr 1e-3, lr_min 0, betas [0.9, 0.999],
///          eps 1e-8, wd 0.1, seed 1, schedule "cosine", augment false,
///          checkpoint_every 0
///   exit:  thresholds (number applied to every exit, or B-1 values; 0),
///          sweep (10 evenly spaced values over [0, ln(classes)])
///   data:  source "synth", path "", limit_train 0, limit_test 0,
///          synth { train_samples 1000, test_samples 400, easy_fraction 0.5,
///                  amplitude 0.2, noise 0.1 }
/// Unknown keys are rejected.
struct RunConfig {
  RavitConfig model;
  TrainConfig train;
  std::vector<double> sweep;
  DataConfig data;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Throws ConfigError naming the offending field, or the line and column of
/// a syntax error.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Fully expanded document (every default written out).
nlohmann::json to_json(const RunConfig& config);

std::vector<double> default_sweep(std::size_t num_classes, std::size_t points = 10);

/// Synthetic options for the train or test split of a run.
SynthOptions synth_options(const RunConfig& config, bool train_split);

/// Loads the train or test split the data section describes.
Dataset load_split(const RunConfig& config, bool train_split);

}  // namespace ravit
