#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ravit/dataset.hpp"
#include "ravit/ravit.hpp"

namespace ravit {

/// sum_i weights[i] * losses[i].
double total_loss(std::span<const double> losses, std::span<const double> weights);
ad::Var total_loss(std::span<const ad::Var> losses, std::span<const double> weights);

/// Loss over the active exits of one sample, weighted by config.loss_weights.
ad::Var multi_exit_loss(ad::Tape& tape, const Tensor& image, std::size_t label, const RavitConfig& config,
                        const RavitParams& params);

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.1;

  friend bool operator==(const AdamWOptions&, const AdamWOptions&) = default;
};

struct OptimizerState {
  AdamWOptions options;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::uint64_t step = 0;

  /// Zero moments mirroring `params`.
  static OptimizerState for_params(std::span<Tensor* const> params, AdamWOptions options);
};

/// One decoupled-weight-decay Adam update at learning rate `lr`:
/// p <- p * (1 - lr * wd), then p <- p - lr * mhat / (sqrt(vhat) + eps).
void adamw_step(std::span<Tensor* const> params, std::span<const Tensor> grads, OptimizerState& state, double lr);

/// lr_min + (lr_max - lr_min) * (1 + cos(pi * t / T)) / 2; t beyond T gives lr_min.
double cosine_lr(std::uint64_t t, std::uint64_t total, double lr_max, double lr_min);

enum class Schedule { Cosine, Constant };

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
  double lr = 1e-3;
  double lr_min = 0.0;
  Schedule schedule = Schedule::Cosine;
  AdamWOptions adamw;
  bool augment = false;
  std::size_t checkpoint_every = 0;  // epochs; 0 disables intermediate checkpoints

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  /// Training-pass accuracy per branch; NaN for zero-layer branches.
  std::vector<double> exit_accuracy;
};

/// CSV epoch,lr,loss,exit1_acc,...,exitB_acc.
std::string render_train_log(std::span<const EpochLog> log, std::size_t branches);

struct TrainCallbacks {
  std::function<void(const EpochLog&)> on_epoch;
  std::function<void(std::size_t epoch, const RavitParams&)> on_checkpoint;
};

struct TrainResult {
  RavitParams params;
  std::vector<EpochLog> log;
};

/// Independent stream derived from the run seed (splitmix64 of seed + stream).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

namespace seed_stream {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kShuffle = 2;
inline constexpr std::uint64_t kSynthTrain = 3;
inline constexpr std::uint64_t kSynthTest = 4;
}  // namespace seed_stream

/// Minibatch AdamW on the multi-exit loss. Deterministic for a given seed:
/// samples in a batch are processed in order and gradients summed in that
/// order. Throws NumericError if a loss or gradient becomes non-finite.
TrainResult train(const RavitConfig& config, const TrainConfig& train_config, const Dataset& dataset,
                  const TrainCallbacks& callbacks = {});

/// Same, starting from the given parameters.
TrainResult train(const RavitConfig& config, const TrainConfig& train_config, const Dataset& dataset,
                  RavitParams initial, const TrainCallbacks& callbacks = {});

}  // namespace ravit
