#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ravit/checkpoint.hpp"
#include "ravit/dataset.hpp"
#include "ravit/model_config.hpp"
#include "ravit/tape.hpp"
#include "ravit/vit.hpp"

namespace ravit {

/// One encoder per branch; zero-layer branches hold no parameters.
struct RavitParams {
  std::vector<std::optional<vit::EncoderParams>> branches;

  static RavitParams init(const RavitConfig& config, Rng& rng);
  static RavitParams zeros(const RavitConfig& config);

  template <typename F>
  void for_each(F&& f) {
    for (std::size_t i = 0; i < branches.size(); ++i)
      if (branches[i]) branches[i]->for_each("branch" + std::to_string(i + 1) + ".", f);
  }
  template <typename F>
  void for_each(F&& f) const {
    for (std::size_t i = 0; i < branches.size(); ++i)
      if (branches[i]) branches[i]->for_each("branch" + std::to_string(i + 1) + ".", f);
  }

  std::vector<Tensor*> tensors();
  std::size_t parameter_count() const;

  /// Throws ContractError unless every branch matches the config's shapes.
  void check(const RavitConfig& config) const;
};

/// Resizes a [C, S, S] image to [C, target, target]. Box mode averages
/// S/target x S/target blocks and requires an integer factor; bilinear uses
/// half-pixel centers with edge clamping.
Tensor resize(const Tensor& image, std::size_t target, ResizeMode mode = ResizeMode::Box);

/// Images for every branch, coarsest first. Zero-layer branches get an empty tensor.
std::vector<Tensor> build_pyramid(const Tensor& image, const RavitConfig& config);

/// Trace of one adaptive forward pass. Vectors run over branches 0..exit_branch;
/// skipped (zero-layer) branches hold nullopt.
struct ExitRecord {
  std::size_t exit_branch = 0;
  std::size_t predicted_class = 0;
  std::vector<std::optional<double>> entropy;
  std::vector<std::optional<Vector>> logits;
  std::uint64_t macs_spent = 0;
};

/// Entropy (nats) of softmax(logits).
double prediction_entropy(const Vector& logits);

/// A sample leaves at branch i when its entropy is strictly below the threshold.
inline bool exits_at(double entropy, double threshold) { return entropy < threshold; }

struct InferOptions {
  /// Replaces config.thresholds (B-1 entries) when set.
  std::optional<std::vector<double>> thresholds;
  /// Forces every sample through the last active branch.
  bool disable_exits = false;
};

/// Adaptive inference: branches run coarse to fine, each seeded with the
/// previous branch's CLS output, stopping at the first branch whose exit
/// entropy is under its threshold. The last active branch always exits.
/// macs_spent is measured by the matmul counter over transformer layers.
ExitRecord infer(const Tensor& image, const RavitConfig& config, const RavitParams& params,
                 const InferOptions& options = {});

struct ExitOutput {
  std::size_t branch = 0;
  ad::Var logits;
};

/// Every active branch, unconditionally, recorded on `tape` for training.
std::vector<ExitOutput> forward_all_exits(ad::Tape& tape, const Tensor& image, const RavitConfig& config,
                                          const RavitParams& params);

/// Value-level forward_all_exits; entry i is nullopt for skipped branches.
std::vector<std::optional<Vector>> forward_all_exits(const Tensor& image, const RavitConfig& config,
                                                     const RavitParams& params);

struct ExitRow {
  double threshold = 0.0;
  std::vector<std::uint64_t> exit_counts;  // S_1..S_B
  double accuracy = 0.0;
  double expected_flops = 0.0;
};

/// Applies each threshold uniformly to all exits over the dataset. Rows are
/// sorted by threshold. Every sample runs all branches once; exits are then
/// decided with the same rule infer() applies incrementally.
std::vector<ExitRow> exit_distribution(const Dataset& dataset, const RavitConfig& config, const RavitParams& params,
                                       std::span<const double> thresholds);

/// CSV threshold,s1,...,sB,accuracy,expected_flops.
std::string render_exit_csv(std::span<const ExitRow> rows, std::size_t branches);

struct EvalSummary {
  std::size_t samples = 0;
  std::size_t correct = 0;
  std::vector<std::uint64_t> exit_counts;
  std::uint64_t macs_spent = 0;  // summed over samples
  double accuracy() const { return samples ? static_cast<double>(correct) / static_cast<double>(samples) : 0.0; }
};

/// Runs infer() on every sample.
EvalSummary evaluate(const Dataset& dataset, const RavitConfig& config, const RavitParams& params,
                     const InferOptions& options = {});

// --- Model checkpoints ------------------------------------------------------

/// Config header fields: B, patch, channels, embed, hidden, heads, classes,
/// dims[B], layers[B].
std::vector<std::uint32_t> checkpoint_fields(const RavitConfig& config);
Checkpoint to_checkpoint(const RavitConfig& config, const RavitParams& params);
/// Throws ContractError listing every header field that differs from `config`.
RavitParams from_checkpoint(const Checkpoint& checkpoint, const RavitConfig& config);

}  // namespace ravit
