#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ravit/vit.hpp"

namespace ravit {

enum class ResizeMode { Box, Bilinear };

std::string to_string(ResizeMode mode);
ResizeMode parse_resize_mode(const std::string& name);

/// Architecture of a multi-branch model: one encoder per resolution, all
/// sharing patch size, width and class count.
///
/// Branch indices are 0-based in code; branch i runs on dims[i] x dims[i]
/// inputs with layers[i] transformer layers. A branch with zero layers is
/// skipped entirely (no resize, no head, no cost).
struct RavitConfig {
  std::vector<std::size_t> dims;
  std::vector<std::size_t> layers;
  /// Exit thresholds in nats for branches 0..B-2; the last branch always exits.
  std::vector<double> thresholds;
  std::vector<double> loss_weights;

  std::size_t patch_size = 4;
  std::size_t channels = 3;
  std::size_t embed_dim = 32;
  std::size_t hidden_dim = 128;
  std::size_t heads = 4;
  std::size_t num_classes = 10;
  ResizeMode resize = ResizeMode::Box;

  /// B branches over side, side/2, ..., side/2^(B-1) (coarsest first), with
  /// uniform loss weights 1/B and exits disabled (thresholds 0).
  static RavitConfig pyramid(std::size_t side, std::vector<std::size_t> layers);

  std::size_t branches() const { return dims.size(); }
  std::size_t image_side() const { return dims.empty() ? 0 : dims.back(); }
  /// Encoder geometry of one branch.
  vit::EncoderConfig encoder(std::size_t branch) const;
  /// Branches with at least one layer, in order.
  std::vector<std::size_t> active_branches() const;

  /// Throws DimensionError / ContractError for inconsistent settings.
  void validate() const;

  friend bool operator==(const RavitConfig&, const RavitConfig&) = default;
};

/// Canonical factor-2 pyramid dims ending at `side`.
std::vector<std::size_t> default_dims(std::size_t side, std::size_t branches);

}  // namespace ravit
