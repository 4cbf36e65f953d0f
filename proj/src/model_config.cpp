#include "ravit/model_config.hpp"

#include <cmath>

namespace ravit {

std::string to_string(ResizeMode mode) { return mode == ResizeMode::Box ? "box" : "bilinear"; }

ResizeMode parse_resize_mode(const std::string& name) {
  if (name == "box") return ResizeMode::Box;
  if (name == "bilinear") return ResizeMode::Bilinear;
  throw ContractError("unknown resize mode '" + name + "' (expected box or bilinear)");
}

std::vector<std::size_t> default_dims(std::size_t side, std::size_t branches) {
  std::vector<std::size_t> dims(branches);
  for (std::size_t i = 0; i < branches; ++i) {
    const std::size_t shift = branches - 1 - i;
    if (shift >= 63 || side % (std::size_t{1} << shift) != 0) {
      throw DimensionError("side " + std::to_string(side) + " does not halve evenly " + std::to_string(shift) +
                           " times");
    }
    dims[i] = side >> shift;
  }
  return dims;
}

RavitConfig RavitConfig::pyramid(std::size_t side, std::vector<std::size_t> layers) {
  RavitConfig c;
  const std::size_t b = layers.size();
  c.dims = default_dims(side, b);
  c.layers = std::move(layers);
  c.thresholds.assign(b == 0 ? 0 : b - 1, 0.0);
  c.loss_weights.assign(b, b == 0 ? 0.0 : 1.0 / static_cast<double>(b));
  return c;
}

vit::EncoderConfig RavitConfig::encoder(std::size_t branch) const {
  vit::EncoderConfig e;
  e.image_side = dims.at(branch);
  e.patch_size = patch_size;
  e.channels = channels;
  e.embed_dim = embed_dim;
  e.hidden_dim = hidden_dim;
  e.heads = heads;
  e.layers = layers.at(branch);
  e.num_classes = num_classes;
  return e;
}

std::vector<std::size_t> RavitConfig::active_branches() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (layers[i] > 0) out.push_back(i);
  return out;
}

void RavitConfig::validate() const {
  const std::size_t b = dims.size();
  if (b == 0) throw ContractError("model: at least one branch is required");
  if (layers.size() != b) {
    throw ContractError("model: " + std::to_string(layers.size()) + " layer counts for " + std::to_string(b) +
                        " branches");
  }
  if (thresholds.size() != b - 1) {
    throw ContractError("exit: expected " + std::to_string(b - 1) + " thresholds, got " +
                        std::to_string(thresholds.size()));
  }
  if (loss_weights.size() != b) {
    throw ContractError("model: expected " + std::to_string(b) + " loss weights, got " +
                        std::to_string(loss_weights.size()));
  }
  for (std::size_t i = 0; i < b; ++i) {
    if (i > 0 && dims[i] <= dims[i - 1]) throw DimensionError("model: branch dims must be strictly increasing");
    encoder(i).validate();
  }
  for (double t : thresholds)
    if (std::isnan(t)) throw ContractError("exit: threshold is NaN");
  double total = 0.0;
  for (double w : loss_weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ContractError("model: loss weights must be finite and >= 0");
    total += w;
  }
  if (total <= 0.0) throw ContractError("model: loss weights sum to zero");
}

}  // namespace ravit
