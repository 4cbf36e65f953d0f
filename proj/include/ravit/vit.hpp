#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "ravit/rng.hpp"
#include "ravit/tape.hpp"
#include "ravit/tensor.hpp"

namespace ravit::vit {

inline constexpr double kLayerNormEps = 1e-6;

struct EncoderConfig {
  std::size_t image_side = 32;
  std::size_t patch_size = 4;
  std::size_t channels = 3;
  std::size_t embed_dim = 32;
  std::size_t hidden_dim = 128;
  std::size_t heads = 4;
  std::size_t layers = 1;
  std::size_t num_classes = 10;

  std::size_t grid() const { return image_side / patch_size; }
  std::size_t num_patches() const { return grid() * grid(); }
  /// Patches plus the CLS slot.
  std::size_t sequence_length() const { return num_patches() + 1; }
  std::size_t patch_dim() const { return patch_size * patch_size * channels; }

  /// Throws DimensionError on indivisible sizes or zero dimensions.
  void validate() const;

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct LayerParams {
  Tensor ln1_gamma, ln1_beta;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln2_gamma, ln2_beta;
  Tensor w1, b1, w2, b2;

  static LayerParams zeros(std::size_t embed_dim, std::size_t hidden_dim);

  template <typename F>
  void for_each(const std::string& prefix, F&& f) {
    f(prefix + "ln1.gamma", ln1_gamma);
    f(prefix + "ln1.beta", ln1_beta);
    f(prefix + "attn.q.weight", wq);
    f(prefix + "attn.q.bias", bq);
    f(prefix + "attn.k.weight", wk);
    f(prefix + "attn.k.bias", bk);
    f(prefix + "attn.v.weight", wv);
    f(prefix + "attn.v.bias", bv);
    f(prefix + "attn.o.weight", wo);
    f(prefix + "attn.o.bias", bo);
    f(prefix + "ln2.gamma", ln2_gamma);
    f(prefix + "ln2.beta", ln2_beta);
    f(prefix + "mlp.in.weight", w1);
    f(prefix + "mlp.in.bias", b1);
    f(prefix + "mlp.out.weight", w2);
    f(prefix + "mlp.out.bias", b2);
  }
};

struct HeadParams {
  Tensor weight;  // embed_dim x num_classes
  Tensor bias;    // num_classes
};

/// All weights of one encoder plus its exit head. Projection weights are
/// stored input-major (x * W), so a patch weight is patch_dim x embed_dim.
struct EncoderParams {
  Tensor patch_weight, patch_bias;
  Tensor pos_embed;  // sequence_length x embed_dim
  Tensor cls_token;  // embed_dim
  std::vector<LayerParams> layers;
  Tensor norm_gamma, norm_beta;
  HeadParams head;

  /// Correctly shaped parameters: zero weights, unit LN scales.
  static EncoderParams zeros(const EncoderConfig& config);
  /// Xavier-uniform projections, N(0, 0.02) positional and CLS embeddings.
  static EncoderParams init(const EncoderConfig& config, Rng& rng);

  template <typename F>
  void for_each(const std::string& prefix, F&& f) {
    f(prefix + "patch.weight", patch_weight);
    f(prefix + "patch.bias", patch_bias);
    f(prefix + "pos_embed", pos_embed);
    f(prefix + "cls_token", cls_token);
    for (std::size_t i = 0; i < layers.size(); ++i) {
      layers[i].for_each(prefix + "layers." + std::to_string(i) + ".", f);
    }
    f(prefix + "norm.gamma", norm_gamma);
    f(prefix + "norm.beta", norm_beta);
    f(prefix + "head.weight", head.weight);
    f(prefix + "head.bias", head.bias);
  }
  template <typename F>
  void for_each(const std::string& prefix, F&& f) const {
    const_cast<EncoderParams*>(this)->for_each(prefix, [&f](const std::string& name, Tensor& t) {
      f(name, static_cast<const Tensor&>(t));
    });
  }

  std::size_t parameter_count() const;
};

/// [C, S, S] image -> [(S/P)^2, P*P*C]. Patches run row-major over the grid;
/// inside a patch values are channel-major, then row-major.
Tensor patchify(const Tensor& image, std::size_t patch);
/// Inverse of patchify.
Tensor unpatchify(const Tensor& patches, std::size_t channels, std::size_t side, std::size_t patch);

// --- Recorded forward pass -------------------------------------------------

/// Projects patches and prepends the CLS slot, then adds positional
/// embeddings to every row. `cls_in`, when given, replaces the learned token.
ad::Var embed(ad::Tape& tape, const Tensor& patches, const EncoderParams& params,
              const std::optional<ad::Var>& cls_in = std::nullopt);

/// Pre-norm block: x + MHSA(LN1(x)), then + MLP(LN2(.)).
ad::Var attention_layer(ad::Tape& tape, const ad::Var& x, const LayerParams& layer, std::size_t heads);

struct Encoded {
  ad::Var tokens;  // after the transformer layers, before the final norm
  ad::Var cls;     // final norm applied to token 0, 1 x embed_dim
};

/// Runs the first `layers` transformer layers of `params` over `image`.
Encoded encode(ad::Tape& tape, const Tensor& image, const std::optional<ad::Var>& cls_in,
               const EncoderParams& params, const EncoderConfig& config, std::size_t layers);

/// Single affine exit head.
ad::Var classify(ad::Tape& tape, const ad::Var& cls, const HeadParams& head);

// --- Value-level wrappers over the same code path --------------------------

Matrix embed(const Tensor& patches, const EncoderParams& params, const std::optional<Vector>& cls_in = std::nullopt);
Matrix attention_layer(const Matrix& x, const LayerParams& layer, std::size_t heads);

struct EncodeResult {
  Matrix tokens;
  Vector cls;
};
EncodeResult encode(const Tensor& image, const std::optional<Vector>& cls_in, const EncoderParams& params,
                    const EncoderConfig& config, std::size_t layers);
Vector classify(const Vector& cls, const HeadParams& head);

}  // namespace ravit::vit
