#include "ravit/vit.hpp"

#include <cmath>

namespace ravit::vit {

void EncoderConfig::validate() const {
  if (image_side == 0 || patch_size == 0 || channels == 0 || embed_dim == 0 || hidden_dim == 0 || heads == 0 ||
      num_classes == 0) {
    throw DimensionError("encoder config: all sizes must be positive");
  }
  if (image_side % patch_size != 0) {
    throw DimensionError("encoder config: image side " + std::to_string(image_side) +
                         " not divisible by patch size " + std::to_string(patch_size));
  }
  if (embed_dim % heads != 0) {
    throw DimensionError("encoder config: embed dim " + std::to_string(embed_dim) + " not divisible by " +
                         std::to_string(heads) + " heads");
  }
}

LayerParams LayerParams::zeros(std::size_t d, std::size_t hidden) {
  LayerParams p;
  p.ln1_gamma = Tensor({d}, 1.0);
  p.ln1_beta = Tensor({d});
  p.wq = Tensor({d, d});
  p.bq = Tensor({d});
  p.wk = Tensor({d, d});
  p.bk = Tensor({d});
  p.wv = Tensor({d, d});
  p.bv = Tensor({d});
  p.wo = Tensor({d, d});
  p.bo = Tensor({d});
  p.ln2_gamma = Tensor({d}, 1.0);
  p.ln2_beta = Tensor({d});
  p.w1 = Tensor({d, hidden});
  p.b1 = Tensor({hidden});
  p.w2 = Tensor({hidden, d});
  p.b2 = Tensor({d});
  return p;
}

EncoderParams EncoderParams::zeros(const EncoderConfig& config) {
  config.validate();
  const std::size_t d = config.embed_dim;
  EncoderParams p;
  p.patch_weight = Tensor({config.patch_dim(), d});
  p.patch_bias = Tensor({d});
  p.pos_embed = Tensor({config.sequence_length(), d});
  p.cls_token = Tensor({d});
  for (std::size_t i = 0; i < config.layers; ++i) p.layers.push_back(LayerParams::zeros(d, config.hidden_dim));
  p.norm_gamma = Tensor({d}, 1.0);
  p.norm_beta = Tensor({d});
  p.head.weight = Tensor({d, config.num_classes});
  p.head.bias = Tensor({config.num_classes});
  return p;
}

namespace {

void xavier(Tensor& w, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(w.dim(0) + w.dim(1)));
  for (double& v : w.data()) v = rng.uniform(-limit, limit);
}

void normal(Tensor& t, Rng& rng, double stddev) {
  for (double& v : t.data()) v = rng.normal(0.0, stddev);
}

}  // namespace

EncoderParams EncoderParams::init(const EncoderConfig& config, Rng& rng) {
  EncoderParams p = zeros(config);
  xavier(p.patch_weight, rng);
  normal(p.pos_embed, rng, 0.02);
  normal(p.cls_token, rng, 0.02);
  for (LayerParams& layer : p.layers) {
    for (Tensor* w : {&layer.wq, &layer.wk, &layer.wv, &layer.wo, &layer.w1, &layer.w2}) xavier(*w, rng);
  }
  xavier(p.head.weight, rng);
  return p;
}

std::size_t EncoderParams::parameter_count() const {
  std::size_t n = 0;
  for_each("", [&n](const std::string&, const Tensor& t) { n += t.size(); });
  return n;
}

Tensor patchify(const Tensor& image, std::size_t patch) {
  if (image.rank() != 3 || image.dim(1) != image.dim(2)) {
    throw DimensionError("patchify: expected a square [C,S,S] image, got " + shape_string(image.shape()));
  }
  const std::size_t channels = image.dim(0), side = image.dim(1);
  if (patch == 0 || side % patch != 0) {
    throw DimensionError("patchify: side " + std::to_string(side) + " not divisible by patch " +
                         std::to_string(patch));
  }
  const std::size_t grid = side / patch;
  Tensor out({grid * grid, patch * patch * channels});
  auto src = image.data();
  auto dst = out.data();
  std::size_t k = 0;
  for (std::size_t gy = 0; gy < grid; ++gy)
    for (std::size_t gx = 0; gx < grid; ++gx)
      for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t py = 0; py < patch; ++py)
          for (std::size_t px = 0; px < patch; ++px)
            dst[k++] = src[(c * side + gy * patch + py) * side + gx * patch + px];
  return out;
}

Tensor unpatchify(const Tensor& patches, std::size_t channels, std::size_t side, std::size_t patch) {
  if (patch == 0 || side % patch != 0) throw DimensionError("unpatchify: side not divisible by patch");
  const std::size_t grid = side / patch;
  if (patches.rank() != 2 || patches.dim(0) != grid * grid || patches.dim(1) != patch * patch * channels) {
    throw DimensionError("unpatchify: patch tensor shape " + shape_string(patches.shape()) +
                         " does not match the image geometry");
  }
  Tensor image({channels, side, side});
  auto src = patches.data();
  auto dst = image.data();
  std::size_t k = 0;
  for (std::size_t gy = 0; gy < grid; ++gy)
    for (std::size_t gx = 0; gx < grid; ++gx)
      for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t py = 0; py < patch; ++py)
          for (std::size_t px = 0; px < patch; ++px)
            dst[(c * side + gy * patch + py) * side + gx * patch + px] = src[k++];
  return image;
}

ad::Var embed(ad::Tape& tape, const Tensor& patches, const EncoderParams& params,
              const std::optional<ad::Var>& cls_in) {
  const std::size_t d = params.cls_token.size();
  if (patches.rank() != 2 || patches.dim(1) != params.patch_weight.dim(0)) {
    throw DimensionError("embed: patch width does not match the projection");
  }
  if (patches.dim(0) + 1 != params.pos_embed.dim(0)) {
    throw DimensionError("embed: " + std::to_string(patches.dim(0)) + " patches but positional table has " +
                         std::to_string(params.pos_embed.dim(0)) + " rows");
  }
  if (cls_in && (cls_in->rows() != 1 || static_cast<std::size_t>(cls_in->cols()) != d)) {
    throw DimensionError("embed: injected CLS must be 1 x " + std::to_string(d));
  }
  CountingPause pause;
  ad::Var projected = ad::linear(tape.constant(patches.matrix()), tape.parameter(params.patch_weight),
                                 tape.parameter(params.patch_bias));
  ad::Var cls = cls_in ? *cls_in : tape.parameter(params.cls_token);
  return ad::add(ad::vstack(cls, projected), tape.parameter(params.pos_embed));
}

ad::Var attention_layer(ad::Tape& tape, const ad::Var& x, const LayerParams& p, std::size_t heads) {
  auto param = [&tape](const Tensor& t) { return tape.parameter(t); };
  ad::Var h = ad::layer_norm(x, param(p.ln1_gamma), param(p.ln1_beta), kLayerNormEps);
  ad::Var q = ad::linear(h, param(p.wq), param(p.bq));
  ad::Var k = ad::linear(h, param(p.wk), param(p.bk));
  ad::Var v = ad::linear(h, param(p.wv), param(p.bv));
  ad::Var attended = ad::attention(q, k, v, heads);
  ad::Var y = ad::add(x, ad::linear(attended, param(p.wo), param(p.bo)));
  ad::Var h2 = ad::layer_norm(y, param(p.ln2_gamma), param(p.ln2_beta), kLayerNormEps);
  ad::Var mlp = ad::linear(ad::gelu(ad::linear(h2, param(p.w1), param(p.b1))), param(p.w2), param(p.b2));
  return ad::add(y, mlp);
}

Encoded encode(ad::Tape& tape, const Tensor& image, const std::optional<ad::Var>& cls_in,
               const EncoderParams& params, const EncoderConfig& config, std::size_t layers) {
  if (layers > params.layers.size()) {
    throw ContractError("encode: " + std::to_string(layers) + " layers requested but params hold " +
                        std::to_string(params.layers.size()));
  }
  if (image.rank() != 3 || image.dim(0) != config.channels || image.dim(1) != config.image_side) {
    throw DimensionError("encode: image shape " + shape_string(image.shape()) + " does not match encoder side " +
                         std::to_string(config.image_side));
  }
  ad::Var tokens = embed(tape, patchify(image, config.patch_size), params, cls_in);
  for (std::size_t i = 0; i < layers; ++i) tokens = attention_layer(tape, tokens, params.layers[i], config.heads);
  ad::Var cls = ad::layer_norm(ad::row(tokens, 0), tape.parameter(params.norm_gamma),
                               tape.parameter(params.norm_beta), kLayerNormEps);
  return {tokens, cls};
}

ad::Var classify(ad::Tape& tape, const ad::Var& cls, const HeadParams& head) {
  if (cls.cols() != static_cast<Eigen::Index>(head.weight.dim(0))) throw DimensionError("classify: CLS width");
  CountingPause pause;
  return ad::linear(cls, tape.parameter(head.weight), tape.parameter(head.bias));
}

Matrix embed(const Tensor& patches, const EncoderParams& params, const std::optional<Vector>& cls_in) {
  ad::Tape tape;
  std::optional<ad::Var> cls;
  if (cls_in) cls = tape.constant(*cls_in);
  return embed(tape, patches, params, cls).value();
}

Matrix attention_layer(const Matrix& x, const LayerParams& layer, std::size_t heads) {
  ad::Tape tape;
  return attention_layer(tape, tape.constant(x), layer, heads).value();
}

EncodeResult encode(const Tensor& image, const std::optional<Vector>& cls_in, const EncoderParams& params,
                    const EncoderConfig& config, std::size_t layers) {
  ad::Tape tape;
  std::optional<ad::Var> cls;
  if (cls_in) cls = tape.constant(*cls_in);
  Encoded e = encode(tape, image, cls, params, config, layers);
  return {e.tokens.value(), e.cls.value()};
}

Vector classify(const Vector& cls, const HeadParams& head) {
  ad::Tape tape;
  return classify(tape, tape.constant(cls), head).value();
}

}  // namespace ravit::vit
