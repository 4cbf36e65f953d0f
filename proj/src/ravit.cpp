#include "ravit/ravit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "ravit/cost.hpp"

namespace ravit {

RavitParams RavitParams::init(const RavitConfig& config, Rng& rng) {
  config.validate();
  RavitParams p;
  for (std::size_t i = 0; i < config.branches(); ++i) {
    if (config.layers[i] == 0) {
      p.branches.emplace_back();
    } else {
      p.branches.emplace_back(vit::EncoderParams::init(config.encoder(i), rng));
    }
  }
  return p;
}

RavitParams RavitParams::zeros(const RavitConfig& config) {
  config.validate();
  RavitParams p;
  for (std::size_t i = 0; i < config.branches(); ++i) {
    if (config.layers[i] == 0) {
      p.branches.emplace_back();
    } else {
      p.branches.emplace_back(vit::EncoderParams::zeros(config.encoder(i)));
    }
  }
  return p;
}

std::vector<Tensor*> RavitParams::tensors() {
  std::vector<Tensor*> out;
  for_each([&out](const std::string&, Tensor& t) { out.push_back(&t); });
  return out;
}

std::size_t RavitParams::parameter_count() const {
  std::size_t n = 0;
  for_each([&n](const std::string&, const Tensor& t) { n += t.size(); });
  return n;
}

namespace {

void check_structure(const RavitConfig& config, const RavitParams& params) {
  if (params.branches.size() != config.branches()) {
    throw ContractError("params hold " + std::to_string(params.branches.size()) + " branches, config has " +
                        std::to_string(config.branches()));
  }
  for (std::size_t i = 0; i < config.branches(); ++i) {
    const bool active = config.layers[i] > 0;
    if (active != params.branches[i].has_value()) {
      throw ContractError("branch " + std::to_string(i + 1) + ": params presence does not match layer count");
    }
    if (active && params.branches[i]->layers.size() != config.layers[i]) {
      throw ContractError("branch " + std::to_string(i + 1) + ": params hold " +
                          std::to_string(params.branches[i]->layers.size()) + " layers, config has " +
                          std::to_string(config.layers[i]));
    }
  }
}

}  // namespace

void RavitParams::check(const RavitConfig& config) const {
  config.validate();
  check_structure(config, *this);
  std::vector<std::pair<std::string, Shape>> expected;
  zeros(config).for_each([&expected](const std::string& name, const Tensor& t) { expected.emplace_back(name, t.shape()); });
  std::size_t k = 0;
  for_each([&](const std::string& name, const Tensor& t) {
    if (k >= expected.size() || expected[k].first != name || expected[k].second != t.shape()) {
      throw ContractError("parameter " + name + " has shape " + shape_string(t.shape()) +
                          " which does not match the config");
    }
    ++k;
  });
}

Tensor resize(const Tensor& image, std::size_t target, ResizeMode mode) {
  if (target == 0) throw DimensionError("resize: target side must be positive");
  if (image.rank() != 3 || image.dim(1) != image.dim(2)) {
    throw DimensionError("resize: expected a square [C,S,S] image, got " + shape_string(image.shape()));
  }
  const std::size_t channels = image.dim(0), side = image.dim(1);
  Tensor out({channels, target, target});
  auto src = image.data();
  auto dst = out.data();
  if (mode == ResizeMode::Box) {
    if (side % target != 0) {
      throw DimensionError("resize: box mode needs an integer factor, " + std::to_string(side) + " -> " +
                           std::to_string(target));
    }
    const std::size_t f = side / target;
    const double inv = 1.0 / static_cast<double>(f * f);
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t y = 0; y < target; ++y)
        for (std::size_t x = 0; x < target; ++x) {
          double acc = 0.0;
          for (std::size_t dy = 0; dy < f; ++dy)
            for (std::size_t dx = 0; dx < f; ++dx) acc += src[(c * side + y * f + dy) * side + x * f + dx];
          dst[(c * target + y) * target + x] = acc * inv;
        }
    return out;
  }
  const double scale = static_cast<double>(side) / static_cast<double>(target);
  const double max_src = static_cast<double>(side - 1);
  auto coord = [&](std::size_t i) {
    const double s = std::clamp((static_cast<double>(i) + 0.5) * scale - 0.5, 0.0, max_src);
    const auto lo = static_cast<std::size_t>(std::floor(s));
    return std::tuple{lo, std::min(lo + 1, side - 1), s - static_cast<double>(lo)};
  };
  for (std::size_t y = 0; y < target; ++y) {
    const auto [y0, y1, wy] = coord(y);
    for (std::size_t x = 0; x < target; ++x) {
      const auto [x0, x1, wx] = coord(x);
      for (std::size_t c = 0; c < channels; ++c) {
        auto at = [&](std::size_t yy, std::size_t xx) { return src[(c * side + yy) * side + xx]; };
        const double top = at(y0, x0) * (1 - wx) + at(y0, x1) * wx;
        const double bottom = at(y1, x0) * (1 - wx) + at(y1, x1) * wx;
        dst[(c * target + y) * target + x] = top * (1 - wy) + bottom * wy;
      }
    }
  }
  return out;
}

namespace {

const Tensor& branch_input(const Tensor& image, std::size_t dim, ResizeMode mode, Tensor& storage) {
  if (dim == image.dim(1)) return image;
  storage = resize(image, dim, mode);
  return storage;
}

void check_image(const Tensor& image, const RavitConfig& config) {
  if (image.rank() != 3 || image.dim(0) != config.channels || image.dim(1) != config.image_side() ||
      image.dim(2) != config.image_side()) {
    throw DimensionError("image shape " + shape_string(image.shape()) + " does not match model input [" +
                         std::to_string(config.channels) + "," + std::to_string(config.image_side()) + "," +
                         std::to_string(config.image_side()) + "]");
  }
}

}  // namespace

std::vector<Tensor> build_pyramid(const Tensor& image, const RavitConfig& config) {
  check_image(image, config);
  std::vector<Tensor> out(config.branches());
  for (std::size_t i = 0; i < config.branches(); ++i) {
    if (config.layers[i] == 0) continue;
    Tensor storage;
    out[i] = branch_input(image, config.dims[i], config.resize, storage);
  }
  return out;
}

double prediction_entropy(const Vector& logits) { return entropy_nats(softmax_rows(logits)); }

ExitRecord infer(const Tensor& image, const RavitConfig& config, const RavitParams& params,
                 const InferOptions& options) {
  config.validate();
  check_structure(config, params);
  check_image(image, config);
  const std::vector<std::size_t> active = config.active_branches();
  if (active.empty()) throw ContractError("infer: every branch has zero layers");
  const std::vector<double>& thresholds = options.thresholds ? *options.thresholds : config.thresholds;
  if (thresholds.size() != config.branches() - 1) {
    throw ContractError("infer: expected " + std::to_string(config.branches() - 1) + " thresholds");
  }

  ExitRecord record;
  MacCounter counter;
  ad::Tape tape;
  std::optional<ad::Var> cls;
  for (std::size_t k = 0; k < active.size(); ++k) {
    const std::size_t b = active[k];
    const vit::EncoderParams& enc = *params.branches[b];
    Tensor storage;
    const Tensor& input = branch_input(image, config.dims[b], config.resize, storage);
    vit::Encoded encoded = vit::encode(tape, input, cls, enc, config.encoder(b), config.layers[b]);
    Vector logits = vit::classify(tape, encoded.cls, enc.head).value();
    const double h = prediction_entropy(logits);
    record.entropy.resize(b + 1);
    record.logits.resize(b + 1);
    record.entropy[b] = h;
    cls = encoded.cls;
    const bool last = k + 1 == active.size();
    if (last || (!options.disable_exits && exits_at(h, thresholds[b]))) {
      record.exit_branch = b;
      record.predicted_class = argmax(logits);
      record.logits[b] = std::move(logits);
      break;
    }
    record.logits[b] = std::move(logits);
  }
  record.macs_spent = counter.total();
  return record;
}

std::vector<ExitOutput> forward_all_exits(ad::Tape& tape, const Tensor& image, const RavitConfig& config,
                                          const RavitParams& params) {
  config.validate();
  check_structure(config, params);
  check_image(image, config);
  std::vector<ExitOutput> outputs;
  std::optional<ad::Var> cls;
  for (std::size_t b : config.active_branches()) {
    const vit::EncoderParams& enc = *params.branches[b];
    Tensor storage;
    const Tensor& input = branch_input(image, config.dims[b], config.resize, storage);
    vit::Encoded encoded = vit::encode(tape, input, cls, enc, config.encoder(b), config.layers[b]);
    outputs.push_back({b, vit::classify(tape, encoded.cls, enc.head)});
    cls = encoded.cls;
  }
  return outputs;
}

std::vector<std::optional<Vector>> forward_all_exits(const Tensor& image, const RavitConfig& config,
                                                     const RavitParams& params) {
  ad::Tape tape;
  std::vector<std::optional<Vector>> out(config.branches());
  for (const ExitOutput& e : forward_all_exits(tape, image, config, params)) out[e.branch] = e.logits.value();
  return out;
}

std::vector<ExitRow> exit_distribution(const Dataset& dataset, const RavitConfig& config, const RavitParams& params,
                                       std::span<const double> thresholds) {
  if (thresholds.empty()) throw ContractError("exit_distribution: empty threshold sweep");
  if (dataset.empty()) throw ContractError("exit_distribution: empty dataset");
  params.check(config);
  const std::vector<std::size_t> active = config.active_branches();
  if (active.empty()) throw ContractError("exit_distribution: every branch has zero layers");

  struct Trace {
    std::vector<double> entropy;
    std::vector<std::size_t> prediction;
    std::size_t label;
  };
  std::vector<Trace> traces;
  traces.reserve(dataset.size());
  for (std::size_t n = 0; n < dataset.size(); ++n) {
    const Sample s = dataset.sample(n);
    const auto logits = forward_all_exits(s.image, config, params);
    Trace t{.entropy = {}, .prediction = {}, .label = s.label};
    for (std::size_t b : active) {
      t.entropy.push_back(prediction_entropy(*logits[b]));
      t.prediction.push_back(argmax(*logits[b]));
    }
    traces.push_back(std::move(t));
  }

  const std::vector<std::uint64_t> all_costs = cost::exit_flops(config);
  std::vector<std::uint64_t> costs;
  for (std::size_t b : active) costs.push_back(all_costs[b]);

  std::vector<double> sorted(thresholds.begin(), thresholds.end());
  std::stable_sort(sorted.begin(), sorted.end());
  std::vector<ExitRow> rows;
  for (double threshold : sorted) {
    std::vector<std::uint64_t> counts(active.size(), 0);
    std::size_t correct = 0;
    for (const Trace& t : traces) {
      std::size_t k = 0;
      while (k + 1 < active.size() && !exits_at(t.entropy[k], threshold)) ++k;
      ++counts[k];
      if (t.prediction[k] == t.label) ++correct;
    }
    ExitRow row;
    row.threshold = threshold;
    row.exit_counts.assign(config.branches(), 0);
    for (std::size_t k = 0; k < active.size(); ++k) row.exit_counts[active[k]] = counts[k];
    row.accuracy = static_cast<double>(correct) / static_cast<double>(traces.size());
    row.expected_flops = cost::expected_flops(counts, costs);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string render_exit_csv(std::span<const ExitRow> rows, std::size_t branches) {
  std::ostringstream out;
  out << "threshold";
  for (std::size_t i = 0; i < branches; ++i) out << ",s" << i + 1;
  out << ",accuracy,expected_flops\n";
  char buf[64];
  for (const ExitRow& row : rows) {
    std::snprintf(buf, sizeof buf, "%.6f", row.threshold);
    out << buf;
    for (std::uint64_t s : row.exit_counts) out << ',' << s;
    std::snprintf(buf, sizeof buf, ",%.6f,%.2f", row.accuracy, row.expected_flops);
    out << buf << '\n';
  }
  return out.str();
}

EvalSummary evaluate(const Dataset& dataset, const RavitConfig& config, const RavitParams& params,
                     const InferOptions& options) {
  params.check(config);
  EvalSummary summary;
  summary.exit_counts.assign(config.branches(), 0);
  for (std::size_t n = 0; n < dataset.size(); ++n) {
    const Sample s = dataset.sample(n);
    const ExitRecord r = infer(s.image, config, params, options);
    ++summary.samples;
    ++summary.exit_counts[r.exit_branch];
    summary.macs_spent += r.macs_spent;
    if (r.predicted_class == s.label) ++summary.correct;
  }
  return summary;
}

std::vector<std::uint32_t> checkpoint_fields(const RavitConfig& c) {
  std::vector<std::uint32_t> f;
  auto put = [&f](std::size_t v) { f.push_back(static_cast<std::uint32_t>(v)); };
  put(c.branches());
  put(c.patch_size);
  put(c.channels);
  put(c.embed_dim);
  put(c.hidden_dim);
  put(c.heads);
  put(c.num_classes);
  for (std::size_t d : c.dims) put(d);
  for (std::size_t l : c.layers) put(l);
  return f;
}

Checkpoint to_checkpoint(const RavitConfig& config, const RavitParams& params) {
  params.check(config);
  Checkpoint ckpt;
  ckpt.config = checkpoint_fields(config);
  params.for_each([&ckpt](const std::string& name, const Tensor& t) { ckpt.tensors.push_back({name, t}); });
  return ckpt;
}

RavitParams from_checkpoint(const Checkpoint& ckpt, const RavitConfig& config) {
  const std::vector<std::uint32_t> want = checkpoint_fields(config);
  static const char* const kScalarNames[] = {"branches", "patch", "channels", "embed", "hidden", "heads", "classes"};
  std::vector<std::string> diffs;
  auto field_name = [&](std::size_t i, std::size_t b) -> std::string {
    if (i < 7) return kScalarNames[i];
    if (i < 7 + b) return "dims[" + std::to_string(i - 7) + "]";
    return "layers[" + std::to_string(i - 7 - b) + "]";
  };
  const std::size_t have_b = ckpt.config.empty() ? 0 : ckpt.config[0];
  if (ckpt.config.size() != 7 + 2 * have_b) throw FormatError("checkpoint: malformed config header");
  if (have_b != config.branches()) {
    diffs.push_back("branches (checkpoint " + std::to_string(have_b) + ", config " +
                    std::to_string(config.branches()) + ")");
  } else {
    for (std::size_t i = 0; i < want.size(); ++i) {
      if (ckpt.config[i] != want[i]) {
        diffs.push_back(field_name(i, have_b) + " (checkpoint " + std::to_string(ckpt.config[i]) + ", config " +
                        std::to_string(want[i]) + ")");
      }
    }
  }
  if (!diffs.empty()) {
    std::string msg = "checkpoint does not match model config:";
    for (const auto& d : diffs) msg += " " + d + ";";
    throw ContractError(msg);
  }

  RavitParams params = RavitParams::zeros(config);
  std::size_t used = 0;
  params.for_each([&](const std::string& name, Tensor& t) {
    const Tensor* stored = ckpt.find(name);
    if (stored == nullptr) throw ContractError("checkpoint is missing tensor " + name);
    if (stored->shape() != t.shape()) {
      throw ContractError("checkpoint tensor " + name + " has shape " + shape_string(stored->shape()) +
                          ", expected " + shape_string(t.shape()));
    }
    t = *stored;
    ++used;
  });
  if (used != ckpt.tensors.size()) throw ContractError("checkpoint holds tensors the model does not use");
  return params;
}

}  // namespace ravit
