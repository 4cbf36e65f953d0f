#include "ravit/training.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <sstream>

namespace ravit {

double total_loss(std::span<const double> losses, std::span<const double> weights) {
  if (losses.size() != weights.size()) throw ContractError("total_loss: losses and weights differ in length");
  double total = 0.0;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    if (weights[i] < 0.0) throw ContractError("total_loss: negative weight");
    total += weights[i] * losses[i];
  }
  return total;
}

ad::Var total_loss(std::span<const ad::Var> losses, std::span<const double> weights) {
  for (double w : weights)
    if (w < 0.0) throw ContractError("total_loss: negative weight");
  return ad::weighted_sum(losses, weights);
}

namespace {

struct SampleLoss {
  ad::Var loss;
  std::vector<ExitOutput> exits;
};

SampleLoss sample_loss(ad::Tape& tape, const Tensor& image, std::size_t label, const RavitConfig& config,
                       const RavitParams& params) {
  SampleLoss out;
  out.exits = forward_all_exits(tape, image, config, params);
  std::vector<ad::Var> losses;
  std::vector<double> weights;
  for (const ExitOutput& e : out.exits) {
    losses.push_back(ad::cross_entropy(e.logits, label));
    weights.push_back(config.loss_weights[e.branch]);
  }
  out.loss = total_loss(losses, weights);
  return out;
}

}  // namespace

ad::Var multi_exit_loss(ad::Tape& tape, const Tensor& image, std::size_t label, const RavitConfig& config,
                        const RavitParams& params) {
  return sample_loss(tape, image, label, config, params).loss;
}

OptimizerState OptimizerState::for_params(std::span<Tensor* const> params, AdamWOptions options) {
  OptimizerState s;
  s.options = options;
  for (const Tensor* p : params) {
    s.first_moment.emplace_back(p->shape());
    s.second_moment.emplace_back(p->shape());
  }
  return s;
}

void adamw_step(std::span<Tensor* const> params, std::span<const Tensor> grads, OptimizerState& state, double lr) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    throw ContractError("adamw_step: parameter, gradient and state counts differ");
  }
  const AdamWOptions& o = state.options;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(o.beta1, t);
  const double correction2 = 1.0 - std::pow(o.beta2, t);
  const double decay = 1.0 - lr * o.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    if (grads[i].shape() != p.shape() || state.first_moment[i].shape() != p.shape()) {
      throw ContractError("adamw_step: shape mismatch for parameter " + std::to_string(i));
    }
    auto pv = p.data();
    auto g = grads[i].data();
    auto m = state.first_moment[i].data();
    auto v = state.second_moment[i].data();
    for (std::size_t j = 0; j < pv.size(); ++j) {
      pv[j] *= decay;
      m[j] = o.beta1 * m[j] + (1.0 - o.beta1) * g[j];
      v[j] = o.beta2 * v[j] + (1.0 - o.beta2) * g[j] * g[j];
      const double mhat = m[j] / correction1;
      const double vhat = v[j] / correction2;
      pv[j] -= lr * mhat / (std::sqrt(vhat) + o.eps);
    }
  }
}

double cosine_lr(std::uint64_t t, std::uint64_t total, double lr_max, double lr_min) {
  if (total == 0 || t >= total) return lr_min;
  const double phase = std::numbers::pi * static_cast<double>(t) / static_cast<double>(total);
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(phase));
}

std::string render_train_log(std::span<const EpochLog> log, std::size_t branches) {
  std::ostringstream out;
  out << "epoch,lr,loss";
  for (std::size_t i = 0; i < branches; ++i) out << ",exit" << i + 1 << "_acc";
  out << '\n';
  char buf[64];
  for (const EpochLog& e : log) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9f", e.epoch, e.lr, e.loss);
    out << buf;
    for (double acc : e.exit_accuracy) {
      if (std::isnan(acc)) {
        out << ',';
      } else {
        std::snprintf(buf, sizeof buf, ",%.6f", acc);
        out << buf;
      }
    }
    out << '\n';
  }
  return out.str();
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + stream * 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

TrainResult train(const RavitConfig& config, const TrainConfig& tc, const Dataset& dataset,
                  const TrainCallbacks& callbacks) {
  Rng init_rng(derive_seed(tc.seed, seed_stream::kInit));
  return train(config, tc, dataset, RavitParams::init(config, init_rng), callbacks);
}

TrainResult train(const RavitConfig& config, const TrainConfig& tc, const Dataset& dataset, RavitParams initial,
                  const TrainCallbacks& callbacks) {
  if (tc.epochs == 0 || tc.batch_size == 0) throw ContractError("train: epochs and batch size must be >= 1");
  if (dataset.empty()) throw ContractError("train: empty dataset");
  if (dataset.num_classes != config.num_classes) {
    throw ContractError("train: dataset has " + std::to_string(dataset.num_classes) + " classes, model " +
                        std::to_string(config.num_classes));
  }
  initial.check(config);

  TrainResult result{std::move(initial), {}};
  RavitParams& params = result.params;
  const std::vector<Tensor*> tensors = params.tensors();
  OptimizerState state = OptimizerState::for_params(tensors, tc.adamw);
  Rng rng(derive_seed(tc.seed, seed_stream::kShuffle));

  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    const double lr = tc.schedule == Schedule::Cosine ? cosine_lr(epoch, tc.epochs, tc.lr, tc.lr_min) : tc.lr;
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::vector<std::size_t> correct(config.branches(), 0);

    for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
      const std::size_t end = std::min(order.size(), start + tc.batch_size);
      std::vector<Tensor> grads;
      grads.reserve(tensors.size());
      for (const Tensor* p : tensors) grads.emplace_back(p->shape());

      for (std::size_t k = start; k < end; ++k) {
        const std::size_t n = order[k];
        const Tensor image = tc.augment ? augment(dataset.images[n], rng, dataset.normalization)
                                        : dataset.normalization.apply(dataset.images[n]);
        ad::Tape tape;
        SampleLoss s = sample_loss(tape, image, dataset.labels[n], config, params);
        const double value = s.loss.value()(0, 0);
        if (!std::isfinite(value)) throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch + 1));
        loss_sum += value;
        for (const ExitOutput& e : s.exits) {
          if (argmax(e.logits.value()) == dataset.labels[n]) ++correct[e.branch];
        }
        const ad::Gradients g = tape.backward(s.loss);
        for (std::size_t i = 0; i < tensors.size(); ++i) {
          if (const Tensor* gi = g.find(*tensors[i])) grads[i].matrix() += gi->matrix();
        }
      }

      const double inv = 1.0 / static_cast<double>(end - start);
      for (Tensor& g : grads) {
        g.matrix() *= inv;
        if (!g.all_finite()) throw NumericError("train: non-finite gradient at epoch " + std::to_string(epoch + 1));
      }
      adamw_step(tensors, grads, state, lr);
    }

    EpochLog entry;
    entry.epoch = epoch + 1;
    entry.lr = lr;
    entry.loss = loss_sum / static_cast<double>(dataset.size());
    for (std::size_t b = 0; b < config.branches(); ++b) {
      entry.exit_accuracy.push_back(config.layers[b] == 0
                                        ? std::numeric_limits<double>::quiet_NaN()
                                        : static_cast<double>(correct[b]) / static_cast<double>(dataset.size()));
    }
    result.log.push_back(entry);
    if (callbacks.on_epoch) callbacks.on_epoch(entry);
    if (tc.checkpoint_every > 0 && (epoch + 1) % tc.checkpoint_every == 0 && callbacks.on_checkpoint) {
      callbacks.on_checkpoint(epoch + 1, params);
    }
  }
  return result;
}

}  // namespace ravit
