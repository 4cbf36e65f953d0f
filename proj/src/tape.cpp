#include "ravit/tape.hpp"

#include <cmath>
#include <string>

namespace ravit::ad {

const Matrix& Var::value() const {
  if (tape_ == nullptr) throw ContractError("use of an unbound Var");
  return tape_->value(index_);
}

Tensor Gradients::of(const Tensor& param) const {
  if (const Tensor* g = find(param)) return *g;
  return Tensor(param.shape());
}

const Tensor* Gradients::find(const Tensor& param) const {
  auto it = grads_.find(&param);
  return it == grads_.end() ? nullptr : &it->second;
}

Var Tape::constant(Matrix value) {
  check_finite(value, "constant");
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return make_var(nodes_.size() - 1);
}

Var Tape::parameter(const Tensor& param) {
  if (auto it = param_index_.find(&param); it != param_index_.end()) return make_var(it->second);
  if (param.rank() != 1 && param.rank() != 2) {
    throw DimensionError("tape parameters must be rank 1 or 2, got " + shape_string(param.shape()));
  }
  Node node;
  node.value = param.matrix();
  node.param = &param;
  node.param_shape = param.shape();
  node.requires_grad = true;
  check_finite(node.value, "parameter");
  nodes_.push_back(std::move(node));
  param_index_.emplace(&param, nodes_.size() - 1);
  return make_var(nodes_.size() - 1);
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, Backward backward, const char* op) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward), op);
}

Var Tape::record(Matrix value, std::span<const Var> inputs, Backward backward, const char* op) {
  check_finite(value, op);
  bool tracked = false;
  for (const Var& in : inputs) {
    if (in.tape() != this) throw ContractError(std::string(op) + ": input recorded on a different tape");
    tracked = tracked || nodes_[in.index()].requires_grad;
  }
  Node node;
  node.value = std::move(value);
  node.requires_grad = tracked;
  if (tracked) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return make_var(nodes_.size() - 1);
}

Gradients Tape::backward(const Var& loss) {
  if (loss.tape() != this) throw ContractError("backward: loss belongs to a different tape");
  const Matrix& out = nodes_[loss.index()].value;
  if (out.rows() != 1 || out.cols() != 1) {
    throw ContractError("backward: loss must be 1x1, got " + std::to_string(out.rows()) + "x" +
                        std::to_string(out.cols()));
  }
  for (Node& n : nodes_) {
    n.has_grad = false;
    n.grad.resize(0, 0);
  }
  Node& root = nodes_[loss.index()];
  if (root.requires_grad) {
    root.grad = Matrix::Ones(1, 1);
    root.has_grad = true;
  }
  for (std::size_t i = loss.index() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.backward) continue;
    n.backward(*this, n.grad);
  }

  Gradients result;
  for (const Node& n : nodes_) {
    if (n.param == nullptr) continue;
    Tensor g(n.param_shape);
    if (n.has_grad) g.matrix() = n.grad;
    result.grads_.emplace(n.param, std::move(g));
  }
  return result;
}

// ---------------------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  Tape& t = *a.tape();
  Matrix value = ravit::matmul(a.value(), b.value());
  return t.record(std::move(value), {a, b},
                  [a, b](Tape& tape, const Matrix& g) {
                    if (tape.needs_grad(a)) tape.accumulate(a, g * b.value().transpose());
                    if (tape.needs_grad(b)) tape.accumulate(b, a.value().transpose() * g);
                  },
                  "matmul");
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  Tape& t = *x.tape();
  if (bias.rows() != 1 || bias.cols() != weight.cols()) throw DimensionError("linear: bias width");
  Matrix value = ravit::matmul(x.value(), weight.value());
  value.rowwise() += bias.value().row(0);
  return t.record(std::move(value), {x, weight, bias},
                  [x, weight, bias](Tape& tape, const Matrix& g) {
                    if (tape.needs_grad(x)) tape.accumulate(x, g * weight.value().transpose());
                    if (tape.needs_grad(weight)) tape.accumulate(weight, x.value().transpose() * g);
                    if (tape.needs_grad(bias)) tape.accumulate(bias, g.colwise().sum());
                  },
                  "linear");
}

Var add(const Var& a, const Var& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("add: shape mismatch");
  Matrix value = a.value() + b.value();
  return a.tape()->record(std::move(value), {a, b},
                          [a, b](Tape& tape, const Matrix& g) {
                            tape.accumulate(a, g);
                            tape.accumulate(b, g);
                          },
                          "add");
}

Var scale(const Var& x, double factor) {
  Matrix value = x.value() * factor;
  return x.tape()->record(std::move(value), {x},
                          [x, factor](Tape& tape, const Matrix& g) { tape.accumulate(x, g * factor); }, "scale");
}

Var sum(const Var& x) {
  Matrix value(1, 1);
  value(0, 0) = x.value().sum();
  return x.tape()->record(std::move(value), {x},
                          [x](Tape& tape, const Matrix& g) {
                            tape.accumulate(x, Matrix::Constant(x.rows(), x.cols(), g(0, 0)));
                          },
                          "sum");
}

Var vstack(const Var& top, const Var& bottom) {
  if (top.cols() != bottom.cols()) throw DimensionError("vstack: column mismatch");
  Matrix value(top.rows() + bottom.rows(), top.cols());
  value.topRows(top.rows()) = top.value();
  value.bottomRows(bottom.rows()) = bottom.value();
  const Eigen::Index split = top.rows();
  return top.tape()->record(std::move(value), {top, bottom},
                            [top, bottom, split](Tape& tape, const Matrix& g) {
                              tape.accumulate(top, g.topRows(split));
                              tape.accumulate(bottom, g.bottomRows(g.rows() - split));
                            },
                            "vstack");
}

Var row(const Var& x, Eigen::Index r) {
  if (r < 0 || r >= x.rows()) throw IndexError("row: index out of range");
  Matrix value = x.value().row(r);
  return x.tape()->record(std::move(value), {x},
                          [x, r](Tape& tape, const Matrix& g) {
                            Matrix full = Matrix::Zero(x.rows(), x.cols());
                            full.row(r) = g.row(0);
                            tape.accumulate(x, full);
                          },
                          "row");
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const Eigen::Index rows = x.rows(), cols = x.cols();
  if (gamma.rows() != 1 || gamma.cols() != cols || beta.rows() != 1 || beta.cols() != cols) {
    throw DimensionError("layer_norm: gamma/beta width");
  }
  Matrix xhat(rows, cols);
  Eigen::VectorXd inv_std(rows);
  const double d = static_cast<double>(cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double mean = x.value().row(r).sum() / d;
    xhat.row(r) = x.value().row(r).array() - mean;
    const double var = xhat.row(r).squaredNorm() / d;
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) *= inv_std(r);
  }
  Matrix value = (xhat.array().rowwise() * gamma.value().row(0).array()).matrix();
  value.rowwise() += beta.value().row(0);
  return x.tape()->record(
      std::move(value), {x, gamma, beta},
      [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& tape, const Matrix& g) {
        if (tape.needs_grad(gamma)) tape.accumulate(gamma, (g.array() * xhat.array()).colwise().sum().matrix());
        if (tape.needs_grad(beta)) tape.accumulate(beta, g.colwise().sum());
        if (!tape.needs_grad(x)) return;
        const double d = static_cast<double>(g.cols());
        Matrix dxhat = (g.array().rowwise() * gamma.value().row(0).array()).matrix();
        Matrix dx(g.rows(), g.cols());
        for (Eigen::Index r = 0; r < g.rows(); ++r) {
          const double mean_d = dxhat.row(r).sum() / d;
          const double mean_dx = dxhat.row(r).dot(xhat.row(r)) / d;
          dx.row(r) = inv_std(r) * (dxhat.row(r).array() - mean_d - xhat.row(r).array() * mean_dx).matrix();
        }
        tape.accumulate(x, dx);
      },
      "layer_norm");
}

Var gelu(const Var& x) {
  Matrix value = ravit::gelu(x.value());
  return x.tape()->record(std::move(value), {x},
                          [x](Tape& tape, const Matrix& g) {
                            Matrix local = x.value().unaryExpr([](double v) { return gelu_derivative(v); });
                            tape.accumulate(x, (g.array() * local.array()).matrix());
                          },
                          "gelu");
}

Var softmax_rows(const Var& x) {
  Matrix value = ravit::softmax_rows(x.value());
  Matrix saved = value;
  return x.tape()->record(std::move(value), {x},
                          [x, p = std::move(saved)](Tape& tape, const Matrix& g) {
                            Eigen::VectorXd dots = (g.array() * p.array()).rowwise().sum();
                            Matrix dx = (p.array() * (g.array().colwise() - dots.array())).matrix();
                            tape.accumulate(x, dx);
                          },
                          "softmax_rows");
}

namespace {

void check_heads(const Matrix& q, const Matrix& k, const Matrix& v, std::size_t heads) {
  if (heads == 0 || q.cols() % static_cast<Eigen::Index>(heads) != 0) {
    throw DimensionError("attention: width " + std::to_string(q.cols()) + " not divisible by " +
                         std::to_string(heads) + " heads");
  }
  if (k.rows() != v.rows() || q.cols() != k.cols() || q.cols() != v.cols()) {
    throw DimensionError("attention: q/k/v shape mismatch");
  }
}

}  // namespace

std::vector<Matrix> attention_weights(const Matrix& q, const Matrix& k, std::size_t heads) {
  check_heads(q, k, k, heads);
  const Eigen::Index dh = q.cols() / static_cast<Eigen::Index>(heads);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Matrix> out;
  out.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const Eigen::Index c0 = static_cast<Eigen::Index>(h) * dh;
    Matrix scores = (q.middleCols(c0, dh) * k.middleCols(c0, dh).transpose()) * scale;
    out.push_back(ravit::softmax_rows(scores));
  }
  return out;
}

Var attention(const Var& q, const Var& k, const Var& v, std::size_t heads) {
  const Matrix& qv = q.value();
  const Matrix& kv = k.value();
  const Matrix& vv = v.value();
  check_heads(qv, kv, vv, heads);
  const Eigen::Index lq = qv.rows(), lk = kv.rows();
  const Eigen::Index dh = qv.cols() / static_cast<Eigen::Index>(heads);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  std::vector<Matrix> probs;
  probs.reserve(heads);
  Matrix out(lq, qv.cols());
  for (std::size_t h = 0; h < heads; ++h) {
    const Eigen::Index c0 = static_cast<Eigen::Index>(h) * dh;
    record_macs(lq, dh, lk);
    Matrix scores = (qv.middleCols(c0, dh) * kv.middleCols(c0, dh).transpose()) * scale;
    probs.push_back(ravit::softmax_rows(scores));
    record_macs(lq, lk, dh);
    out.middleCols(c0, dh).noalias() = probs.back() * vv.middleCols(c0, dh);
  }

  return q.tape()->record(
      std::move(out), {q, k, v},
      [q, k, v, dh, scale, probs = std::move(probs)](Tape& tape, const Matrix& g) {
        const Matrix& qv = q.value();
        const Matrix& kv = k.value();
        const Matrix& vv = v.value();
        Matrix dq = Matrix::Zero(qv.rows(), qv.cols());
        Matrix dk = Matrix::Zero(kv.rows(), kv.cols());
        Matrix dv = Matrix::Zero(vv.rows(), vv.cols());
        for (std::size_t h = 0; h < probs.size(); ++h) {
          const Eigen::Index c0 = static_cast<Eigen::Index>(h) * dh;
          const Matrix& p = probs[h];
          const auto g_h = g.middleCols(c0, dh);
          dv.middleCols(c0, dh).noalias() = p.transpose() * g_h;
          Matrix dp = g_h * vv.middleCols(c0, dh).transpose();
          Eigen::VectorXd dots = (dp.array() * p.array()).rowwise().sum();
          Matrix ds = (p.array() * (dp.array().colwise() - dots.array())).matrix() * scale;
          dq.middleCols(c0, dh).noalias() = ds * kv.middleCols(c0, dh);
          dk.middleCols(c0, dh).noalias() = ds.transpose() * qv.middleCols(c0, dh);
        }
        tape.accumulate(q, dq);
        tape.accumulate(k, dk);
        tape.accumulate(v, dv);
      },
      "attention");
}

Var cross_entropy(const Var& logits, std::size_t label) {
  if (logits.rows() != 1) throw DimensionError("cross_entropy: logits must be a single row");
  Matrix value(1, 1);
  value(0, 0) = ravit::cross_entropy(logits.value(), label);
  return logits.tape()->record(std::move(value), {logits},
                               [logits, label](Tape& tape, const Matrix& g) {
                                 Matrix d = ravit::softmax_rows(logits.value());
                                 d(0, static_cast<Eigen::Index>(label)) -= 1.0;
                                 tape.accumulate(logits, d * g(0, 0));
                               },
                               "cross_entropy");
}

Var weighted_sum(std::span<const Var> terms, std::span<const double> weights) {
  if (terms.size() != weights.size()) throw ContractError("weighted_sum: terms and weights differ in length");
  if (terms.empty()) throw ContractError("weighted_sum: no terms");
  Matrix value = Matrix::Zero(1, 1);
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (terms[i].rows() != 1 || terms[i].cols() != 1) throw DimensionError("weighted_sum: terms must be 1x1");
    value(0, 0) += weights[i] * terms[i].value()(0, 0);
  }
  std::vector<Var> ins(terms.begin(), terms.end());
  std::vector<double> ws(weights.begin(), weights.end());
  return terms[0].tape()->record(std::move(value), std::span<const Var>(ins),
                                 [ins, ws](Tape& tape, const Matrix& g) {
                                   for (std::size_t i = 0; i < ins.size(); ++i) {
                                     tape.accumulate(ins[i], g * ws[i]);
                                   }
                                 },
                                 "weighted_sum");
}

}  // namespace ravit::ad
