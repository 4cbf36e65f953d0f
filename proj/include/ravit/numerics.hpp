#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>

#include "ravit/errors.hpp"
#include "ravit/tensor.hpp"

namespace ravit {

// ---------------------------------------------------------------------------
// Multiply-accumulate counting hook.
//
// A MacCounter installs itself as the current thread's counter for its
// lifetime; every matmul recorded while it is active adds m*k*n. Counters nest
// (the innermost one receives the counts) and a CountingPause suspends
// counting, which is how patch embedding and exit heads stay out of the total.
// ---------------------------------------------------------------------------
class MacCounter {
 public:
  MacCounter();
  ~MacCounter();
  MacCounter(const MacCounter&) = delete;
  MacCounter& operator=(const MacCounter&) = delete;

  std::uint64_t total() const { return total_; }
  std::uint64_t calls() const { return calls_; }
  void add(std::uint64_t macs) {
    total_ += macs;
    ++calls_;
  }

 private:
  std::uint64_t total_ = 0;
  std::uint64_t calls_ = 0;
  MacCounter* previous_;
};

class CountingPause {
 public:
  CountingPause();
  ~CountingPause();
  CountingPause(const CountingPause&) = delete;
  CountingPause& operator=(const CountingPause&) = delete;

 private:
  MacCounter* saved_;
};

/// Adds m*k*n to the active counter, if any.
void record_macs(std::uint64_t m, std::uint64_t k, std::uint64_t n);

inline void check_finite(const Eigen::Ref<const Matrix>& value, const char* op) {
  if (!value.allFinite()) throw NumericError(std::string("non-finite value produced by ") + op);
}

// ---------------------------------------------------------------------------
// Dense kernels. They accept any Eigen expression and return plain row-major
// matrices of the same scalar type.
// ---------------------------------------------------------------------------

template <typename A, typename B>
RowMatrix<typename A::Scalar> matmul(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions " + std::to_string(a.cols()) + " and " +
                         std::to_string(b.rows()) + " differ");
  }
  record_macs(a.rows(), a.cols(), b.cols());
  RowMatrix<typename A::Scalar> out = a * b;
  return out;
}

template <typename Derived>
RowMatrix<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  RowMatrix<Scalar> out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const Scalar peak = x.row(r).maxCoeff();
    out.row(r) = (x.row(r).array() - peak).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

/// Row-wise layer normalization with population variance.
template <typename Derived, typename G, typename Bt>
RowMatrix<typename Derived::Scalar> layer_norm(const Eigen::MatrixBase<Derived>& x, const Eigen::MatrixBase<G>& gamma,
                                               const Eigen::MatrixBase<Bt>& beta, typename Derived::Scalar eps) {
  using Scalar = typename Derived::Scalar;
  if (gamma.size() != x.cols() || beta.size() != x.cols()) throw DimensionError("layer_norm: gamma/beta width");
  RowMatrix<Scalar> out(x.rows(), x.cols());
  const Scalar d = static_cast<Scalar>(x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const Scalar mean = x.row(r).sum() / d;
    const auto centered = (x.row(r).array() - mean).eval();
    const Scalar var = centered.square().sum() / d;
    const Scalar inv = Scalar(1) / std::sqrt(var + eps);
    for (Eigen::Index c = 0; c < x.cols(); ++c) out(r, c) = gamma(c) * centered(c) * inv + beta(c);
  }
  return out;
}

inline constexpr double kGeluCoeff = 0.044715;

template <typename Scalar>
Scalar gelu_scalar(Scalar x) {
  const Scalar k = std::sqrt(Scalar(2) / std::numbers::pi_v<Scalar>);
  return Scalar(0.5) * x * (Scalar(1) + std::tanh(k * (x + Scalar(kGeluCoeff) * x * x * x)));
}

template <typename Scalar>
Scalar gelu_derivative(Scalar x) {
  const Scalar k = std::sqrt(Scalar(2) / std::numbers::pi_v<Scalar>);
  const Scalar t = std::tanh(k * (x + Scalar(kGeluCoeff) * x * x * x));
  return Scalar(0.5) * (Scalar(1) + t) +
         Scalar(0.5) * x * (Scalar(1) - t * t) * k * (Scalar(1) + Scalar(3 * kGeluCoeff) * x * x);
}

template <typename Derived>
RowMatrix<typename Derived::Scalar> gelu(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return x.unaryExpr([](Scalar v) { return gelu_scalar(v); });
}

template <typename Derived>
typename Derived::Scalar log_sum_exp(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  const Scalar peak = v.maxCoeff();
  return peak + std::log((v.array() - peak).exp().sum());
}

/// Shannon entropy in nats of a probability vector; 0 ln 0 is taken as 0.
template <typename Derived>
typename Derived::Scalar entropy_nats(const Eigen::MatrixBase<Derived>& p, double tolerance = 1e-9) {
  using Scalar = typename Derived::Scalar;
  if (p.size() == 0) throw DomainError("entropy_nats: empty vector");
  if ((p.array() < Scalar(0)).any()) throw DomainError("entropy_nats: negative probability");
  if (std::abs(p.sum() - Scalar(1)) > tolerance) throw DomainError("entropy_nats: probabilities do not sum to 1");
  Scalar h = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const Scalar pi = p(i);
    if (pi > Scalar(0)) h -= pi * std::log(pi);
  }
  return h;
}

/// -log softmax(logits)[label] via log-sum-exp.
template <typename Derived>
typename Derived::Scalar cross_entropy(const Eigen::MatrixBase<Derived>& logits, std::size_t label) {
  if (label >= static_cast<std::size_t>(logits.size())) {
    throw IndexError("cross_entropy: label " + std::to_string(label) + " out of range for " +
                     std::to_string(logits.size()) + " classes");
  }
  return log_sum_exp(logits) - logits(static_cast<Eigen::Index>(label));
}

template <typename Derived>
std::size_t argmax(const Eigen::MatrixBase<Derived>& v) {
  Eigen::Index r = 0, c = 0;
  v.maxCoeff(&r, &c);
  return static_cast<std::size_t>(r * v.cols() + c);
}

}  // namespace ravit
