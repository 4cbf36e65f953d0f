#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "ravit/ravit.hpp"
#include "ravit/rng.hpp"
#include "ravit/tensor.hpp"

namespace ravit::oracle {

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double sd = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0.0, sd);
  return m;
}

inline Tensor random_tensor(Shape shape, Rng& rng, double sd = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.normal(0.0, sd);
  return t;
}

inline Tensor random_image(std::size_t channels, std::size_t side, Rng& rng) {
  Tensor t({channels, side, side});
  for (double& v : t.data()) v = rng.uniform();
  return t;
}

// Triple loop, no Eigen products.
inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix c = Matrix::Zero(a.rows(), b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (Eigen::Index k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

inline double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / scale;
}

/// Central difference d loss / d x at `x`, which `loss` reads by reference.
inline double central_difference(double& x, const std::function<double()>& loss, double h = 1e-5) {
  const double saved = x;
  x = saved + h;
  const double up = loss();
  x = saved - h;
  const double down = loss();
  x = saved;
  return (up - down) / (2.0 * h);
}

/// 2-branch model at side 16 with a narrow width for fast tests.
inline RavitConfig tiny_config(std::vector<std::size_t> layers = {1, 1}, std::size_t side = 16) {
  RavitConfig c = RavitConfig::pyramid(side, std::move(layers));
  c.embed_dim = 8;
  c.hidden_dim = 16;
  c.heads = 2;
  c.num_classes = 4;
  return c;
}

}  // namespace ravit::oracle
