#pragma once

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "fq/frames.hpp"
#include "fq/network.hpp"

namespace fq::test {

inline Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = g(rng);
  }
  return m;
}

inline Eigen::VectorXd gaussian_vector(Eigen::Index n, std::mt19937_64& rng) { return gaussian(n, 1, rng).col(0); }

/// Union of `copies` random orthonormal bases: a FUNTF with N = copies * d.
inline Frame random_funtf(int d, int copies, std::mt19937_64& rng) {
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(copies) * d, d);
  for (int c = 0; c < copies; ++c) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian(d, d, rng));
    Eigen::MatrixXd q = qr.householderQ();
    rows.middleRows(static_cast<Eigen::Index>(c) * d, d) = q.transpose();
  }
  return Frame::from_rows(rows);
}

/// N independent uniformly distributed unit vectors (generally not tight).
inline Frame random_unit_vectors(int d, int n, std::mt19937_64& rng) {
  Eigen::MatrixXd rows = gaussian(n, d, rng);
  rows.rowwise().normalize();
  return Frame::from_rows(rows);
}

/// Harmonic frame rows without the harmonic tag, so orderings are searched for.
inline Frame harmonic_as_explicit(int d, int n) { return Frame::from_rows(Frame::harmonic(d, n).rows()); }

inline double svd_norm(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues()(0);
}

/// Biasless affine stack with the given widths, entries N(0, scale^2 / in).
inline Model random_fnn(const std::vector<int>& widths, std::mt19937_64& rng, double scale = 1.0) {
  Model m;
  m.activation = Activation::relu();
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    Eigen::MatrixXd w = gaussian(widths[i + 1], widths[i], rng) * (scale / std::sqrt(static_cast<double>(widths[i])));
    m.layers.push_back(AffineLayer{w, std::nullopt});
  }
  return m;
}

inline Model random_resnet(int k, int blocks, std::mt19937_64& rng, double scale = 0.5) {
  Model m;
  m.activation = Activation::relu();
  for (int i = 0; i < blocks; ++i) {
    const double s = scale / std::sqrt(static_cast<double>(k));
    m.layers.push_back(ResidualBlock{gaussian(k, k, rng) * s, gaussian(k, k, rng) * s, std::nullopt});
  }
  return m;
}

/// Brute-force nearest alphabet value, ties toward the larger value.
inline double nearest_value(double v, int K, double delta) {
  double best = (-K + 0.5) * delta;
  for (int j = 1; j < 2 * K; ++j) {
    const double a = (-K + j + 0.5) * delta;
    if (std::abs(v - a) <= std::abs(v - best)) best = a;
  }
  return best;
}

}  // namespace fq::test
