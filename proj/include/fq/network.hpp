#pragma once

#include <cstddef>
#include <optional>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "fq/error.hpp"

namespace fq {

enum class ActivationKind { ReLU, LeakyReLU, Identity };

/// Elementwise activation with sigma(0) = 0 and a known Lipschitz constant.
struct Activation {
  ActivationKind kind = ActivationKind::ReLU;
  double alpha = 0.01;  ///< LeakyReLU negative slope

  static Activation relu() { return {ActivationKind::ReLU, 0.0}; }
  static Activation leaky_relu(double alpha) { return {ActivationKind::LeakyReLU, alpha}; }
  static Activation identity() { return {ActivationKind::Identity, 0.0}; }

  double lipschitz() const;
  void apply(Eigen::VectorXd& v) const;
};

/// x -> W x + b.
struct AffineLayer {
  Eigen::MatrixXd W;
  std::optional<Eigen::VectorXd> b;

  Eigen::Index in() const { return W.cols(); }
  Eigen::Index out() const { return W.rows(); }
};

/// x -> W2 relu(W1 x + b) + x with square k x k weights.
struct ResidualBlock {
  Eigen::MatrixXd W1;
  Eigen::MatrixXd W2;
  std::optional<Eigen::VectorXd> b;

  Eigen::Index width() const { return W1.rows(); }
};

using Layer = std::variant<AffineLayer, ResidualBlock>;

Eigen::Index layer_in(const Layer& layer);
Eigen::Index layer_out(const Layer& layer);

/// Layers composed with the activation between consecutive layers and none
/// after the last one.
struct Model {
  std::vector<Layer> layers;
  Activation activation;

  /// Throws InvalidArgument on broken dimension chains, non-square residual
  /// blocks or a non-ReLU activation in a network with residual blocks.
  void validate() const;
  Eigen::Index input_dim() const;
  Eigen::Index output_dim() const;
  bool has_residual() const;
  bool has_bias() const;
};

Eigen::VectorXd forward(const Model& model, const Eigen::VectorXd& x);

/// Index of the largest coordinate; ties resolve to the smallest index.
std::size_t classify(const Eigen::VectorXd& output);
std::size_t classify(const Model& model, const Eigen::VectorXd& x);

}  // namespace fq
