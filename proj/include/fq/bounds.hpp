#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fq/network.hpp"
#include "fq/quantizer.hpp"

namespace fq {

/// Largest singular value by power iteration on W^T W. Stops when the
/// relative change of the eigenvalue estimate drops below `tol` or after
/// `max_iters` iterations. Returns 0 for a zero matrix.
double operator_norm(const Eigen::MatrixXd& W, double tol = 1e-10, int max_iters = 10000);

/// (delta d / 2N) (variation + 1).
double vector_bound(double delta, int d, int n, double variation);
/// vector_bound with the variation replaced by the permutation existence bound.
double vector_bound_generic(double delta, int d, int n);

/// Operator-norm bound on W - Q for a matrix quantized against a frame for
/// R^frame_dim with `other_dim` vectors:
///   general:  2 sqrt(2) delta m sqrt(m m') N^(-1/m)
///   harmonic: (delta m sqrt(m') / 2N) (2 pi (m+1)/sqrt(3) + 1)
/// Throws ConstraintError when frame_dim < 3.
double matrix_bound(double delta, int frame_dim, int other_dim, int n, bool harmonic);

/// Per-layer quantities entering the network bounds. For Column mode the
/// frame lives in R^m_out; for Row mode in R^m_in.
struct LayerStats {
  int m_in = 0;
  int m_out = 0;
  QuantMode mode = QuantMode::Column;
  double sigma = 0.0;  ///< ||W|| (an upper estimate is fine)
  double delta = 0.0;
  int K = 1;
  int N = 0;
  double variation = 0.0;          ///< sigma(F, p) of the layer's frame ordering
  bool harmonic_identity = false;  ///< harmonic frame with identity ordering

  int frame_dim() const { return mode == QuantMode::Column ? m_out : m_in; }
  int other_dim() const { return mode == QuantMode::Column ? m_in : m_out; }
};

/// Statistics of a quantized matrix and its original; sigma is the power
/// iteration estimate inflated by its tolerance.
LayerStats layer_stats(const Eigen::MatrixXd& W, const QuantizedMatrix& qm);

/// matrix_bound(general) + sigma.
double quantized_norm_bound(const LayerStats& stats);

enum class FnnVariant { General, Harmonic, SameWidth, Simplified };

/// Closed-form bounds on ||f(X) - f_Q(X)|| for a bias-free feed-forward net:
///   General    - general per-layer terms chained through sigma_i and ||Q_l||
///   Harmonic   - the same chain with the O(1/N) harmonic-frame term
///   SameWidth  - uniform term 2 sqrt(2) delta M^2 N^(-1/m)
///   Simplified - sqrt(2) delta M^2 N^(-1/m) L^(n-1) ||X|| prod sigma_i sum 2^j / sigma_j
/// Throws ConstraintError naming the failed precondition.
double fnn_bound(const std::vector<LayerStats>& stats, double lipschitz, double input_norm, FnnVariant variant);

/// Bound on ||g(X) - g_Q(X)|| for n residual blocks of width k quantized with
/// a common frame of N elements and step delta; lambda bounds every block
/// weight norm.
double residual_bound(double lambda, double delta, int k, int n, int n_blocks, double input_norm);

enum class BoundKind { Vector, Matrix, MatrixHarmonic, FNN, FNNHarmonic, FNNSameWidth, FNNSimplified, Residual };
const char* bound_kind_name(BoundKind kind);

struct BoundReport {
  BoundKind kind = BoundKind::Matrix;
  std::string scope;  ///< e.g. "layer 1", "blocks 1-2", "network"
  double theoretical = 0.0;
  double empirical = 0.0;
  double input_norm = 0.0;
  double delta = 0.0;
  int N = 0;
};

struct BoundSuite {
  std::vector<BoundReport> reports;
  std::vector<std::string> skipped;  ///< variants whose hypotheses do not hold, with the reason
};

/// Evaluates every applicable bound for a model and its quantization.
/// Network-level empirical values take, over `inputs`, the sample with the
/// largest ||f(X) - f_Q(X)|| / ||X||; all bounds are linear in ||X||.
BoundSuite evaluate_bounds(const Model& model, const QuantizedModel& qmodel, const std::vector<Eigen::VectorXd>& inputs);

enum class TightnessStatus { Ok, ZeroError, NonUniform };

struct ErrorStats {
  double worst = 0.0;
  double mean = 0.0;
  /// log E[||f(X) - f_Q(X)|| N / delta]; meaningful only when status == Ok.
  double tightness = 0.0;
  TightnessStatus status = TightnessStatus::Ok;
  std::size_t count = 0;
};

/// Throws InvalidArgument on an empty input set.
ErrorStats empirical_error(const Model& model, const QuantizedModel& qmodel, const std::vector<Eigen::VectorXd>& inputs);

/// Throws InvalidArgument unless every matrix has the same layer topology.
void check_same_shape(const Model& model, const QuantizedModel& qmodel);

}  // namespace fq
