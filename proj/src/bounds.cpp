#include "fq/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <fmt/format.h>

namespace fq {

namespace {

constexpr double kNormTol = 1e-10;

void require_dims(int frame_dim, int n) {
  if (frame_dim < 3) {
    throw ConstraintError(fmt::format("bound assumes frame dimension >= 3 (got {})", frame_dim));
  }
  if (n < frame_dim) throw InvalidArgument(fmt::format("frame size N = {} is below dimension {}", n, frame_dim));
}

void require_delta(double delta) {
  if (!(delta >= 0.0)) throw InvalidArgument("step size must be non-negative");
}

// Per-layer term for a general FUNTF.
double general_term(const LayerStats& s) {
  if (s.variation > permutation_variation_bound(s.frame_dim(), s.N) + 1e-9) {
    throw ConstraintError(fmt::format("layer ordering has variation {:.6g} above the permutation bound {:.6g}",
                                      s.variation, permutation_variation_bound(s.frame_dim(), s.N)));
  }
  return matrix_bound(s.delta, s.frame_dim(), s.other_dim(), s.N, false);
}

// Harmonic-frame per-layer term in the closed form (8 pi + sqrt 3)/(6 sqrt 3) delta m^2 sqrt(m') / N.
double harmonic_term(const LayerStats& s) {
  if (!s.harmonic_identity) throw ConstraintError("harmonic variant needs harmonic frames with identity ordering");
  require_dims(s.frame_dim(), s.N);
  const double m = s.frame_dim();
  const double c = (8.0 * std::numbers::pi + std::sqrt(3.0)) / (6.0 * std::sqrt(3.0));
  return c * s.delta * m * m * std::sqrt(static_cast<double>(s.other_dim())) / s.N;
}

// L^(n-1) ||X|| sum_j T_j prod_{i>j} sigma_i prod_{l<j} (T_l + sigma_l).
double chain(const std::vector<double>& terms, const std::vector<LayerStats>& stats, double lipschitz,
             double input_norm) {
  const std::size_t n = stats.size();
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    double after = 1.0;
    for (std::size_t i = j + 1; i < n; ++i) after *= stats[i].sigma;
    double before = 1.0;
    for (std::size_t l = 0; l < j; ++l) before *= terms[l] + stats[l].sigma;
    sum += terms[j] * after * before;
  }
  return std::pow(lipschitz, static_cast<double>(n) - 1.0) * input_norm * sum;
}

struct UniformWidth {
  int m = 0;       // common frame dimension
  double big_m = 0;  // max of all layer widths
  double delta = 0;
  int N = 0;
};

UniformWidth same_width(const std::vector<LayerStats>& stats) {
  UniformWidth u;
  u.m = stats.front().frame_dim();
  u.delta = stats.front().delta;
  u.N = stats.front().N;
  for (std::size_t i = 0; i < stats.size(); ++i) {
    const LayerStats& s = stats[i];
    if (s.frame_dim() != u.m || s.N != u.N || s.delta != u.delta) {
      throw ConstraintError("same-width variant needs one frame dimension, N and delta for every layer");
    }
    if (i + 1 < stats.size() && s.m_out != u.m) {
      throw ConstraintError("same-width variant needs equal hidden widths");
    }
    u.big_m = std::max({u.big_m, static_cast<double>(s.m_in), static_cast<double>(s.m_out)});
  }
  require_dims(u.m, u.N);
  for (const LayerStats& s : stats) general_term(s);
  return u;
}

Eigen::MatrixXd original_matrix(const Eigen::MatrixXd& W, const std::optional<Eigen::VectorXd>& b, bool folded) {
  if (!folded) return W;
  Eigen::MatrixXd out(W.rows(), W.cols() + 1);
  out << W, *b;
  return out;
}

struct Pair {
  std::string scope;
  Eigen::MatrixXd W;
  const QuantizedMatrix* qm;
};

std::vector<Pair> matrix_pairs(const Model& model, const QuantizedModel& qmodel) {
  std::vector<Pair> out;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    if (const auto* a = std::get_if<AffineLayer>(&model.layers[i])) {
      const auto& q = std::get<QuantizedAffine>(qmodel.layers[i]);
      out.push_back({fmt::format("layer {}", i), original_matrix(a->W, a->b, q.weight.bias_folded()), &q.weight});
    } else {
      const auto& r = std::get<ResidualBlock>(model.layers[i]);
      const auto& q = std::get<QuantizedResidual>(qmodel.layers[i]);
      out.push_back({fmt::format("layer {}.1", i), original_matrix(r.W1, r.b, q.first.bias_folded()), &q.first});
      out.push_back({fmt::format("layer {}.2", i), r.W2, &q.second});
    }
  }
  return out;
}

// Worst ratio ||a(X) - b(X)|| / ||X|| over the inputs.
struct WorstSample {
  double error = 0.0;
  double norm = 0.0;
  double ratio = -1.0;

  void offer(double err, double norm_x) {
    const double r = norm_x > 0.0 ? err / norm_x : (err > 0.0 ? INFINITY : 0.0);
    if (r > ratio) {
      ratio = r;
      error = err;
      norm = norm_x;
    }
  }
};

}  // namespace

double operator_norm(const Eigen::MatrixXd& W, double tol, int max_iters) {
  if (W.size() == 0 || W.cwiseAbs().maxCoeff() == 0.0) return 0.0;
  std::mt19937_64 rng(0x5eed);
  std::normal_distribution<double> gauss;
  Eigen::VectorXd v(W.cols());
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = gauss(rng);
  v.normalize();

  double lambda = (W * v).squaredNorm();
  for (int it = 0; it < max_iters; ++it) {
    Eigen::VectorXd next = W.transpose() * (W * v);
    const double norm = next.norm();
    if (norm == 0.0) break;  // start vector in the null space
    v = next / norm;
    const double updated = (W * v).squaredNorm();
    const bool converged = std::abs(updated - lambda) <= tol * updated;
    lambda = updated;
    if (converged) break;
  }
  return std::sqrt(lambda);
}

double vector_bound(double delta, int d, int n, double variation) {
  require_delta(delta);
  if (d < 1 || n < d) throw InvalidArgument(fmt::format("vector bound needs 1 <= d <= N (got d={}, N={})", d, n));
  return delta * d / (2.0 * n) * (variation + 1.0);
}

double vector_bound_generic(double delta, int d, int n) {
  if (d < 3) throw ConstraintError(fmt::format("generic vector bound assumes d >= 3 (got {})", d));
  return vector_bound(delta, d, n, permutation_variation_bound(d, n));
}

double matrix_bound(double delta, int frame_dim, int other_dim, int n, bool harmonic) {
  require_delta(delta);
  require_dims(frame_dim, n);
  if (other_dim < 1) throw InvalidArgument("matrix bound needs at least one quantized vector");
  const double m = frame_dim;
  const double mp = other_dim;
  if (harmonic) {
    return delta * m * std::sqrt(mp) / (2.0 * n) * (harmonic_variation_bound(frame_dim) + 1.0);
  }
  return 2.0 * std::numbers::sqrt2 * delta * m * std::sqrt(m * mp) * std::pow(static_cast<double>(n), -1.0 / m);
}

LayerStats layer_stats(const Eigen::MatrixXd& W, const QuantizedMatrix& qm) {
  LayerStats s;
  s.m_in = static_cast<int>(qm.cols());
  s.m_out = static_cast<int>(qm.rows());
  s.mode = qm.mode();
  s.sigma = operator_norm(W, kNormTol) * (1.0 + kNormTol);
  s.delta = qm.delta();
  s.K = qm.K();
  s.N = qm.frame_size();
  s.variation = frame_variation(qm.frame(), qm.permutation());
  s.harmonic_identity = qm.frame().kind() == FrameKind::Harmonic && qm.permutation().is_identity();
  return s;
}

double quantized_norm_bound(const LayerStats& stats) {
  return matrix_bound(stats.delta, stats.frame_dim(), stats.other_dim(), stats.N, false) + stats.sigma;
}

double fnn_bound(const std::vector<LayerStats>& stats, double lipschitz, double input_norm, FnnVariant variant) {
  if (stats.empty()) throw InvalidArgument("fnn_bound: no layers");
  if (!(input_norm >= 0.0) || !(lipschitz > 0.0)) throw InvalidArgument("fnn_bound: invalid ||X|| or L");
  const std::size_t n = stats.size();

  switch (variant) {
    case FnnVariant::General: {
      std::vector<double> terms;
      for (const LayerStats& s : stats) terms.push_back(general_term(s));
      return chain(terms, stats, lipschitz, input_norm);
    }
    case FnnVariant::Harmonic: {
      std::vector<double> terms;
      for (const LayerStats& s : stats) terms.push_back(harmonic_term(s));
      return chain(terms, stats, lipschitz, input_norm);
    }
    case FnnVariant::SameWidth: {
      const UniformWidth u = same_width(stats);
      const double t = 2.0 * std::numbers::sqrt2 * u.delta * u.big_m * u.big_m * std::pow(u.N, -1.0 / u.m);
      return chain(std::vector<double>(n, t), stats, lipschitz, input_norm);
    }
    case FnnVariant::Simplified: {
      const UniformWidth u = same_width(stats);
      double min_sigma = INFINITY;
      for (const LayerStats& s : stats) min_sigma = std::min(min_sigma, s.sigma);
      if (!(min_sigma > 0.0)) throw ConstraintError("simplified variant needs every sigma_i > 0");
      // N >= (2 sqrt(2) delta M^2 / min sigma)^m, compared in log space.
      const double base = 2.0 * std::numbers::sqrt2 * u.delta * u.big_m * u.big_m / min_sigma;
      if (base > 0.0 && std::log(static_cast<double>(u.N)) < u.m * std::log(base)) {
        throw ConstraintError(fmt::format("simplified variant needs N >= ({:.6g})^{} (N = {})", base, u.m, u.N));
      }
      double prod = 1.0;
      double sum = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        prod *= stats[j].sigma;
        sum += std::pow(2.0, static_cast<double>(j + 1)) / stats[j].sigma;
      }
      return std::numbers::sqrt2 * u.delta * u.big_m * u.big_m * std::pow(u.N, -1.0 / u.m) *
             std::pow(lipschitz, static_cast<double>(n) - 1.0) * input_norm * prod * sum;
    }
  }
  throw InvalidArgument("unknown variant");
}

double residual_bound(double lambda, double delta, int k, int n, int n_blocks, double input_norm) {
  require_delta(delta);
  require_dims(k, n);
  if (n_blocks < 1) throw InvalidArgument("residual bound needs at least one block");
  if (!(lambda >= 0.0) || !(input_norm >= 0.0)) throw InvalidArgument("residual bound: invalid lambda or ||X||");
  const double root = delta * k * std::sqrt(static_cast<double>(k) * (k + 3.0));
  const double decay = std::pow(static_cast<double>(n), -1.0 / k);
  const double a = 4.0 * root * (root + lambda) * decay;
  const double b = std::pow(2.0 * root * decay + lambda, 2) + 1.0;
  double sum = 0.0;
  for (int j = 0; j < n_blocks; ++j) {
    sum += std::pow(lambda * lambda + 1.0, j) * std::pow(b, n_blocks - 1 - j);
  }
  return a * input_norm * sum;
}

const char* bound_kind_name(BoundKind kind) {
  switch (kind) {
    case BoundKind::Vector: return "Vector";
    case BoundKind::Matrix: return "Matrix";
    case BoundKind::MatrixHarmonic: return "MatrixHarmonic";
    case BoundKind::FNN: return "FNN";
    case BoundKind::FNNHarmonic: return "FNNHarmonic";
    case BoundKind::FNNSameWidth: return "FNNSameWidth";
    case BoundKind::FNNSimplified: return "FNNSimplified";
    case BoundKind::Residual: return "Residual";
  }
  return "?";
}

void check_same_shape(const Model& model, const QuantizedModel& qmodel) {
  model.validate();
  if (model.layers.size() != qmodel.layers.size()) {
    throw InvalidArgument(fmt::format("model has {} layers, quantized model has {}", model.layers.size(),
                                      qmodel.layers.size()));
  }
  const Model rebuilt = qmodel.reconstruct();
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const Layer& a = model.layers[i];
    const Layer& b = rebuilt.layers[i];
    if (a.index() != b.index() || layer_in(a) != layer_in(b) || layer_out(a) != layer_out(b)) {
      throw InvalidArgument(fmt::format("layer {}: model and quantized model shapes differ", i));
    }
  }
}

ErrorStats empirical_error(const Model& model, const QuantizedModel& qmodel,
                           const std::vector<Eigen::VectorXd>& inputs) {
  if (inputs.empty()) throw InvalidArgument("empirical_error: empty dataset");
  check_same_shape(model, qmodel);
  const Model rebuilt = qmodel.reconstruct();

  ErrorStats stats;
  stats.count = inputs.size();
  double total = 0.0;
  for (const Eigen::VectorXd& x : inputs) {
    const double err = (forward(model, x) - forward(rebuilt, x)).norm();
    stats.worst = std::max(stats.worst, err);
    total += err;
  }
  stats.mean = total / static_cast<double>(inputs.size());

  const auto mats = qmodel.matrices();
  const bool uniform = std::all_of(mats.begin(), mats.end(), [&](const QuantizedMatrix* m) {
    return m->frame_size() == mats.front()->frame_size() && m->delta() == mats.front()->delta();
  });
  if (!uniform) {
    stats.status = TightnessStatus::NonUniform;
  } else if (stats.mean == 0.0) {
    stats.status = TightnessStatus::ZeroError;
  } else {
    stats.tightness = std::log(stats.mean * mats.front()->frame_size() / mats.front()->delta());
  }
  return stats;
}

BoundSuite evaluate_bounds(const Model& model, const QuantizedModel& qmodel,
                           const std::vector<Eigen::VectorXd>& inputs) {
  check_same_shape(model, qmodel);
  BoundSuite suite;

  for (const Pair& p : matrix_pairs(model, qmodel)) {
    const QuantizedMatrix& qm = *p.qm;
    const Eigen::MatrixXd diff = p.W - qm.reconstruct();
    const LayerStats s = layer_stats(p.W, qm);
    const int d = s.frame_dim();
    const int n = s.N;

    const Eigen::VectorXd vec_err = qm.mode() == QuantMode::Column ? Eigen::VectorXd(diff.colwise().norm().transpose())
                                                                   : Eigen::VectorXd(diff.rowwise().norm());
    suite.reports.push_back({BoundKind::Vector, p.scope, vector_bound(s.delta, d, n, s.variation), vec_err.maxCoeff(),
                             max_vector_norm(p.W, qm.mode()), s.delta, n});

    const double err_norm = operator_norm(diff, kNormTol);
    try {
      suite.reports.push_back({BoundKind::Matrix, p.scope, general_term(s), err_norm, 0.0, s.delta, n});
    } catch (const Error& e) {
      suite.skipped.push_back(fmt::format("Matrix {}: {}", p.scope, e.what()));
    }
    if (s.harmonic_identity) {
      try {
        suite.reports.push_back(
            {BoundKind::MatrixHarmonic, p.scope, matrix_bound(s.delta, d, s.other_dim(), n, true), err_norm, 0.0, s.delta, n});
      } catch (const Error& e) {
        suite.skipped.push_back(fmt::format("MatrixHarmonic {}: {}", p.scope, e.what()));
      }
    }
  }

  if (inputs.empty()) {
    suite.skipped.push_back("network bounds: no inputs");
    return suite;
  }
  if (model.has_bias()) {
    suite.skipped.push_back("network bounds: derived for bias-free networks only");
    return suite;
  }
  const Model rebuilt = qmodel.reconstruct();

  if (!model.has_residual()) {
    std::vector<LayerStats> stats;
    for (const Pair& p : matrix_pairs(model, qmodel)) stats.push_back(layer_stats(p.W, *p.qm));
    WorstSample worst;
    for (const Eigen::VectorXd& x : inputs) worst.offer((forward(model, x) - forward(rebuilt, x)).norm(), x.norm());

    const std::pair<FnnVariant, BoundKind> variants[] = {{FnnVariant::General, BoundKind::FNN},
                                                         {FnnVariant::Harmonic, BoundKind::FNNHarmonic},
                                                         {FnnVariant::SameWidth, BoundKind::FNNSameWidth},
                                                         {FnnVariant::Simplified, BoundKind::FNNSimplified}};
    for (const auto& [variant, kind] : variants) {
      try {
        const double bound = fnn_bound(stats, model.activation.lipschitz(), worst.norm, variant);
        suite.reports.push_back({kind, "network", bound, worst.error, worst.norm, stats.front().delta, stats.front().N});
      } catch (const Error& e) {
        suite.skipped.push_back(fmt::format("{}: {}", bound_kind_name(kind), e.what()));
      }
    }
    return suite;
  }

  // Residual segments: maximal runs of consecutive blocks.
  bool has_affine = false;
  for (std::size_t a = 0; a < model.layers.size();) {
    if (!std::holds_alternative<ResidualBlock>(model.layers[a])) {
      has_affine = true;
      ++a;
      continue;
    }
    std::size_t b = a;
    while (b < model.layers.size() && std::holds_alternative<ResidualBlock>(model.layers[b])) ++b;
    const std::string scope = fmt::format("blocks {}-{}", a, b - 1);

    double lambda = 0.0;
    std::optional<double> delta;
    std::optional<int> frame_n;
    bool uniform = true;
    for (std::size_t i = a; i < b; ++i) {
      const auto& r = std::get<ResidualBlock>(model.layers[i]);
      const auto& q = std::get<QuantizedResidual>(qmodel.layers[i]);
      lambda = std::max({lambda, operator_norm(r.W1, kNormTol) * (1.0 + kNormTol),
                         operator_norm(r.W2, kNormTol) * (1.0 + kNormTol)});
      for (const QuantizedMatrix* m : {&q.first, &q.second}) {
        if (!delta) delta = m->delta();
        if (!frame_n) frame_n = m->frame_size();
        uniform = uniform && m->delta() == *delta && m->frame_size() == *frame_n;
        const double var = frame_variation(m->frame(), m->permutation());
        uniform = uniform && var <= permutation_variation_bound(m->frame().dim(), m->frame_size()) + 1e-9;
      }
    }
    if (!uniform) {
      suite.skipped.push_back(fmt::format("Residual {}: blocks need one delta, one N and bounded orderings", scope));
      a = b;
      continue;
    }

    Model head{std::vector<Layer>(model.layers.begin(), model.layers.begin() + static_cast<std::ptrdiff_t>(a)),
               model.activation};
    Model seg{std::vector<Layer>(model.layers.begin() + static_cast<std::ptrdiff_t>(a),
                                 model.layers.begin() + static_cast<std::ptrdiff_t>(b)),
              model.activation};
    Model seg_q{std::vector<Layer>(rebuilt.layers.begin() + static_cast<std::ptrdiff_t>(a),
                                   rebuilt.layers.begin() + static_cast<std::ptrdiff_t>(b)),
                model.activation};
    WorstSample worst;
    for (const Eigen::VectorXd& x : inputs) {
      Eigen::VectorXd y = x;
      if (a > 0) {
        y = forward(head, x);
        model.activation.apply(y);
      }
      worst.offer((forward(seg, y) - forward(seg_q, y)).norm(), y.norm());
    }
    const int k = static_cast<int>(std::get<ResidualBlock>(model.layers[a]).width());
    try {
      const double bound = residual_bound(lambda, *delta, k, *frame_n, static_cast<int>(b - a), worst.norm);
      suite.reports.push_back({BoundKind::Residual, scope, bound, worst.error, worst.norm, *delta, *frame_n});
    } catch (const Error& e) {
      suite.skipped.push_back(fmt::format("Residual {}: {}", scope, e.what()));
    }
    a = b;
  }
  if (has_affine) {
    suite.skipped.push_back("network bounds: mixed affine/residual stacks are bounded per residual segment only");
  }
  return suite;
}

}  // namespace fq
