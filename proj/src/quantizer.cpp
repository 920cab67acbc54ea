#include "fq/quantizer.hpp"

#include <cmath>
#include <map>

#include <fmt/format.h>

namespace fq {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

Eigen::VectorXd vector_norms(const Eigen::MatrixXd& W, QuantMode mode) {
  return mode == QuantMode::Column ? Eigen::VectorXd(W.colwise().norm().transpose())
                                   : Eigen::VectorXd(W.rowwise().norm());
}

// Smallest delta' >= delta with max_norm <= (K - 1/2) delta' in floating point.
double cover(double max_norm, int K, double delta) {
  while ((K - 0.5) * delta < max_norm) delta = std::nextafter(delta, INFINITY);
  return delta;
}

void check_levels(const Eigen::VectorXd& norms, LevelStep levels) {
  const double limit = (levels.K - 0.5) * levels.delta;
  for (Eigen::Index j = 0; j < norms.size(); ++j) {
    if (norms(j) > limit) {
      throw ConstraintError(fmt::format("vector {} has norm {:.17g} > (K - 1/2) delta = {:.17g} (K={}, delta={})", j,
                                        norms(j), limit, levels.K, levels.delta));
    }
  }
}

Eigen::MatrixXd augmented(const Eigen::MatrixXd& W, const Eigen::VectorXd& b) {
  Eigen::MatrixXd out(W.rows(), W.cols() + 1);
  out << W, b;
  return out;
}

}  // namespace

double max_vector_norm(const Eigen::MatrixXd& W, QuantMode mode) {
  if (W.size() == 0) return 0.0;
  return vector_norms(W, mode).maxCoeff();
}

LevelStep select_K_delta(const Eigen::MatrixXd& W, const StepPolicy& policy, QuantMode mode) {
  const double max_norm = max_vector_norm(W, mode);
  if (!(max_norm > 0.0)) {
    throw InvalidArgument("select_K_delta: all-zero matrix, supply (K, delta) explicitly");
  }
  return std::visit(overloaded{
                        [&](const BitBudget& p) {
                          if (p.bits < 1 || p.bits > 31) throw InvalidArgument("bit budget must be in [1, 31]");
                          if (!(p.headroom >= 1.0)) throw InvalidArgument("headroom factor must be >= 1");
                          const int K = 1 << (p.bits - 1);
                          return LevelStep{K, cover(max_norm, K, p.headroom * max_norm / (K - 0.5))};
                        },
                        [&](const FixedStep& p) {
                          if (!(p.delta > 0.0)) throw InvalidArgument("step size must be positive");
                          int K = std::max(1, static_cast<int>(std::ceil(max_norm / p.delta + 0.5)));
                          while ((K - 0.5) * p.delta < max_norm) ++K;
                          return LevelStep{K, p.delta};
                        },
                        [&](const ExplicitLevels& p) {
                          if (p.K < 1 || !(p.delta > 0.0)) throw InvalidArgument("explicit pair needs K >= 1, delta > 0");
                          check_levels(vector_norms(W, mode), LevelStep{p.K, p.delta});
                          return LevelStep{p.K, p.delta};
                        },
                    },
                    policy);
}

int bits_per_code(int K) {
  int b = 0;
  while ((std::int64_t{1} << b) < 2 * static_cast<std::int64_t>(K)) ++b;
  return b;
}

QuantizedMatrix::QuantizedMatrix(std::shared_ptr<const Frame> frame, Permutation perm, LevelStep levels,
                                 QuantMode mode, Eigen::Index rows, Eigen::Index cols,
                                 std::vector<std::uint32_t> codes, bool bias_folded)
    : frame_(std::move(frame)),
      perm_(std::move(perm)),
      levels_(levels),
      mode_(mode),
      rows_(rows),
      cols_(cols),
      codes_(std::move(codes)),
      bias_folded_(bias_folded) {
  if (!frame_) throw InvalidArgument("quantized matrix needs a frame");
  if (levels_.K < 1 || !(levels_.delta > 0.0)) throw InvalidArgument("quantized matrix needs K >= 1, delta > 0");
  const Eigen::Index dim = mode_ == QuantMode::Column ? rows_ : cols_;
  if (frame_->dim() != dim) {
    throw InvalidArgument(fmt::format("frame dimension {} does not match quantized vector length {}", frame_->dim(), dim));
  }
  if (perm_.size() != static_cast<std::size_t>(frame_->size())) {
    throw InvalidArgument("permutation length differs from frame size");
  }
  if (codes_.size() != static_cast<std::size_t>(vectors() * frame_->size())) {
    throw InvalidArgument(fmt::format("expected {} codes, got {}", vectors() * frame_->size(), codes_.size()));
  }
  const auto levels_count = static_cast<std::uint32_t>(2 * levels_.K);
  for (std::uint32_t c : codes_) {
    if (c >= levels_count) throw InvalidArgument(fmt::format("code {} outside alphabet of {} levels", c, levels_count));
  }

  // (d/N) E_p^T V^T is d x vectors.
  const double scale = static_cast<double>(frame_->dim()) / frame_->size();
  const Eigen::MatrixXd synth = scale * (permuted_elements().transpose() * code_values().transpose());
  dense_ = mode_ == QuantMode::Column ? synth : Eigen::MatrixXd(synth.transpose());
}

Eigen::MatrixXd QuantizedMatrix::code_values() const {
  const Alphabet alphabet(levels_.K, levels_.delta);
  const Eigen::Index n = frame_->size();
  Eigen::MatrixXd values(vectors(), n);
  for (Eigen::Index j = 0; j < vectors(); ++j) {
    for (Eigen::Index k = 0; k < n; ++k) values(j, k) = alphabet.value(code(j, k));
  }
  return values;
}

Eigen::MatrixXd QuantizedMatrix::permuted_elements() const {
  Eigen::MatrixXd ep(frame_->size(), frame_->dim());
  for (Eigen::Index k = 0; k < ep.rows(); ++k) {
    ep.row(k) = frame_->rows().row(static_cast<Eigen::Index>(perm_.order[static_cast<std::size_t>(k)]));
  }
  return ep;
}

Eigen::VectorXd QuantizedMatrix::apply_codes(const Eigen::VectorXd& x) const {
  if (x.size() != cols_) throw InvalidArgument("apply_codes: input dimension mismatch");
  const double scale = static_cast<double>(frame_->dim()) / frame_->size();
  if (mode_ == QuantMode::Column) {
    return scale * (permuted_elements().transpose() * (code_values().transpose() * x));
  }
  return scale * (code_values() * (permuted_elements() * x));
}

QuantizedMatrix quantize_matrix(const Eigen::MatrixXd& W, std::shared_ptr<const Frame> frame, Permutation perm,
                                LevelStep levels, QuantMode mode, bool bias_folded) {
  if (!frame) throw InvalidArgument("quantize_matrix: missing frame");
  const Eigen::Index dim = mode == QuantMode::Column ? W.rows() : W.cols();
  if (frame->dim() != dim) {
    throw InvalidArgument(fmt::format("quantize_matrix: {} mode needs a frame for R^{}, got R^{}",
                                      mode == QuantMode::Column ? "column" : "row", dim, frame->dim()));
  }
  if (!frame->is_funtf()) throw ConstraintError("quantize_matrix: frame is not a finite unit-norm tight frame");
  if (perm.size() != static_cast<std::size_t>(frame->size())) {
    throw InvalidArgument("quantize_matrix: permutation length differs from frame size");
  }
  const Alphabet alphabet(levels.K, levels.delta);
  check_levels(vector_norms(W, mode), levels);

  // Coefficients of every vector at once: column j holds <w_j, e_k>.
  const Eigen::MatrixXd coeffs = mode == QuantMode::Column ? Eigen::MatrixXd(frame->rows() * W)
                                                           : Eigen::MatrixXd(frame->rows() * W.transpose());
  const Eigen::Index n = frame->size();
  std::vector<std::uint32_t> codes(static_cast<std::size_t>(coeffs.cols() * n));
  std::vector<double> ordered(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < coeffs.cols(); ++j) {
    for (Eigen::Index k = 0; k < n; ++k) {
      ordered[static_cast<std::size_t>(k)] = coeffs(static_cast<Eigen::Index>(perm.order[static_cast<std::size_t>(k)]), j);
    }
    const SigmaDeltaTrace trace = sd_quantize_sequence(ordered, alphabet);
    std::copy(trace.levels.begin(), trace.levels.end(), codes.begin() + j * n);
  }
  return QuantizedMatrix(std::move(frame), std::move(perm), levels, mode, W.rows(), W.cols(), std::move(codes),
                         bias_folded);
}

QuantizationConfig QuantizationConfig::uniform(const Model& model, int frame_size, StepPolicy policy,
                                               bool last_layer_row) {
  QuantizationConfig cfg;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    LayerQuantSpec spec;
    spec.frame_size = frame_size;
    spec.policy = policy;
    const bool last = i + 1 == model.layers.size();
    if (last && last_layer_row && std::holds_alternative<AffineLayer>(model.layers[i])) spec.mode = QuantMode::Row;
    cfg.layers.push_back(spec);
  }
  return cfg;
}

namespace {

class FrameCache {
 public:
  std::shared_ptr<const Frame> harmonic(int d, int n) {
    auto& slot = cache_[{d, n}];
    if (!slot) slot = std::make_shared<const Frame>(Frame::harmonic(d, n));
    return slot;
  }

 private:
  std::map<std::pair<int, int>, std::shared_ptr<const Frame>> cache_;
};

QuantizedMatrix quantize_layer_matrix(const Eigen::MatrixXd& W, const LayerQuantSpec& spec, bool folded,
                                      FrameCache& cache) {
  const int dim = static_cast<int>(spec.mode == QuantMode::Column ? W.rows() : W.cols());
  std::shared_ptr<const Frame> frame = spec.explicit_frame;
  if (frame) {
    if (frame->dim() != dim) {
      throw InvalidArgument(fmt::format("explicit frame is for R^{}, layer needs R^{}", frame->dim(), dim));
    }
  } else {
    if (spec.frame_size <= 0) throw InvalidArgument("frame size not set");
    frame = cache.harmonic(dim, spec.frame_size);
  }
  Permutation perm = spec.permutation ? *spec.permutation : find_permutation(*frame);
  const LevelStep levels = select_K_delta(W, spec.policy, spec.mode);
  return quantize_matrix(W, std::move(frame), std::move(perm), levels, spec.mode, folded);
}

}  // namespace

QuantizedModel quantize_network(const Model& model, const QuantizationConfig& cfg) {
  model.validate();
  if (cfg.layers.size() != model.layers.size()) {
    throw InvalidArgument(fmt::format("config has {} layer entries, model has {} layers", cfg.layers.size(),
                                      model.layers.size()));
  }
  FrameCache cache;
  QuantizedModel out;
  out.activation = model.activation;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const LayerQuantSpec& spec = cfg.layers[i];
    try {
      if (const auto* a = std::get_if<AffineLayer>(&model.layers[i])) {
        const bool fold = a->b && spec.fold_bias;
        QuantizedMatrix weight = quantize_layer_matrix(fold ? augmented(a->W, *a->b) : a->W, spec, fold, cache);
        out.layers.push_back(QuantizedAffine{std::move(weight), fold ? std::nullopt : a->b});
      } else {
        const auto& r = std::get<ResidualBlock>(model.layers[i]);
        if (spec.mode != QuantMode::Column) throw InvalidArgument("residual blocks are quantized in column mode");
        const bool fold = r.b && spec.fold_bias;
        QuantizedMatrix first = quantize_layer_matrix(fold ? augmented(r.W1, *r.b) : r.W1, spec, fold, cache);
        QuantizedMatrix second = quantize_layer_matrix(r.W2, spec, false, cache);
        out.layers.push_back(QuantizedResidual{std::move(first), std::move(second), fold ? std::nullopt : r.b});
      }
    } catch (const ConstraintError& e) {
      throw ConstraintError(fmt::format("layer {}: {}", i, e.what()));
    } catch (const InvalidArgument& e) {
      throw InvalidArgument(fmt::format("layer {}: {}", i, e.what()));
    }
  }
  return out;
}

namespace {

// Splits a folded (W, b) reconstruction back into its weight and bias.
void unfold(const QuantizedMatrix& qm, const std::optional<Eigen::VectorXd>& float_bias, Eigen::MatrixXd& W,
            std::optional<Eigen::VectorXd>& b) {
  const Eigen::MatrixXd& dense = qm.reconstruct();
  if (qm.bias_folded()) {
    W = dense.leftCols(dense.cols() - 1);
    b = dense.col(dense.cols() - 1);
  } else {
    W = dense;
    b = float_bias;
  }
}

}  // namespace

Model QuantizedModel::reconstruct() const {
  Model model;
  model.activation = activation;
  for (const QuantizedLayer& layer : layers) {
    if (const auto* a = std::get_if<QuantizedAffine>(&layer)) {
      AffineLayer out;
      unfold(a->weight, a->bias, out.W, out.b);
      model.layers.emplace_back(std::move(out));
    } else {
      const auto& r = std::get<QuantizedResidual>(layer);
      ResidualBlock out;
      unfold(r.first, r.bias, out.W1, out.b);
      out.W2 = r.second.reconstruct();
      model.layers.emplace_back(std::move(out));
    }
  }
  return model;
}

std::vector<const QuantizedMatrix*> QuantizedModel::matrices() const {
  std::vector<const QuantizedMatrix*> out;
  for (const QuantizedLayer& layer : layers) {
    if (const auto* a = std::get_if<QuantizedAffine>(&layer)) {
      out.push_back(&a->weight);
    } else {
      const auto& r = std::get<QuantizedResidual>(layer);
      out.push_back(&r.first);
      out.push_back(&r.second);
    }
  }
  return out;
}

namespace {

Eigen::VectorXd apply_affine(const QuantizedMatrix& qm, const std::optional<Eigen::VectorXd>& float_bias,
                             const Eigen::VectorXd& v) {
  const Eigen::MatrixXd& dense = qm.reconstruct();
  if (qm.bias_folded()) {
    const Eigen::Index n = dense.cols() - 1;
    Eigen::VectorXd out = dense.leftCols(n) * v;
    out += dense.col(n);
    return out;
  }
  Eigen::VectorXd out = dense * v;
  if (float_bias) out += *float_bias;
  return out;
}

Eigen::Index matrix_input_dim(const QuantizedMatrix& qm) { return qm.bias_folded() ? qm.cols() - 1 : qm.cols(); }

}  // namespace

Eigen::VectorXd forward_quantized(const QuantizedModel& qmodel, const Eigen::VectorXd& x) {
  if (qmodel.layers.empty()) throw InvalidArgument("quantized model has no layers");
  const auto& first = qmodel.layers.front();
  const Eigen::Index in = std::holds_alternative<QuantizedAffine>(first)
                              ? matrix_input_dim(std::get<QuantizedAffine>(first).weight)
                              : matrix_input_dim(std::get<QuantizedResidual>(first).first);
  if (x.size() != in) throw InvalidArgument(fmt::format("input has dimension {}, model expects {}", x.size(), in));

  Eigen::VectorXd v = x;
  for (std::size_t i = 0; i < qmodel.layers.size(); ++i) {
    if (i > 0) qmodel.activation.apply(v);
    if (const auto* a = std::get_if<QuantizedAffine>(&qmodel.layers[i])) {
      if (matrix_input_dim(a->weight) != v.size()) throw InvalidArgument(fmt::format("layer {}: shape mismatch", i));
      v = apply_affine(a->weight, a->bias, v);
    } else {
      const auto& r = std::get<QuantizedResidual>(qmodel.layers[i]);
      if (qmodel.activation.kind != ActivationKind::ReLU) {
        throw InvalidArgument("residual blocks require the ReLU activation");
      }
      if (matrix_input_dim(r.first) != v.size()) throw InvalidArgument(fmt::format("layer {}: shape mismatch", i));
      Eigen::VectorXd inner = apply_affine(r.first, r.bias, v);
      qmodel.activation.apply(inner);
      v = r.second.reconstruct() * inner + v;
    }
  }
  return v;
}

std::size_t classify(const QuantizedModel& qmodel, const Eigen::VectorXd& x) {
  return classify(forward_quantized(qmodel, x));
}

StorageReport& StorageReport::operator+=(const StorageReport& other) {
  code_bits += other.code_bits;
  dense_bits_32 += other.dense_bits_32;
  saved_bits += other.saved_bits;
  frame_overhead_bits += other.frame_overhead_bits;
  return *this;
}

StorageReport storage_bits(const QuantizedMatrix& qm) {
  StorageReport r;
  r.code_bits = static_cast<std::uint64_t>(qm.vectors()) * static_cast<std::uint64_t>(qm.frame_size()) *
                static_cast<std::uint64_t>(qm.bits_per_code());
  r.dense_bits_32 = 32ull * static_cast<std::uint64_t>(qm.rows()) * static_cast<std::uint64_t>(qm.cols());
  r.saved_bits = static_cast<std::int64_t>(r.dense_bits_32) - static_cast<std::int64_t>(r.code_bits);
  r.frame_overhead_bits = qm.frame().kind() == FrameKind::Harmonic
                              ? 64ull
                              : 64ull * static_cast<std::uint64_t>(qm.frame().size()) *
                                    static_cast<std::uint64_t>(qm.frame().dim());
  return r;
}

StorageReport storage_bits(const QuantizedModel& qmodel) {
  StorageReport total;
  for (const QuantizedMatrix* qm : qmodel.matrices()) total += storage_bits(*qm);
  return total;
}

}  // namespace fq
