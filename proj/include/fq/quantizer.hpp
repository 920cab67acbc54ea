#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "fq/frames.hpp"
#include "fq/network.hpp"
#include "fq/sigma_delta.hpp"

namespace fq {

/// Column mode quantizes the columns of W against a frame for R^rows; Row
/// mode quantizes the rows (the columns of W^T) against a frame for R^cols.
enum class QuantMode { Column, Row };

/// K = 2^(bits-1), delta = headroom * max_j ||w_j|| / (K - 1/2).
struct BitBudget {
  int bits = 1;
  double headroom = 1.0;
};
/// Given delta, the smallest K with max_j ||w_j|| <= (K - 1/2) delta.
struct FixedStep {
  double delta = 0.0;
};
/// Caller-chosen pair, validated against the level condition.
struct ExplicitLevels {
  int K = 1;
  double delta = 0.0;
};
using StepPolicy = std::variant<BitBudget, FixedStep, ExplicitLevels>;

struct LevelStep {
  int K = 1;
  double delta = 0.0;
};

/// Largest Euclidean norm among the vectors that `mode` quantizes.
double max_vector_norm(const Eigen::MatrixXd& W, QuantMode mode);

/// Picks (K, delta) with max_j ||w_j|| <= (K - 1/2) delta. Throws
/// InvalidArgument for an all-zero W and ConstraintError when an explicit
/// pair is too small.
LevelStep select_K_delta(const Eigen::MatrixXd& W, const StepPolicy& policy, QuantMode mode);

/// Smallest b with 2^b >= 2K.
int bits_per_code(int K);

/// Level-index codes of a weight matrix against a shared frame.
///
/// codes() is (vectors x N) row-major, where vectors = cols in Column mode and
/// rows in Row mode. The quantized weight matrix is materialized once at
/// construction; the object is immutable afterwards.
class QuantizedMatrix {
 public:
  QuantizedMatrix(std::shared_ptr<const Frame> frame, Permutation perm, LevelStep levels, QuantMode mode,
                  Eigen::Index rows, Eigen::Index cols, std::vector<std::uint32_t> codes, bool bias_folded);

  const Frame& frame() const { return *frame_; }
  const std::shared_ptr<const Frame>& frame_ptr() const { return frame_; }
  const Permutation& permutation() const { return perm_; }
  int K() const { return levels_.K; }
  double delta() const { return levels_.delta; }
  QuantMode mode() const { return mode_; }
  Eigen::Index rows() const { return rows_; }
  Eigen::Index cols() const { return cols_; }
  bool bias_folded() const { return bias_folded_; }
  Eigen::Index vectors() const { return mode_ == QuantMode::Column ? cols_ : rows_; }
  int frame_size() const { return frame_->size(); }
  int bits_per_code() const { return fq::bits_per_code(levels_.K); }

  const std::vector<std::uint32_t>& codes() const { return codes_; }
  std::uint32_t code(Eigen::Index vector, Eigen::Index k) const {
    return codes_[static_cast<std::size_t>(vector * frame_->size() + k)];
  }
  /// Alphabet values of the codes, (vectors x N).
  Eigen::MatrixXd code_values() const;

  /// Quantized weight matrix, rows x cols.
  const Eigen::MatrixXd& reconstruct() const { return dense_; }

  /// Q x evaluated from the codes without the dense matrix:
  /// (d/N) E_p^T (V^T x) in Column mode, (d/N) V (E_p x) in Row mode, where
  /// E_p stacks the permuted frame elements as rows.
  Eigen::VectorXd apply_codes(const Eigen::VectorXd& x) const;

 private:
  Eigen::MatrixXd permuted_elements() const;

  std::shared_ptr<const Frame> frame_;
  Permutation perm_;
  LevelStep levels_;
  QuantMode mode_;
  Eigen::Index rows_;
  Eigen::Index cols_;
  std::vector<std::uint32_t> codes_;
  bool bias_folded_;
  Eigen::MatrixXd dense_;
};

/// Frame quantization of one matrix: every column (Row mode: every row) is
/// expanded in the frame, run through the first-order recursion in the order
/// given by `perm`, and stored as level indices.
QuantizedMatrix quantize_matrix(const Eigen::MatrixXd& W, std::shared_ptr<const Frame> frame, Permutation perm,
                                LevelStep levels, QuantMode mode, bool bias_folded = false);

/// Frame choice for one layer: a harmonic frame of size N in the dimension
/// implied by the mode, or an explicit frame.
struct LayerQuantSpec {
  int frame_size = 0;
  std::shared_ptr<const Frame> explicit_frame;
  std::optional<Permutation> permutation;  ///< defaults to find_permutation()
  StepPolicy policy = FixedStep{};
  QuantMode mode = QuantMode::Column;
  bool fold_bias = true;  ///< only relevant for layers with a bias
};

struct QuantizationConfig {
  std::vector<LayerQuantSpec> layers;

  /// Same harmonic frame size and policy for all layers; the final affine
  /// layer uses Row mode when `last_layer_row` is set.
  static QuantizationConfig uniform(const Model& model, int frame_size, StepPolicy policy, bool last_layer_row);
};

struct QuantizedAffine {
  QuantizedMatrix weight;
  std::optional<Eigen::VectorXd> bias;  ///< float bias when it was not folded
};

struct QuantizedResidual {
  QuantizedMatrix first;
  QuantizedMatrix second;
  std::optional<Eigen::VectorXd> bias;
};

using QuantizedLayer = std::variant<QuantizedAffine, QuantizedResidual>;

struct QuantizedModel {
  std::vector<QuantizedLayer> layers;
  Activation activation;

  /// Model with every weight (and folded bias) replaced by its reconstruction.
  Model reconstruct() const;
  /// Quantized matrices in layer order (two per residual block).
  std::vector<const QuantizedMatrix*> matrices() const;
};

/// Quantizes each layer per `cfg`; errors name the offending layer index.
QuantizedModel quantize_network(const Model& model, const QuantizationConfig& cfg);

Eigen::VectorXd forward_quantized(const QuantizedModel& qmodel, const Eigen::VectorXd& x);
std::size_t classify(const QuantizedModel& qmodel, const Eigen::VectorXd& x);

struct StorageReport {
  std::uint64_t code_bits = 0;
  std::uint64_t dense_bits_32 = 0;
  std::int64_t saved_bits = 0;  ///< dense_bits_32 - code_bits
  std::uint64_t frame_overhead_bits = 0;

  StorageReport& operator+=(const StorageReport& other);
};

StorageReport storage_bits(const QuantizedMatrix& qm);
StorageReport storage_bits(const QuantizedModel& qmodel);

}  // namespace fq
