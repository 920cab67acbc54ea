#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "fq/error.hpp"

namespace fq {

enum class FrameKind { Harmonic, Explicit };

/// A finite frame for R^d stored as an N x d matrix, one element per row.
///
/// Rows are not required to be unit norm at construction so that
/// verify_funtf() can report on arbitrary inputs; the quantizer only accepts
/// frames for which is_funtf() holds.
class Frame {
 public:
  /// Real harmonic frame H^d_N. Requires 2 <= d <= N.
  static Frame harmonic(int d, int n);
  /// Frame with caller-supplied elements (rows). Requires d >= 1, N >= 1.
  static Frame from_rows(Eigen::MatrixXd rows);

  int dim() const { return static_cast<int>(rows_.cols()); }
  int size() const { return static_cast<int>(rows_.rows()); }
  FrameKind kind() const { return kind_; }
  const Eigen::MatrixXd& rows() const { return rows_; }
  auto element(int i) const { return rows_.row(i); }

  /// Unit-norm and tight (S = (N/d) I), both within 1e-9.
  bool is_funtf() const { return funtf_; }

 private:
  Frame(Eigen::MatrixXd rows, FrameKind kind);

  Eigen::MatrixXd rows_;
  FrameKind kind_;
  bool funtf_ = false;
};

enum class PermutationKind { Identity, Serpentine, Explicit };

/// Ordering of frame elements; order[n] is the 0-based index of the element
/// visited at step n.
struct Permutation {
  std::vector<std::size_t> order;
  PermutationKind kind = PermutationKind::Explicit;

  static Permutation identity(std::size_t n);
  /// Throws InvalidArgument unless `order` is a bijection on {0..n-1}.
  static Permutation from_order(std::vector<std::size_t> order);

  std::size_t size() const { return order.size(); }
  bool is_identity() const;
};

struct FuntfReport {
  bool unit_norm_ok = false;
  bool tight_ok = false;
  /// N/d when tight, otherwise the smallest eigenvalue of S (optimal lower bound).
  double frame_bound_A = 0.0;
  double max_norm_deviation = 0.0;
  double max_tightness_deviation = 0.0;
};

/// S = sum_i e_i e_i^T.
Eigen::MatrixXd frame_operator(const Frame& frame);

/// Coefficients <x, e_i>.
Eigen::VectorXd analysis(const Frame& frame, const Eigen::VectorXd& x);

/// sum_i c_i S^{-1} e_{p(i)}. Uses the scalar dual d/N for FUNTFs and a
/// Cholesky solve otherwise; throws NumericalError when S is singular.
Eigen::VectorXd synthesis_dual(const Frame& frame, const Eigen::VectorXd& coeffs,
                               const Permutation& perm);

/// sigma(F, p) = sum_{i} ||e_{p(i)} - e_{p(i+1)}||.
double frame_variation(const Frame& frame, const Permutation& perm);

/// Right-hand side of the existence bound on frame variation:
/// 4 sqrt(d+3) N^(1-1/d) - 4 sqrt(d+3).
double permutation_variation_bound(int d, int n);

/// Uniform bound on the identity-ordered variation of a harmonic frame:
/// 2 pi (d+1) / sqrt(3).
double harmonic_variation_bound(int d);

/// Thrown by find_permutation when the constructed ordering misses the bound.
class PermutationBoundError : public ConstraintError {
 public:
  PermutationBoundError(double achieved, double threshold);
  double achieved() const { return achieved_; }
  double threshold() const { return threshold_; }

 private:
  double achieved_;
  double threshold_;
};

/// Identity for harmonic frames; otherwise a serpentine ordering of (1/2)F
/// by recursive coordinate bucketing. For d >= 3 the result is checked
/// against permutation_variation_bound() and PermutationBoundError is thrown
/// on a miss.
Permutation find_permutation(const Frame& frame);

/// Serpentine ordering regardless of frame kind, without the bound check.
std::vector<std::size_t> serpentine_order(const Frame& frame);

FuntfReport verify_funtf(const Frame& frame, double tol);

}  // namespace fq
