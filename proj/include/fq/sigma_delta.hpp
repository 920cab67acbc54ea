#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "fq/frames.hpp"

namespace fq {

/// Midrise alphabet {(-K + j + 1/2) delta : j = 0..2K-1}.
class Alphabet {
 public:
  Alphabet(int K, double delta);

  int K() const { return K_; }
  double delta() const { return delta_; }
  int levels() const { return 2 * K_; }
  /// Largest representable magnitude, (K - 1/2) delta.
  double max_amplitude() const { return (K_ - 0.5) * delta_; }

  double value(std::uint32_t level) const { return (-K_ + static_cast<double>(level) + 0.5) * delta_; }
  /// Level index of the nearest value; midpoints go to the larger value and
  /// inputs outside the range saturate at the extreme levels.
  std::uint32_t nearest_level(double v) const;

  std::vector<double> values() const;

 private:
  int K_;
  double delta_;
};

std::vector<double> alphabet_values(int K, double delta);

double scalar_quantize(double v, const Alphabet& alphabet);

struct SigmaDeltaTrace {
  std::vector<double> q;             ///< N quantized values
  std::vector<std::uint32_t> levels; ///< level index of each q
  std::vector<double> u;             ///< N + 1 states, u[0] = 0
  /// Some |x[n]| exceeded (K - 1/2) delta, so |u| <= delta/2 is not guaranteed.
  bool stability_warning = false;
};

/// First-order recursion q_n = Q(u_{n-1} + x_n), u_n = u_{n-1} + x_n - q_n,
/// evaluated in input order with u_0 = 0.
SigmaDeltaTrace sd_quantize_sequence(std::span<const double> x, const Alphabet& alphabet);

struct VectorQuantization {
  std::vector<std::uint32_t> levels;
  std::vector<double> codes;
  Eigen::VectorXd reconstruction;
};

/// Runs the recursion over (<x, e_{p(1)}>, ..., <x, e_{p(N)}>) and rebuilds
/// x_bar = (d/N) sum_i codes[i] e_{p(i)}.
///
/// Throws ConstraintError when ||x|| > (K - 1/2) delta or the frame is not a
/// FUNTF, and InvalidArgument on dimension mismatch.
VectorQuantization quantize_vector(const Eigen::VectorXd& x, const Frame& frame, const Permutation& perm,
                                   const Alphabet& alphabet);

}  // namespace fq
