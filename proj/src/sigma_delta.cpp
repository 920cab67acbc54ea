#include "fq/sigma_delta.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace fq {

Alphabet::Alphabet(int K, double delta) : K_(K), delta_(delta) {
  if (K < 1 || !(delta > 0.0) || !std::isfinite(delta)) {
    throw InvalidArgument(fmt::format("alphabet requires K >= 1 and delta > 0 (got K={}, delta={})", K, delta));
  }
}

std::uint32_t Alphabet::nearest_level(double v) const {
  const int top = levels() - 1;
  if (!std::isfinite(v)) return v > 0 ? static_cast<std::uint32_t>(top) : 0u;
  // Cell j covers [(-K + j) delta, (-K + j + 1) delta).
  const double t = std::floor(v / delta_ + K_);
  int j = static_cast<int>(std::clamp(t, 0.0, static_cast<double>(top)));
  // Division rounding can land one cell off right at a boundary.
  if (j < top && std::abs(v - value(j + 1)) <= std::abs(v - value(j))) ++j;
  if (j > 0 && std::abs(v - value(j - 1)) < std::abs(v - value(j))) --j;
  return static_cast<std::uint32_t>(j);
}

std::vector<double> Alphabet::values() const {
  std::vector<double> out(static_cast<std::size_t>(levels()));
  for (int j = 0; j < levels(); ++j) out[j] = value(j);
  return out;
}

std::vector<double> alphabet_values(int K, double delta) {
  return Alphabet(K, delta).values();
}

double scalar_quantize(double v, const Alphabet& alphabet) {
  return alphabet.value(alphabet.nearest_level(v));
}

SigmaDeltaTrace sd_quantize_sequence(std::span<const double> x, const Alphabet& alphabet) {
  SigmaDeltaTrace trace;
  trace.q.reserve(x.size());
  trace.levels.reserve(x.size());
  trace.u.reserve(x.size() + 1);
  trace.u.push_back(0.0);

  const double limit = alphabet.max_amplitude();
  double state = 0.0;
  for (double xn : x) {
    if (std::abs(xn) > limit) trace.stability_warning = true;
    const std::uint32_t level = alphabet.nearest_level(state + xn);
    const double qn = alphabet.value(level);
    state = state + xn - qn;
    trace.levels.push_back(level);
    trace.q.push_back(qn);
    trace.u.push_back(state);
  }
  return trace;
}

VectorQuantization quantize_vector(const Eigen::VectorXd& x, const Frame& frame, const Permutation& perm,
                                   const Alphabet& alphabet) {
  if (x.size() != frame.dim()) {
    throw InvalidArgument(fmt::format("quantize_vector: vector dimension {} != frame dimension {}", x.size(),
                                      frame.dim()));
  }
  if (perm.size() != static_cast<std::size_t>(frame.size())) {
    throw InvalidArgument("quantize_vector: permutation length differs from frame size");
  }
  if (!frame.is_funtf()) {
    throw ConstraintError("quantize_vector: frame is not a finite unit-norm tight frame");
  }
  const double norm = x.norm();
  if (norm > alphabet.max_amplitude()) {
    throw ConstraintError(fmt::format("quantize_vector: ||x|| = {:.17g} exceeds (K - 1/2) delta = {:.17g}", norm,
                                      alphabet.max_amplitude()));
  }

  const Eigen::VectorXd coeffs = frame.rows() * x;
  std::vector<double> ordered(perm.size());
  for (std::size_t n = 0; n < perm.size(); ++n) ordered[n] = coeffs(static_cast<Eigen::Index>(perm.order[n]));

  SigmaDeltaTrace trace = sd_quantize_sequence(ordered, alphabet);

  Eigen::VectorXd sum = Eigen::VectorXd::Zero(frame.dim());
  for (std::size_t n = 0; n < perm.size(); ++n) {
    sum += trace.q[n] * frame.rows().row(static_cast<Eigen::Index>(perm.order[n])).transpose();
  }

  VectorQuantization out;
  out.reconstruction = (static_cast<double>(frame.dim()) / frame.size()) * sum;
  out.levels = std::move(trace.levels);
  out.codes = std::move(trace.q);
  return out;
}

}  // namespace fq
