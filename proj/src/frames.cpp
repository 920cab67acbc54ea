#include "fq/frames.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <fmt/format.h>

namespace fq {

namespace {

constexpr double kFuntfTol = 1e-9;

FuntfReport check(const Eigen::MatrixXd& rows, double tol) {
  FuntfReport report;
  const double n = static_cast<double>(rows.rows());
  const double d = static_cast<double>(rows.cols());

  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    report.max_norm_deviation = std::max(report.max_norm_deviation, std::abs(rows.row(i).norm() - 1.0));
  }
  report.unit_norm_ok = report.max_norm_deviation <= tol;

  const Eigen::MatrixXd s = rows.transpose() * rows;
  const Eigen::MatrixXd target = (n / d) * Eigen::MatrixXd::Identity(rows.cols(), rows.cols());
  report.max_tightness_deviation = (s - target).cwiseAbs().maxCoeff();
  report.tight_ok = report.max_tightness_deviation <= tol;

  if (report.tight_ok) {
    report.frame_bound_A = n / d;
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s, Eigen::EigenvaluesOnly);
    report.frame_bound_A = eig.eigenvalues().minCoeff();
  }
  return report;
}

// Serpentine ordering of points in [-1/2, 1/2]^d over a grid with `buckets`
// cells per axis. Buckets at each level alternate direction so that the end
// of one cell's tour sits next to the start of the following cell's tour.
void serpentine(const Eigen::MatrixXd& pts, std::vector<std::size_t>& idx, std::size_t begin, std::size_t end,
                int coord, bool reverse, int buckets, std::vector<std::size_t>& out) {
  const int d = static_cast<int>(pts.cols());
  auto value = [&](std::size_t i) { return pts(static_cast<Eigen::Index>(i), coord); };

  if (coord == d - 1) {
    std::stable_sort(idx.begin() + begin, idx.begin() + end, [&](std::size_t a, std::size_t b) {
      return reverse ? value(a) > value(b) : value(a) < value(b);
    });
    out.insert(out.end(), idx.begin() + begin, idx.begin() + end);
    return;
  }

  auto bucket_of = [&](std::size_t i) {
    const int b = static_cast<int>(std::floor((value(i) + 0.5) * buckets));
    return std::clamp(b, 0, buckets - 1);
  };
  std::stable_sort(idx.begin() + begin, idx.begin() + end,
                   [&](std::size_t a, std::size_t b) { return bucket_of(a) < bucket_of(b); });

  // Boundaries of each bucket within [begin, end).
  std::vector<std::size_t> bounds(buckets + 1, begin);
  for (std::size_t k = begin; k < end; ++k) {
    ++bounds[bucket_of(idx[k]) + 1];
  }
  for (int b = 0; b < buckets; ++b) {
    bounds[b + 1] += bounds[b] - begin;
  }

  for (int step = 0; step < buckets; ++step) {
    const int b = reverse ? buckets - 1 - step : step;
    if (bounds[b] == bounds[b + 1]) continue;
    const bool child_reverse = reverse != (b % 2 == 1);
    serpentine(pts, idx, bounds[b], bounds[b + 1], coord + 1, child_reverse, buckets, out);
  }
}

}  // namespace

Frame::Frame(Eigen::MatrixXd rows, FrameKind kind) : rows_(std::move(rows)), kind_(kind) {
  const FuntfReport report = check(rows_, kFuntfTol);
  funtf_ = report.unit_norm_ok && report.tight_ok;
}

Frame Frame::harmonic(int d, int n) {
  if (d < 2 || n < d) {
    throw InvalidArgument(fmt::format("harmonic frame requires 2 <= d <= N (got d={}, N={})", d, n));
  }
  const int h = d / 2;
  const bool odd = d % 2 == 1;
  // For even d with N == d the integer frequency h aliases onto the Nyquist
  // line (sin terms vanish); half-integer frequencies keep the frame tight.
  const double shift = (!odd && n == d) ? 0.5 : 0.0;
  const double scale = std::sqrt(2.0 / d);

  Eigen::MatrixXd rows(n, d);
  for (int k = 0; k < n; ++k) {
    int c = 0;
    if (odd) rows(k, c++) = 1.0 / std::sqrt(static_cast<double>(d));
    for (int j = 1; j <= h; ++j) {
      const double angle = 2.0 * std::numbers::pi * (j - shift) * k / n;
      rows(k, c++) = scale * std::cos(angle);
      rows(k, c++) = scale * std::sin(angle);
    }
  }
  Frame frame(std::move(rows), FrameKind::Harmonic);
  if (!frame.is_funtf()) {
    throw NumericalError(fmt::format("harmonic frame H^{}_{} failed tightness verification", d, n));
  }
  return frame;
}

Frame Frame::from_rows(Eigen::MatrixXd rows) {
  if (rows.rows() < 1 || rows.cols() < 1) {
    throw InvalidArgument("frame needs at least one element of dimension >= 1");
  }
  return Frame(std::move(rows), FrameKind::Explicit);
}

Permutation Permutation::identity(std::size_t n) {
  Permutation p;
  p.order.resize(n);
  std::iota(p.order.begin(), p.order.end(), std::size_t{0});
  p.kind = PermutationKind::Identity;
  return p;
}

Permutation Permutation::from_order(std::vector<std::size_t> order) {
  std::vector<bool> seen(order.size(), false);
  for (std::size_t v : order) {
    if (v >= order.size() || seen[v]) {
      throw InvalidArgument("permutation order is not a bijection");
    }
    seen[v] = true;
  }
  Permutation p;
  p.order = std::move(order);
  p.kind = PermutationKind::Explicit;
  return p;
}

bool Permutation::is_identity() const {
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (order[i] != i) return false;
  }
  return true;
}

Eigen::MatrixXd frame_operator(const Frame& frame) {
  return frame.rows().transpose() * frame.rows();
}

Eigen::VectorXd analysis(const Frame& frame, const Eigen::VectorXd& x) {
  if (x.size() != frame.dim()) {
    throw InvalidArgument(fmt::format("analysis: vector has dimension {}, frame has {}", x.size(), frame.dim()));
  }
  return frame.rows() * x;
}

Eigen::VectorXd synthesis_dual(const Frame& frame, const Eigen::VectorXd& coeffs, const Permutation& perm) {
  if (coeffs.size() != frame.size() || perm.size() != static_cast<std::size_t>(frame.size())) {
    throw InvalidArgument(fmt::format("synthesis: {} coefficients / {} permutation entries for a frame of {} elements",
                                      coeffs.size(), perm.size(), frame.size()));
  }
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(frame.dim());
  for (Eigen::Index i = 0; i < coeffs.size(); ++i) {
    sum += coeffs(i) * frame.rows().row(static_cast<Eigen::Index>(perm.order[i])).transpose();
  }
  if (frame.is_funtf()) {
    return (static_cast<double>(frame.dim()) / frame.size()) * sum;
  }
  Eigen::LLT<Eigen::MatrixXd> llt(frame_operator(frame));
  if (llt.info() != Eigen::Success) {
    throw NumericalError("synthesis: frame operator is singular (elements do not span R^d)");
  }
  return llt.solve(sum);
}

double frame_variation(const Frame& frame, const Permutation& perm) {
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < perm.size(); ++i) {
    total += (frame.rows().row(static_cast<Eigen::Index>(perm.order[i])) -
              frame.rows().row(static_cast<Eigen::Index>(perm.order[i + 1])))
                 .norm();
  }
  return total;
}

double permutation_variation_bound(int d, int n) {
  const double c = 4.0 * std::sqrt(d + 3.0);
  return c * std::pow(static_cast<double>(n), 1.0 - 1.0 / d) - c;
}

double harmonic_variation_bound(int d) {
  return 2.0 * std::numbers::pi * (d + 1.0) / std::sqrt(3.0);
}

PermutationBoundError::PermutationBoundError(double achieved, double threshold)
    : ConstraintError(fmt::format("permutation variation {:.6g} exceeds bound {:.6g}", achieved, threshold)),
      achieved_(achieved),
      threshold_(threshold) {}

Permutation find_permutation(const Frame& frame) {
  const std::size_t n = static_cast<std::size_t>(frame.size());
  const int d = frame.dim();
  Permutation perm;
  if (frame.kind() == FrameKind::Harmonic || n <= 1) {
    perm = Permutation::identity(n);
  } else {
    perm.order = serpentine_order(frame);
    perm.kind = PermutationKind::Serpentine;
  }

  if (d >= 3) {
    const double achieved = frame_variation(frame, perm);
    const double threshold = permutation_variation_bound(d, static_cast<int>(n));
    if (achieved > threshold) throw PermutationBoundError(achieved, threshold);
  }
  return perm;
}

std::vector<std::size_t> serpentine_order(const Frame& frame) {
  const std::size_t n = static_cast<std::size_t>(frame.size());
  const int d = frame.dim();
  const int buckets = std::max(1, static_cast<int>(std::ceil(std::pow(static_cast<double>(n), 1.0 / d) - 1e-9)));

  const Eigen::MatrixXd half = 0.5 * frame.rows();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::vector<std::size_t> out;
  out.reserve(n);
  serpentine(half, idx, 0, n, 0, false, buckets, out);
  return out;
}

FuntfReport verify_funtf(const Frame& frame, double tol) {
  if (!(tol > 0.0)) throw InvalidArgument("verify_funtf: tolerance must be positive");
  return check(frame.rows(), tol);
}

}  // namespace fq
