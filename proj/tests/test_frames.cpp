#include <doctest.h>

#include <cmath>
#include <numbers>

#include "fq/frames.hpp"
#include "support.hpp"

using namespace fq;

namespace {

// S computed one outer product at a time.
Eigen::MatrixXd summed_outer_products(const Eigen::MatrixXd& rows) {
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(rows.cols(), rows.cols());
  for (Eigen::Index i = 0; i < rows.rows(); ++i) s += rows.row(i).transpose() * rows.row(i);
  return s;
}

double max_entry(const Eigen::MatrixXd& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("harmonic frame operator is (N/d) I") {
  for (auto [d, n] : {std::pair{4, 4}, {3, 6}, {2, 2}, {8, 32}, {5, 5}, {6, 7}, {256, 512}}) {
    CAPTURE(d);
    CAPTURE(n);
    const Frame f = Frame::harmonic(d, n);
    CHECK(f.dim() == d);
    CHECK(f.size() == n);
    CHECK(f.kind() == FrameKind::Harmonic);
    CHECK(f.is_funtf());
    const Eigen::MatrixXd s = summed_outer_products(f.rows());
    const Eigen::MatrixXd target = Eigen::MatrixXd::Identity(d, d) * (static_cast<double>(n) / d);
    CHECK(max_entry(s - target) <= 1e-9);
    CHECK((f.rows().rowwise().norm().array() - 1.0).abs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("harmonic frame (2, 2) is an orthonormal pair") {
  const Frame f = Frame::harmonic(2, 2);
  CHECK(std::abs(f.element(0).dot(f.element(1))) <= 1e-12);
}

TEST_CASE("harmonic frame rows follow the trigonometric layout") {
  const int n = 7;
  const Frame even = Frame::harmonic(4, n);
  const Frame odd = Frame::harmonic(5, n);
  for (int k = 0; k < n; ++k) {
    const double t = 2.0 * std::numbers::pi * k / n;
    CHECK(even.rows()(k, 0) == doctest::Approx(std::sqrt(0.5) * std::cos(t)).epsilon(1e-14));
    CHECK(even.rows()(k, 3) == doctest::Approx(std::sqrt(0.5) * std::sin(2 * t)).epsilon(1e-14));
    CHECK(odd.rows()(k, 0) == doctest::Approx(1.0 / std::sqrt(5.0)).epsilon(1e-14));
    CHECK(odd.rows()(k, 4) == doctest::Approx(std::sqrt(0.4) * std::sin(2 * t)).epsilon(1e-14));
  }
}

TEST_CASE("harmonic frame rejects bad sizes") {
  CHECK_THROWS_AS(Frame::harmonic(3, 2), InvalidArgument);
  CHECK_THROWS_AS(Frame::harmonic(1, 4), InvalidArgument);
  CHECK_THROWS_AS(Frame::harmonic(0, 0), InvalidArgument);
}

TEST_CASE("frame operator") {
  const Frame basis = Frame::from_rows(Eigen::MatrixXd::Identity(3, 3));
  CHECK(max_entry(frame_operator(basis) - Eigen::MatrixXd::Identity(3, 3)) == 0.0);

  CHECK(max_entry(frame_operator(Frame::harmonic(3, 6)) - 2.0 * Eigen::MatrixXd::Identity(3, 3)) <= 1e-9);

  Eigen::MatrixXd repeated(4, 2);
  repeated << 1, 0, 1, 0, 0, 1, 0, 1;
  const Eigen::MatrixXd s = frame_operator(Frame::from_rows(repeated));
  CHECK(max_entry(s - 2.0 * Eigen::MatrixXd::Identity(2, 2)) == 0.0);

  std::mt19937_64 rng(11);
  const Frame f = test::random_unit_vectors(5, 40, rng);
  const Eigen::MatrixXd sr = frame_operator(f);
  CHECK(max_entry(sr - sr.transpose()) <= 1e-12);
  CHECK(max_entry(sr - summed_outer_products(f.rows())) <= 1e-12);
}

TEST_CASE("frame operator eigenvalues lie between empirical frame bounds") {
  std::mt19937_64 rng(12);
  const Frame f = test::random_unit_vectors(4, 20, rng);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(frame_operator(f));
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  CHECK(lo > 0.0);
  for (int t = 0; t < 500; ++t) {
    const Eigen::VectorXd x = test::gaussian_vector(4, rng);
    const double ratio = analysis(f, x).squaredNorm() / x.squaredNorm();
    CHECK(ratio >= lo - 1e-12);
    CHECK(ratio <= hi + 1e-12);
  }
}

TEST_CASE("analysis") {
  const Frame basis = Frame::from_rows(Eigen::MatrixXd::Identity(3, 3));
  CHECK(analysis(basis, Eigen::Vector3d::Zero()).isZero());
  CHECK(analysis(basis, Eigen::Vector3d(1, 2, 3)) == Eigen::Vector3d(1, 2, 3));
  CHECK_THROWS_AS(analysis(basis, Eigen::Vector2d(1, 2)), InvalidArgument);

  std::mt19937_64 rng(13);
  const Frame h = Frame::harmonic(3, 6);
  for (int t = 0; t < 100; ++t) {
    const Eigen::VectorXd x = test::gaussian_vector(3, rng);
    const Eigen::VectorXd c = analysis(h, x);
    CHECK(c.cwiseAbs().maxCoeff() <= x.norm() + 1e-12);
    CHECK((synthesis_dual(h, c, Permutation::identity(6)) - x).norm() <= 1e-10 * x.norm());
  }
}

TEST_CASE("synthesis_dual") {
  const Frame basis = Frame::from_rows(Eigen::MatrixXd::Identity(3, 3));
  const auto id = Permutation::identity(3);
  CHECK(synthesis_dual(basis, Eigen::Vector3d::Zero(), id).isZero());
  CHECK(synthesis_dual(basis, Eigen::Vector3d(0.5, 0.5, -0.5), id) == Eigen::Vector3d(0.5, 0.5, -0.5));

  std::mt19937_64 rng(14);
  SUBCASE("tight identity for FUNTFs") {
    for (int t = 0; t < 50; ++t) {
      const Frame f = test::random_funtf(6, 3, rng);
      const Eigen::VectorXd x = test::gaussian_vector(6, rng);
      const Eigen::VectorXd naive = (6.0 / 18.0) * f.rows().transpose() * (f.rows() * x);
      CHECK((naive - x).norm() <= 1e-10 * x.norm());
      CHECK((synthesis_dual(f, analysis(f, x), Permutation::identity(18)) - x).norm() <= 1e-10 * x.norm());
    }
  }
  SUBCASE("general frames go through S^-1") {
    for (int t = 0; t < 50; ++t) {
      const Frame f = test::random_unit_vectors(5, 12, rng);
      const Eigen::VectorXd x = test::gaussian_vector(5, rng);
      CHECK((synthesis_dual(f, analysis(f, x), Permutation::identity(12)) - x).norm() <= 1e-10 * x.norm());
    }
  }
  SUBCASE("permuted coefficients") {
    const Frame f = test::random_unit_vectors(3, 5, rng);
    const auto p = Permutation::from_order({4, 2, 0, 1, 3});
    const Eigen::VectorXd x = test::gaussian_vector(3, rng);
    Eigen::VectorXd c(5);
    for (int i = 0; i < 5; ++i) c(i) = f.element(static_cast<int>(p.order[i])).dot(x);
    CHECK((synthesis_dual(f, c, p) - x).norm() <= 1e-10 * x.norm());
  }
  SUBCASE("singular operator") {
    Eigen::MatrixXd rows(2, 2);
    rows << 1, 0, 1, 0;
    CHECK_THROWS_AS(synthesis_dual(Frame::from_rows(rows), Eigen::Vector2d(1, 1), Permutation::identity(2)),
                    NumericalError);
  }
  CHECK_THROWS_AS(synthesis_dual(basis, Eigen::Vector2d(1, 1), id), InvalidArgument);
}

TEST_CASE("permutations") {
  CHECK(Permutation::identity(4).is_identity());
  CHECK_FALSE(Permutation::from_order({1, 0}).is_identity());
  CHECK_THROWS_AS(Permutation::from_order({0, 0}), InvalidArgument);
  CHECK_THROWS_AS(Permutation::from_order({0, 2}), InvalidArgument);
}

TEST_CASE("frame variation") {
  const Frame basis = Frame::from_rows(Eigen::MatrixXd::Identity(3, 3));
  CHECK(frame_variation(basis, Permutation::identity(3)) == doctest::Approx(2.0 * std::sqrt(2.0)).epsilon(1e-15));
  CHECK(frame_variation(Frame::from_rows(Eigen::MatrixXd::Ones(1, 3) / std::sqrt(3.0)), Permutation::identity(1)) ==
        0.0);
  const double h = frame_variation(Frame::harmonic(3, 64), Permutation::identity(64));
  CHECK(h == doctest::Approx(5.048012128623906).epsilon(1e-12));
  CHECK(h <= harmonic_variation_bound(3));
  CHECK(harmonic_variation_bound(3) == doctest::Approx(14.510394913873743).epsilon(1e-14));
}

TEST_CASE("harmonic identity variation stays under 2 pi (d+1)/sqrt 3") {
  for (int d = 3; d <= 40; d += 3) {
    for (int n : {d, d + 1, 2 * d, 100, 1000}) {
      if (n < d) continue;
      CAPTURE(d);
      CAPTURE(n);
      CHECK(frame_variation(Frame::harmonic(d, n), Permutation::identity(static_cast<std::size_t>(n))) <=
            harmonic_variation_bound(d));
    }
  }
}

TEST_CASE("permutation bound formula") {
  CHECK(permutation_variation_bound(3, 512) == doctest::Approx(617.2714151813607).epsilon(1e-13));
  CHECK(permutation_variation_bound(3, 1) == 0.0);
}

TEST_CASE("find_permutation") {
  CHECK(find_permutation(Frame::harmonic(8, 256)).kind == PermutationKind::Identity);
  CHECK(find_permutation(Frame::harmonic(8, 256)).is_identity());
  const Frame single = Frame::from_rows(Eigen::RowVector3d(1, 0, 0));
  CHECK(find_permutation(single).is_identity());

  std::mt19937_64 rng(15);
  const Frame f = test::random_unit_vectors(3, 512, rng);
  const Permutation p = find_permutation(f);
  CHECK(p.kind == PermutationKind::Serpentine);
  CHECK(p.size() == 512);
  CHECK_NOTHROW(Permutation::from_order(p.order));
  CHECK(frame_variation(f, p) <= permutation_variation_bound(3, 512));
  CHECK(frame_variation(f, p) < frame_variation(f, Permutation::identity(512)));
}

TEST_CASE("serpentine orderings satisfy the variation bound") {
  std::mt19937_64 rng(16);
  for (int d : {3, 4, 5, 8}) {
    for (int n : {27, 64, 200, 1000, 2048}) {
      CAPTURE(d);
      CAPTURE(n);
      const Frame f = test::random_unit_vectors(d, n, rng);
      const Permutation p = find_permutation(f);
      CHECK(frame_variation(f, p) <= permutation_variation_bound(d, n));
      const Frame g = test::harmonic_as_explicit(d, std::max(n, d));
      CHECK(frame_variation(g, find_permutation(g)) <= permutation_variation_bound(d, g.size()));
    }
  }
}

TEST_CASE("verify_funtf") {
  const FuntfReport h = verify_funtf(Frame::harmonic(256, 512), 1e-9);
  CHECK(h.unit_norm_ok);
  CHECK(h.tight_ok);
  CHECK(h.frame_bound_A == 2.0);

  const FuntfReport b = verify_funtf(Frame::from_rows(Eigen::MatrixXd::Identity(3, 3)), 1e-12);
  CHECK(b.unit_norm_ok);
  CHECK(b.tight_ok);
  CHECK(b.frame_bound_A == 1.0);

  const FuntfReport scaled = verify_funtf(Frame::from_rows(0.9 * Frame::harmonic(3, 6).rows()), 1e-9);
  CHECK_FALSE(scaled.unit_norm_ok);
  CHECK_FALSE(Frame::from_rows(0.9 * Frame::harmonic(3, 6).rows()).is_funtf());

  std::mt19937_64 rng(17);
  const FuntfReport loose = verify_funtf(test::random_unit_vectors(3, 10, rng), 1e-9);
  CHECK(loose.unit_norm_ok);
  CHECK_FALSE(loose.tight_ok);
  CHECK(loose.frame_bound_A < 10.0 / 3.0);

  CHECK_THROWS_AS(verify_funtf(Frame::harmonic(3, 6), 0.0), InvalidArgument);
}
