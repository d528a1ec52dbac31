#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"
#include "resil/corefinder.hpp"

using namespace resil;
using Catch::Approx;

TEST_CASE("certify_core_variance basics") {
  // single point at mu
  Matrix one(3, 1);
  one.col(0) = Vector::Ones(3);
  const auto zero = certify_core_variance(one, Vector::Ones(3), NormSpec::euclidean());
  CHECK(zero.lower == Approx(0.0).margin(1e-12));
  CHECK(zero.upper == Approx(0.0).margin(1e-12));

  // antipodal unit vectors: variance 1 along e1
  Matrix pm(2, 2);
  pm << 1, -1, 0, 0;
  const auto anti = certify_core_variance(pm, Vector::Zero(2), NormSpec::euclidean());
  CHECK(anti.lower == Approx(1.0));
  CHECK(anti.upper == Approx(1.0));

  // l1 mode matches brute-force sign-vector maximization
  auto rng = make_rng(61);
  const Matrix pts = testoracle::random_matrix(3, 6, rng);
  const Vector mu = pts.rowwise().mean();
  const auto ci = certify_core_variance(pts, mu, NormSpec::l1_via_p(8));
  const auto verts = support_vertices(NormSpec::l1_via_p(8), 3, VertexMode::ExactL1);
  double brute = 0.0;
  for (Index j = 0; j < verts->cols(); ++j)
    brute = std::max(brute, ((pts.colwise() - mu).transpose() * verts->col(j)).squaredNorm());
  brute /= double(pts.cols());
  CHECK(ci.upper == Approx(brute).epsilon(1e-9));
  CHECK(ci.lower == Approx(brute).epsilon(1e-9));

  CHECK_THROWS_AS(certify_core_variance(Matrix(3, 0), Vector::Zero(3), NormSpec::euclidean()),
                  InvalidInput);
}

TEST_CASE("find_core rejects degenerate keep fractions") {
  PointSet s(Matrix::Identity(4, 4), Vector::Zero(4));
  CHECK_THROWS_AS(find_core(s, 1.0, NormSpec::euclidean()), InvalidConfig);
  CHECK_THROWS_AS(find_core(s, 0.5, NormSpec::euclidean()), InvalidConfig);
}

TEST_CASE("find_core: all points equal gives a zero-variance full core") {
  Matrix pts = Matrix::Ones(3, 6) * 2.5;
  const CoreResult core = find_core(PointSet(pts), 0.75, NormSpec::pnorm(2.0));
  CHECK(core.core.size() == 6);
  CHECK(core.certified_variance.upper == Approx(0.0).margin(1e-12));
}

TEST_CASE("find_core: feasibility and rounding soundness") {
  auto rng = make_rng(67);
  for (int trial = 0; trial < 6; ++trial) {
    const Index n = 30 + 10 * trial;
    const Matrix pts = testoracle::random_matrix(4, n, rng);
    const double keep = 0.75;
    const NormSpec spec = trial % 2 ? NormSpec::pnorm(1.5) : NormSpec::euclidean();
    const CoreResult core = find_core(PointSet(pts), keep, spec);
    CHECK(core.weights.minCoeff() >= -1e-12);
    CHECK(core.weights.maxCoeff() <= 1.0 + 1e-12);
    CHECK(core.weights.sum() >= keep * double(n) - 1e-9);
    CHECK(double(core.core.size()) >= (2 * keep - 1) * double(n) - 1e-9);
    CHECK(core.rounded_objective <= 2.0 * core.continuous_objective + 1e-9);
  }
}

TEST_CASE("find_core: certified variance within the powering-up bound") {
  // basis set: measured first-moment bound sigma, core variance <= 32 sigma^2/gamma
  for (const double p : {1.5, 2.0}) {
    const NormSpec spec = p == 2.0 ? NormSpec::euclidean() : NormSpec::pnorm(p);
    const Index nb = 8;
    PointSet s(Matrix::Identity(nb, nb));
    const Matrix centered = s.points.colwise() - s.mu();
    auto [m1, dir] = max_moment_over_dual_ball(centered, 1.0, spec);
    (void)dir;
    const double sigma_hat = m1 / double(nb);
    const CoreResult core = find_core(s, 0.75, spec);
    CHECK(double(core.core.size()) >= double(nb) / 2);
    CHECK(core.certified_variance.upper <= 32.0 * sigma_hat * sigma_hat / (p - 1.0) + 1e-12);
  }

  // Gaussian sample
  auto rng = make_rng(71);
  const Matrix pts = testoracle::random_matrix(5, 120, rng);
  PointSet s(pts);
  const NormSpec spec = NormSpec::pnorm(1.5);
  const Matrix centered = pts.colwise() - s.mu();
  auto [m1, dir] = max_moment_over_dual_ball(centered, 1.0, spec);
  (void)dir;
  const double sigma_hat = m1 / 120.0;
  const CoreResult core = find_core(s, 0.75, spec);
  CHECK(core.certified_variance.upper <= 32.0 * sigma_hat * sigma_hat / 0.5 + 1e-12);
}
