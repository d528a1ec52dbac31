#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"
#include "resil/norms.hpp"

using namespace resil;
using Catch::Approx;

TEST_CASE("norm_eval matches the closed forms") {
  Vector v(2);
  v << 3, 4;
  CHECK(norm_eval(v, NormSpec::euclidean()) == Approx(5.0));

  Vector w(4);
  w << 5, 1, 1, 1;
  CHECK(norm_eval(w, NormSpec::top_k_l1(2)) == Approx(6.0));

  Vector u(3);
  u << 1, -2, 3;
  const double expect = std::pow(1.0 + std::pow(2.0, 1.5) + std::pow(3.0, 1.5), 2.0 / 3.0);
  CHECK(norm_eval(u, NormSpec::pnorm(1.5)) == Approx(expect));

  CHECK(norm_eval(Vector::Zero(3), NormSpec::pnorm(1.5)) == 0.0);
  Vector bad(2);
  bad << 1.0, std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(norm_eval(bad, NormSpec::euclidean()), InvalidInput);
}

TEST_CASE("dual_norm_eval: exact formulas and sampled agreement") {
  Vector v(2);
  v << 3, 4;
  CHECK(dual_norm_eval(v, NormSpec::euclidean()) == Approx(5.0));

  Vector w(2);
  w << 1, 1;
  CHECK(dual_norm_eval(w, NormSpec::pnorm(1.5)) == Approx(std::pow(2.0, 1.0 / 3.0)));

  Vector t(4);
  t << 3, 1, 1, 1;
  const NormSpec topk = NormSpec::top_k_l1(2);
  CHECK(dual_norm_eval(t, topk) == Approx(3.0));
  // brute-force sup of <x,v>/||x|| agrees
  const double sampled = testoracle::sampled_dual_norm(t, topk, 200000, 99);
  CHECK(sampled <= 3.0 + 1e-9);
  CHECK(sampled == Approx(3.0).margin(1e-6));
}

TEST_CASE("support_vertices covers the polyhedral modes") {
  const auto l1 = support_vertices(NormSpec::l1_via_p(4), 2, VertexMode::ExactL1);
  REQUIRE(l1.has_value());
  CHECK(l1->cols() == 4);

  const auto inf_mode = support_vertices(NormSpec::top_k_l1(1), 2);
  REQUIRE(inf_mode.has_value());
  CHECK(inf_mode->cols() == 4);  // +-e1, +-e2
  for (Index j = 0; j < inf_mode->cols(); ++j) CHECK(inf_mode->col(j).cwiseAbs().sum() == 1.0);

  CHECK_FALSE(support_vertices(NormSpec::euclidean(), 3).has_value());
  CHECK_FALSE(support_vertices(NormSpec::pnorm(1.5), 3).has_value());
  CHECK_THROWS_AS(support_vertices(NormSpec::l1_via_p(4), 25, VertexMode::ExactL1),
                  TooManyVertices);
}

TEST_CASE("support_vertices exactness: norm equals the vertex maximum") {
  auto rng = make_rng(7);
  std::normal_distribution<double> g;
  for (const auto& spec : {NormSpec::top_k_l1(2), NormSpec::top_k_l1(4), NormSpec::l1_via_p(5)}) {
    const Index d = 4;
    const auto verts = support_vertices(spec, d, VertexMode::ExactL1);
    REQUIRE(verts.has_value());
    for (int trial = 0; trial < 1000; ++trial) {
      Vector y(d);
      for (Index i = 0; i < d; ++i) y[i] = g(rng);
      double best = -1e300;
      for (Index j = 0; j < verts->cols(); ++j) best = std::max(best, y.dot(verts->col(j)));
      const double norm = spec.kind == NormKind::L1ViaP ? y.lpNorm<1>() : norm_eval(y, spec);
      CHECK(norm == Approx(best).epsilon(1e-12));
    }
  }
}

TEST_CASE("duality: inner product bounded, witness achieves it") {
  auto rng = make_rng(11);
  std::normal_distribution<double> g;
  const NormSpec specs[] = {NormSpec::euclidean(), NormSpec::pnorm(1.5), NormSpec::pnorm(1.25),
                            NormSpec::top_k_l1(2), NormSpec::l1_via_p(6)};
  for (const auto& spec : specs) {
    for (int trial = 0; trial < 200; ++trial) {
      const Index d = 4;
      Vector v(d), w(d);
      for (Index i = 0; i < d; ++i) {
        v[i] = g(rng);
        w[i] = g(rng);
      }
      CHECK(v.dot(w) <= norm_eval(v, spec) * dual_norm_eval(w, spec) + 1e-9);
      const Vector x = primal_ball_argmax(w, spec);
      CHECK(norm_eval(x, spec) <= 1.0 + 1e-9);
      CHECK(x.dot(w) == Approx(dual_norm_eval(w, spec)).margin(1e-6));
    }
  }
}

TEST_CASE("dual norm is strongly smooth for strongly convex primals") {
  auto rng = make_rng(13);
  std::normal_distribution<double> g;
  for (const auto& spec : {NormSpec::euclidean(), NormSpec::pnorm(1.5), NormSpec::pnorm(1.25)}) {
    const double gamma = spec.strong_convexity();
    for (int trial = 0; trial < 500; ++trial) {
      const Index d = 5;
      Vector v(d), w(d);
      for (Index i = 0; i < d; ++i) {
        v[i] = g(rng);
        w[i] = g(rng);
      }
      const double lhs = 0.5 * (std::pow(dual_norm_eval(v + w, spec), 2) +
                                std::pow(dual_norm_eval(v - w, spec), 2));
      const double rhs = std::pow(dual_norm_eval(v, spec), 2) +
                         std::pow(dual_norm_eval(w, spec), 2) / gamma;
      CHECK(lhs <= rhs + 1e-9);
    }
  }
}

TEST_CASE("induced_two_to_psi: exact modes and the sandwich") {
  Matrix d31(2, 2);
  d31 << 3, 0, 0, 1;
  const auto e = induced_two_to_psi(d31, NormSpec::euclidean());
  CHECK(e.lower == Approx(3.0));
  CHECK(e.upper == Approx(3.0));
  CHECK(e.method == BoundMethod::Exact);

  const auto l1 = induced_two_to_psi(Matrix::Identity(2, 2), NormSpec::l1_via_p(4));
  CHECK(l1.lower == Approx(std::sqrt(2.0)));
  CHECK(l1.upper == Approx(std::sqrt(2.0)));

  auto rng = make_rng(17);
  const Matrix a = testoracle::random_matrix(3, 3, rng);
  const auto ci = induced_two_to_psi(a, NormSpec::pnorm(1.5), 10000);
  CHECK(ci.lower <= ci.upper + 1e-12);
  CHECK(ci.upper / ci.lower <= M_PI / 2.0 + 1e-9);
  CHECK(ci.method == BoundMethod::SdpSandwich);

  CHECK_THROWS_AS(induced_two_to_psi(a, NormSpec::pnorm(1.5), 0), InvalidConfig);
}

TEST_CASE("op-fro inequality against the certified upper bound (small)") {
  auto rng = make_rng(19);
  for (int trial = 0; trial < 60; ++trial) {
    std::uniform_int_distribution<int> pick(1, 8);
    const Index d = pick(rng), n = pick(rng);
    const Matrix a = testoracle::random_matrix(d, n, rng);
    const double ps[] = {1.25, 1.5, 2.0};
    const double p = ps[trial % 3];
    const NormSpec spec = p == 2.0 ? NormSpec::euclidean() : NormSpec::pnorm(p);
    double lhs = 0.0;
    for (Index i = 0; i < n; ++i) lhs += std::pow(norm_eval(a.col(i), spec), 2);
    Eigen::BDCSVD<Matrix> svd(a);
    Index rank = 0;
    for (Index i = 0; i < svd.singularValues().size(); ++i)
      if (svd.singularValues()[i] > 1e-10 * svd.singularValues()[0]) ++rank;
    const auto ci = induced_two_to_psi(a, spec, 2048);
    CHECK(lhs <= double(rank) / spec.strong_convexity() * ci.upper * ci.upper + 1e-9);
  }
}

TEST_CASE("capped_simplex_project: examples, idempotence, grid oracle") {
  Vector a(3);
  a << 1, 0, 0;
  CHECK((capped_simplex_project(a, 1.0) - a).norm() == Approx(0.0).margin(1e-12));

  const Vector uniform = Vector::Constant(5, 0.2);
  CHECK((capped_simplex_project(uniform, 0.25) - uniform).norm() == Approx(0.0).margin(1e-12));

  Vector b(3);
  b << 0.6, 0.6, 0.0;
  Vector expect(3);
  expect << 0.5, 0.5, 0.0;
  CHECK((capped_simplex_project(b, 0.5) - expect).norm() == Approx(0.0).margin(1e-9));

  CHECK_THROWS_AS(capped_simplex_project(b, 0.2), InfeasibleCap);

  auto rng = make_rng(23);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 50; ++trial) {
    Vector w(3);
    for (Index i = 0; i < 3; ++i) w[i] = g(rng);
    const double cap = 0.4 + 0.4 * std::uniform_real_distribution<double>(0, 1)(rng);
    const Vector p = capped_simplex_project(w, cap);
    CHECK(p.minCoeff() >= -1e-12);
    CHECK(p.maxCoeff() <= cap + 1e-12);
    CHECK(p.sum() == Approx(1.0).margin(1e-9));
    // idempotent
    CHECK((capped_simplex_project(p, cap) - p).norm() == Approx(0.0).margin(1e-9));
    // never beaten by the dense grid
    const Vector q = testoracle::grid_capped_simplex(w, cap, 300);
    CHECK((p - w).squaredNorm() <= (q - w).squaredNorm() + 1e-6);
  }
}
