#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"
#include "resil/generators.hpp"

using namespace resil;
using Catch::Approx;

TEST_CASE("tuple encoding worked example") {
  // m = 5, tuple (2, 4, 2) in 1-indexed symbols -> (0, 2/3, 0, 1/3, 0)
  const Vector x = empirical_tuple_point({1, 3, 1}, 5);
  Vector expect(5);
  expect << 0, 2.0 / 3.0, 0, 1.0 / 3.0, 0;
  CHECK((x - expect).norm() == Approx(0.0).margin(1e-15));
  CHECK_THROWS_AS(empirical_tuple_point({5}, 5), InvalidInput);
}

TEST_CASE("gen_dist_tuples structure") {
  Vector pi(4);
  pi << 0.1, 0.2, 0.3, 0.4;
  const auto ds = gen_dist_tuples(pi, 3, 50, 0.0, std::monostate{}, 77);
  CHECK(ds.n() == 50);
  CHECK((ds.true_center - pi).norm() == 0.0);
  for (Index j = 0; j < ds.n(); ++j) {
    CHECK(ds.points.col(j).sum() == Approx(1.0).margin(1e-12));
    for (Index i = 0; i < 4; ++i) {
      const double scaled = ds.points(i, j) * 3.0;
      CHECK(std::abs(scaled - std::round(scaled)) < 1e-12);
    }
  }
  // k = 1: indicator vectors
  const auto ind = gen_dist_tuples(pi, 1, 30, 0.0, std::monostate{}, 78);
  for (Index j = 0; j < ind.n(); ++j) CHECK(ind.points.col(j).maxCoeff() == 1.0);

  Vector badpi(2);
  badpi << 0.7, 0.7;
  CHECK_THROWS_AS(gen_dist_tuples(badpi, 3, 10, 0.0, std::monostate{}, 1), InvalidConfig);
}

TEST_CASE("gen_bounded_moments: counts, determinism, moment bound") {
  const auto ds = gen_bounded_moments(1000, 5, 0.1, 1.0, 4.0, 123);
  CHECK(ds.n() == 1000);
  CHECK(ds.good_count() == 900);

  const auto ds2 = gen_bounded_moments(1000, 5, 0.1, 1.0, 4.0, 123);
  CHECK(ds.points == ds2.points);  // bit-identical
  CHECK(ds.good_mask == ds2.good_mask);

  // Gaussian branch: eps = 0 means all good
  const auto g = gen_bounded_moments(200, 3, 0.0, 2.0, std::numeric_limits<double>::infinity(), 5);
  CHECK(g.good_count() == 200);

  CHECK_THROWS_AS(gen_bounded_moments(10, 2, 0.0, 1.0, 1.5, 1), InvalidConfig);

  // empirical k-th directional moment stays near sigma_k at large n
  const double k = 4.0, sigma_k = 1.0;
  const auto big = gen_bounded_moments(100000, 4, 0.0, sigma_k, k, 321);
  auto rng = make_rng(31337);
  std::normal_distribution<double> gg;
  for (int t = 0; t < 100; ++t) {
    Vector v(4);
    for (Index i = 0; i < 4; ++i) v[i] = gg(rng);
    v.normalize();
    double acc = 0.0;
    const Vector proj = big.points.transpose() * v;
    for (Index i = 0; i < proj.size(); ++i) acc += std::pow(std::abs(proj[i]), k);
    const double emp = std::pow(acc / double(big.n()), 1.0 / k);
    CHECK(emp <= 1.5 * sigma_k);
  }
}

TEST_CASE("gen_sbm: means, degrees, validation") {
  CHECK_THROWS_AS(gen_sbm(100, 0.5, 5.0, 5.0, SbmBlock{}, 1), InvalidConfig);

  const auto full = gen_sbm(50, 1.0, 50.0, 0.0, SbmBlock{}, 2);
  CHECK(full.points.minCoeff() == 1.0);  // p = a/n = 1: complete graph
  CHECK((full.true_center - Vector::Ones(50)).norm() == 0.0);

  const Index n = 2000;
  const double alpha = 0.6, a = 40.0, b = 10.0;
  const auto ds = gen_sbm(n, alpha, a, b, SbmBlock{}, 3);
  const Index ns = Index(std::lround(alpha * n));
  CHECK(ds.good_count() == ns);
  CHECK(ds.true_center[0] == Approx(a / double(n)));
  CHECK(ds.true_center[n - 1] == Approx(b / double(n)));
  // mean good out-degree near alpha a + (1-alpha) b within 3 binomial sd
  const double expect = alpha * a + (1 - alpha) * b;
  double acc = 0.0;
  for (Index i = 0; i < ns; ++i) acc += ds.points.col(i).sum();
  const double mean_deg = acc / double(ns);
  const double sd = std::sqrt(expect) / std::sqrt(double(ns));  // variance <= mean for Bernoulli sums
  CHECK(std::abs(mean_deg - expect) <= 3.0 * sd + 0.5);

  // good rows have no edges into the bad block when b = 0
  const auto nob = gen_sbm(200, 0.9, 20.0, 1e-12, SbmBlock{}, 4);
  const Index ns2 = Index(std::lround(0.9 * 200));
  CHECK(nob.points.block(ns2, 0, 200 - ns2, ns2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("apply_adversary strategies") {
  LabeledDataset base;
  base.points = Matrix::Zero(2, 6);
  base.good_mask.assign(6, true);
  base.true_center = Vector::Zero(2);

  // MirrorCopies: alpha becomes 1/count
  MirrorCopies mc;
  mc.count = 2;
  mc.delta = 10 * Vector::Unit(2, 0);
  const auto mir = apply_adversary(base, mc, 9);
  CHECK(mir.n() == 12);
  CHECK(mir.good_count() == 6);
  CHECK((mir.points.rightCols(6).rowwise().mean() - mc.delta).norm() == Approx(0.0).margin(1e-12));

  // ClusterShift: bad sample mean is exactly mu + delta
  ClusterShift cs;
  cs.delta = Vector::Ones(2) * 3.0;
  cs.eps = 0.25;
  const auto shifted = apply_adversary(base, cs, 11);
  const Index nb = shifted.n() - 6;
  CHECK(nb == 2);  // eps/(1-eps) * 6
  const Vector bad_mean = shifted.points.rightCols(nb).rowwise().mean();
  CHECK((bad_mean - cs.delta).norm() == Approx(0.0).margin(1e-12));

  // PointMass: naive mean error is exactly eps * distance
  PointMass pm;
  pm.location = 100 * Vector::Unit(2, 0);
  pm.eps = 0.25;
  const auto mass = apply_adversary(base, pm, 13);
  const Vector naive = mass.points.rowwise().mean();
  CHECK(naive.norm() == Approx(0.25 * 100.0).margin(1e-12));

  // deterministic per seed
  const auto again = apply_adversary(base, cs, 11);
  CHECK(again.points == shifted.points);
}

TEST_CASE("gen_basis_counterexample") {
  const auto ds = gen_basis_counterexample(4);
  CHECK(ds.points == Matrix::Identity(4, 4));
  CHECK(ds.true_center.norm() == 0.0);
  CHECK(ds.good_count() == 4);
}
