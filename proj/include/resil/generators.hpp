#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "resil/common.hpp"

namespace resil {

// Synthetic dataset with ground truth. true_center is the population mean of
// the good generator, not the sample mean.
struct LabeledDataset {
  Matrix points;                 // d x n
  std::vector<bool> good_mask;   // per column
  Vector true_center;
  std::string generator;
  std::map<std::string, double> meta;
  std::uint64_t seed = 0;

  Index n() const { return points.cols(); }
  Index dim() const { return points.rows(); }
  Index good_count() const {
    Index g = 0;
    for (bool b : good_mask) g += b ? 1 : 0;
    return g;
  }
  Matrix good_points() const {
    std::vector<Index> idx;
    for (Index i = 0; i < n(); ++i)
      if (good_mask[static_cast<std::size_t>(i)]) idx.push_back(i);
    return select_columns(points, idx);
  }
};

// Adversary strategies. Counts are chosen so the bad fraction of the final
// dataset matches the requested eps (PointMass/ClusterShift) or so the copies
// split the data evenly (MirrorCopies).
struct ClusterShift {
  Vector delta;
  double eps = 0.1;
  double spread = 1.0;  // scale of the paired noise around the shifted center
};
struct MirrorCopies {
  int count = 2;
  Vector delta;
};
struct PointMass {
  Vector location;
  double eps = 0.1;
};
enum class SbmBlockKind { MirrorBlock, Hub, RandomDense };
struct SbmBlock {
  SbmBlockKind kind = SbmBlockKind::RandomDense;
};
using AdversaryStrategy = std::variant<std::monostate, ClusterShift, MirrorCopies, PointMass, SbmBlock>;

namespace detail {

inline std::normal_distribution<double>& gauss() {
  static thread_local std::normal_distribution<double> g(0.0, 1.0);
  return g;
}

inline Vector sphere_direction(Index d, std::mt19937_64& rng) {
  Vector v(d);
  for (Index i = 0; i < d; ++i) v[i] = gauss()(rng);
  const double nrm = v.norm();
  return nrm > 0 ? Vector(v / nrm) : Vector(Vector::Unit(d, 0));
}

// E|u_1|^k for u uniform on the unit sphere in R^d.
inline double sphere_coord_abs_moment(Index d, double k) {
  if (d == 1) return 1.0;
  return std::exp(std::lgamma((k + 1.0) / 2.0) + std::lgamma(d / 2.0) -
                  std::lgamma(0.5) - std::lgamma((d + k) / 2.0));
}

}  // namespace detail

// Appends or replaces bad points per the strategy; deterministic per seed.
inline LabeledDataset apply_adversary(const LabeledDataset& good, const AdversaryStrategy& strategy,
                                      std::uint64_t seed) {
  auto rng = make_rng(derive_seed(seed, 0xADFull));
  LabeledDataset out = good;
  const Index d = good.dim();
  const Index ng = good.n();

  auto append = [&](const Matrix& bad) {
    Matrix all(d, ng + bad.cols());
    all.leftCols(ng) = out.points;
    all.rightCols(bad.cols()) = bad;
    out.points = std::move(all);
    for (Index i = 0; i < bad.cols(); ++i) out.good_mask.push_back(false);
  };

  if (std::holds_alternative<std::monostate>(strategy)) return out;

  if (const auto* cs = std::get_if<ClusterShift>(&strategy)) {
    const Index nb = static_cast<Index>(
        std::lround(cs->eps / (1.0 - cs->eps) * static_cast<double>(ng)));
    Matrix bad(d, nb);
    const Vector center = good.true_center + cs->delta;
    // paired +/- noise so the bad sample mean is exactly mu + delta
    Vector xi(d);
    for (Index j = 0; j < nb; ++j) {
      if (j % 2 == 0) {
        if (j + 1 < nb) {
          for (Index r = 0; r < d; ++r) xi[r] = cs->spread * detail::gauss()(rng);
          bad.col(j) = center + xi;
        } else {
          bad.col(j) = center;
        }
      } else {
        bad.col(j) = center - xi;
      }
    }
    append(bad);
    out.meta["eps"] = cs->eps;
    return out;
  }

  if (const auto* mc = std::get_if<MirrorCopies>(&strategy)) {
    if (mc->count < 2) throw InvalidConfig("MirrorCopies: count >= 2");
    Matrix all(d, ng * mc->count);
    all.leftCols(ng) = good.points;
    for (int c = 1; c < mc->count; ++c)
      all.middleCols(static_cast<Index>(c) * ng, ng) =
          good.points.colwise() + Vector(static_cast<double>(c) * mc->delta);
    out.points = std::move(all);
    out.good_mask.assign(static_cast<std::size_t>(ng) * static_cast<std::size_t>(mc->count), false);
    for (Index i = 0; i < ng; ++i) out.good_mask[static_cast<std::size_t>(i)] = true;
    out.meta["alpha"] = 1.0 / static_cast<double>(mc->count);
    return out;
  }

  if (const auto* pm = std::get_if<PointMass>(&strategy)) {
    const Index nb = static_cast<Index>(
        std::lround(pm->eps / (1.0 - pm->eps) * static_cast<double>(ng)));
    Matrix bad = pm->location.replicate(1, nb);
    append(bad);
    out.meta["eps"] = pm->eps;
    return out;
  }

  throw InvalidConfig("apply_adversary: SbmBlock only applies inside gen_sbm");
}

// Good points: spherical direction times a Pareto radius with tail index
// k + 1/2, scaled so the k-th directional moment equals sigma_k (so the k-th
// moment is finite and the (k+1/2)-th is not). k = inf selects the Gaussian
// branch. Outliers at distance 5 sqrt(d) sigma_k unless eps = 0.
inline LabeledDataset gen_bounded_moments(Index n, Index d, double eps, double sigma_k, double k,
                                          std::uint64_t seed,
                                          const AdversaryStrategy* adversary = nullptr) {
  if (k < 2.0) throw InvalidConfig("gen_bounded_moments: k >= 2 required");
  if (!(eps >= 0.0 && eps < 1.0)) throw InvalidConfig("gen_bounded_moments: eps in [0,1)");
  auto rng = make_rng(seed);
  const Index ng = n - static_cast<Index>(std::lround(eps * static_cast<double>(n)));

  LabeledDataset ds;
  ds.generator = "bounded-moments";
  ds.seed = seed;
  ds.true_center = Vector::Zero(d);
  ds.points.resize(d, ng);
  if (std::isinf(k)) {
    for (Index j = 0; j < ng; ++j)
      for (Index i = 0; i < d; ++i) ds.points(i, j) = sigma_k * detail::gauss()(rng);
  } else {
    const double tail = k + 0.5;
    const double radius_kth = tail / (tail - k);  // E[R^k] for Pareto(1, tail)
    const double scale =
        sigma_k / std::pow(radius_kth * detail::sphere_coord_abs_moment(d, k), 1.0 / k);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (Index j = 0; j < ng; ++j) {
      const double u = std::max(unif(rng), 1e-300);
      const double radius = std::pow(u, -1.0 / tail);
      ds.points.col(j) = (scale * radius) * detail::sphere_direction(d, rng);
    }
  }
  ds.good_mask.assign(static_cast<std::size_t>(ng), true);
  ds.meta = {{"n", double(n)}, {"d", double(d)}, {"eps", eps}, {"sigma_k", sigma_k}, {"k", k}};

  if (eps <= 0.0) return ds;
  if (adversary) return apply_adversary(ds, *adversary, derive_seed(seed, 1));
  PointMass pm;
  pm.location = 5.0 * std::sqrt(static_cast<double>(d)) * sigma_k * Vector::Unit(d, 0);
  pm.eps = eps;
  return apply_adversary(ds, pm, derive_seed(seed, 1));
}

// Empirical distribution of a tuple of symbol draws (0-indexed) over an
// alphabet of size m; e.g. m = 5 and draws {1, 3, 1} give (0, 2/3, 0, 1/3, 0).
inline Vector empirical_tuple_point(const std::vector<int>& draws, Index m) {
  Vector x = Vector::Zero(m);
  for (int s : draws) {
    if (s < 0 || s >= m) throw InvalidInput("empirical_tuple_point: symbol out of range");
    x[s] += 1.0 / static_cast<double>(draws.size());
  }
  return x;
}

// Each good point is the empirical distribution of k iid draws from pi,
// i.e. a point of the simplex with entries that are multiples of 1/k.
inline LabeledDataset gen_dist_tuples(const Vector& pi, int k, Index n, double eps,
                                      const AdversaryStrategy& adversary, std::uint64_t seed) {
  if (k < 1) throw InvalidConfig("gen_dist_tuples: k >= 1 required");
  if (pi.size() < 1 || pi.minCoeff() < -1e-15 || std::abs(pi.sum() - 1.0) > 1e-9)
    throw InvalidConfig("gen_dist_tuples: pi must be a probability vector");
  auto rng = make_rng(seed);
  const Index m = pi.size();
  const Index ng = n - static_cast<Index>(std::lround(eps * static_cast<double>(n)));
  std::discrete_distribution<int> draw(pi.data(), pi.data() + m);

  LabeledDataset ds;
  ds.generator = "dist-tuples";
  ds.seed = seed;
  ds.true_center = pi;
  ds.points = Matrix::Zero(m, ng);
  std::vector<int> draws(static_cast<std::size_t>(k));
  for (Index j = 0; j < ng; ++j) {
    for (int t = 0; t < k; ++t) draws[static_cast<std::size_t>(t)] = draw(rng);
    ds.points.col(j) = empirical_tuple_point(draws, m);
  }
  ds.good_mask.assign(static_cast<std::size_t>(ng), true);
  ds.meta = {{"n", double(n)}, {"m", double(m)}, {"k", double(k)}, {"eps", eps}};
  if (eps <= 0.0) return ds;
  if (!std::holds_alternative<std::monostate>(adversary))
    return apply_adversary(ds, adversary, derive_seed(seed, 1));
  // default attack: tuples from a point mass on the least likely symbol
  Index worst = 0;
  pi.minCoeff(&worst);
  PointMass pm;
  pm.location = Vector::Unit(m, worst);
  pm.eps = eps;
  return apply_adversary(ds, pm, derive_seed(seed, 1));
}

// Directed semi-random block model; rows of the adjacency matrix are the
// points, in {0,1}^n. Good rows i have edge probability a/n into S and b/n
// outside; bad rows are adversarial.
inline LabeledDataset gen_sbm(Index n, double alpha, double a, double b,
                              const AdversaryStrategy& adversary, std::uint64_t seed) {
  if (a <= b) throw InvalidConfig("gen_sbm: the model requires b < a");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidConfig("gen_sbm: alpha in (0,1]");
  auto rng = make_rng(seed);
  const Index ns = static_cast<Index>(std::lround(alpha * static_cast<double>(n)));
  const double pa = std::min(1.0, a / static_cast<double>(n));
  const double pb = std::min(1.0, b / static_cast<double>(n));
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  LabeledDataset ds;
  ds.generator = "sbm";
  ds.seed = seed;
  ds.points = Matrix::Zero(n, n);  // column j = row j of the adjacency matrix
  for (Index i = 0; i < ns; ++i)
    for (Index j = 0; j < n; ++j)
      ds.points(j, i) = (unif(rng) < (j < ns ? pa : pb)) ? 1.0 : 0.0;

  SbmBlockKind kind = SbmBlockKind::RandomDense;
  if (const auto* sb = std::get_if<SbmBlock>(&adversary)) kind = sb->kind;
  for (Index i = ns; i < n; ++i) {
    switch (kind) {
      case SbmBlockKind::MirrorBlock:
        // bad rows imitate the good marginals with S and its complement swapped
        for (Index j = 0; j < n; ++j)
          ds.points(j, i) = (unif(rng) < (j >= ns ? pa : pb)) ? 1.0 : 0.0;
        break;
      case SbmBlockKind::Hub:
        for (Index j = 0; j < n; ++j) ds.points(j, i) = 1.0;
        break;
      case SbmBlockKind::RandomDense:
        for (Index j = 0; j < n; ++j)
          ds.points(j, i) = (unif(rng) < std::min(1.0, 4.0 * pa)) ? 1.0 : 0.0;
        break;
    }
  }
  ds.good_mask.assign(static_cast<std::size_t>(n), false);
  for (Index i = 0; i < ns; ++i) ds.good_mask[static_cast<std::size_t>(i)] = true;
  ds.true_center.resize(n);
  for (Index j = 0; j < n; ++j) ds.true_center[j] = j < ns ? pa : pb;
  ds.meta = {{"n", double(n)}, {"alpha", alpha}, {"a", a}, {"b", b},
             {"adversary", double(static_cast<int>(kind))}};
  return ds;
}

// Standard basis of R^n around 0, all points good.
inline LabeledDataset gen_basis_counterexample(Index n) {
  LabeledDataset ds;
  ds.generator = "basis";
  ds.points = Matrix::Identity(n, n);
  ds.good_mask.assign(static_cast<std::size_t>(n), true);
  ds.true_center = Vector::Zero(n);
  ds.meta = {{"n", double(n)}};
  return ds;
}

}  // namespace resil
