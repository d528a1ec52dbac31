#pragma once

#include <Eigen/Core>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <utility>
#include <vector>

#include "resil/common.hpp"
#include "resil/norm_spec.hpp"

namespace resil {

// Finite point set, columns are points. The reference center defaults to the
// column mean; several identities (the (1-eps)/eps reversal in particular)
// are exact only in that case.
struct PointSet {
  Matrix points;
  std::optional<Vector> center;

  PointSet() = default;
  explicit PointSet(Matrix pts, std::optional<Vector> c = std::nullopt)
      : points(std::move(pts)), center(std::move(c)) {
    if (points.cols() < 1) throw InvalidInput("PointSet: need n >= 1");
  }

  Index n() const { return points.cols(); }
  Index dim() const { return points.rows(); }
  Vector mu() const { return center ? *center : Vector(points.rowwise().mean()); }
};

struct ResilienceProfile {
  std::vector<double> eps_grid;      // increasing, in (0,1)
  std::vector<double> sigma_values;  // nonnegative, nondecreasing
  BoundMethod method = BoundMethod::Exact;
  long directions_used = 0;
};

struct SigmaStarOptions {
  std::int64_t budget = 20000;  // sampled directions when no vertex set exists
  int ascent_iters = 100;
  std::int64_t vertex_cap = (1 << 20);
  bool prefer_exact_l1 = true;  // L1ViaP certifies in the exact-l1 vertex view
  std::uint64_t seed = 0x5157a5ull;
};

struct SigmaStarWitness {
  Vector direction;
  std::vector<Index> subset;
};

namespace detail {

// mean of the top-m projections <x_i - mu, v>, plus the achieving subset.
inline std::pair<double, std::vector<Index>> top_mean(const Vector& proj, Index m) {
  std::vector<Index> order(static_cast<std::size_t>(proj.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::partial_sort(order.begin(), order.begin() + m, order.end(),
                    [&](Index a, Index b) { return proj[a] > proj[b]; });
  double s = 0.0;
  std::vector<Index> subset(order.begin(), order.begin() + m);
  for (Index i : subset) s += proj[i];
  std::sort(subset.begin(), subset.end());
  return {s / static_cast<double>(m), subset};
}

}  // namespace detail

// sigma_*(eps): max over subsets T of size ceil((1-eps)n) of the norm of
// mean_T(x - mu). Exchanging the two maxima, this is the max over dual-ball
// directions v of the mean of the top-|T| projections, which is exact when
// the dual ball has an enumerable vertex set and a sampled lower bound
// otherwise.
inline CertifiedInterval sigma_star(const PointSet& s, double eps, const NormSpec& spec,
                                    const SigmaStarOptions& opt = {},
                                    SigmaStarWitness* witness = nullptr) {
  if (!(eps >= 0.0 && eps < 1.0)) throw InvalidEps("sigma_star: eps in [0,1) required");
  const Index n = s.n();
  const Index m = kept_count(eps, n);
  if (m < 1) throw InvalidEps("sigma_star: empty kept subset");
  const Vector mu = s.mu();
  Matrix centered = s.points.colwise() - mu;

  auto eval_direction = [&](const Vector& v) { return detail::top_mean(centered.transpose() * v, m); };

  std::optional<Matrix> verts;
  try {
    if (spec.kind == NormKind::TopKL1)
      verts = support_vertices(spec, s.dim(), VertexMode::Auto, opt.vertex_cap);
    else if (spec.kind == NormKind::L1ViaP && opt.prefer_exact_l1 && s.dim() <= 20)
      verts = support_vertices(spec, s.dim(), VertexMode::ExactL1, opt.vertex_cap);
  } catch (const TooManyVertices&) {
    // fall through to the sampled lower bound
  }

  double best = -std::numeric_limits<double>::infinity();
  Vector best_v;
  std::vector<Index> best_t;

  if (verts) {
    for (Index j = 0; j < verts->cols(); ++j) {
      auto [val, sub] = eval_direction(verts->col(j));
      if (val > best) {
        best = val;
        best_v = verts->col(j);
        best_t = std::move(sub);
      }
    }
    if (witness) *witness = {best_v, best_t};
    return {best, best, BoundMethod::VertexEnum};
  }

  // Sampled mode: random dual directions, then alternate between the best
  // subset for the direction and the best direction for the subset. Each
  // alternation is monotone, so the result is a certified lower bound.
  auto rng = make_rng(opt.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int n_dirs = static_cast<int>(std::max<std::int64_t>(opt.budget, 1));
  long used = 0;
  auto refine = [&](Vector v) {
    double val = -std::numeric_limits<double>::infinity();
    std::vector<Index> sub;
    for (int it = 0; it < opt.ascent_iters; ++it) {
      auto [pv, ps] = eval_direction(v);
      Vector g = Vector::Zero(s.dim());
      for (Index i : ps) g += centered.col(i);
      g /= static_cast<double>(ps.size());
      const double norm_val = norm_eval(g, spec);
      if (norm_val <= val * (1.0 + 1e-13)) {
        (void)pv;
        break;
      }
      val = norm_val;
      sub = std::move(ps);
      v = dual_ball_argmax(g, spec);
    }
    return std::make_pair(val, sub);
  };
  // coarse screening pass, then ascend from the leaders
  std::vector<std::pair<double, Vector>> screened;
  screened.reserve(static_cast<std::size_t>(n_dirs));
  for (int t = 0; t < n_dirs; ++t) {
    Vector g(s.dim());
    for (Index i = 0; i < s.dim(); ++i) g[i] = gauss(rng);
    Vector v = dual_ball_argmax(g, spec);
    auto [val, sub] = eval_direction(v);
    (void)sub;
    screened.emplace_back(val, std::move(v));
    ++used;
  }
  std::sort(screened.begin(), screened.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });
  const int leaders = std::min<int>(16, static_cast<int>(screened.size()));
  for (int t = 0; t < leaders; ++t) {
    auto [val, sub] = refine(screened[static_cast<std::size_t>(t)].second);
    if (val > best) {
      best = val;
      best_t = std::move(sub);
      Vector g = Vector::Zero(s.dim());
      for (Index i : best_t) g += centered.col(i);
      best_v = dual_ball_argmax(g, spec);
    }
  }
  if (witness) *witness = {best_v, best_t};
  CertifiedInterval out{best, best, BoundMethod::SampledDirections};
  (void)used;
  return out;
}

inline ResilienceProfile resilience_profile(const PointSet& s, std::vector<double> eps_grid,
                                            const NormSpec& spec, const SigmaStarOptions& opt = {}) {
  if (eps_grid.empty()) throw InvalidConfig("resilience_profile: empty grid");
  if (!std::is_sorted(eps_grid.begin(), eps_grid.end()))
    throw InvalidConfig("resilience_profile: eps grid must be increasing");
  ResilienceProfile p;
  p.eps_grid = std::move(eps_grid);
  p.method = BoundMethod::Exact;
  double running = 0.0;
  for (std::size_t i = 0; i < p.eps_grid.size(); ++i) {
    SigmaStarOptions o = opt;
    o.seed = derive_seed(opt.seed, i);
    const CertifiedInterval ci = sigma_star(s, p.eps_grid[i], spec, o);
    if (ci.method == BoundMethod::SampledDirections) {
      p.method = BoundMethod::SampledDirections;
      p.directions_used += opt.budget;
    } else if (p.method != BoundMethod::SampledDirections) {
      p.method = ci.method;
    }
    running = std::max(running, ci.lower);  // sampled values are lower bounds; keep monotone
    p.sigma_values.push_back(running);
  }
  return p;
}

// sqrt of the trapezoid-rule integral of u^{-2} sigma_*(u)^2 over
// [eps/2, 1/2] on the profile grid, with linear interpolation of sigma at the
// interval endpoints.
inline double sigma_tilde(const ResilienceProfile& profile, double eps) {
  if (profile.eps_grid.size() < 2) throw GridCoverage("sigma_tilde: need at least two grid points");
  const double a = eps / 2.0, b = 0.5;
  if (!(a < b)) throw InvalidEps("sigma_tilde: eps must be below 1");
  if (profile.eps_grid.front() > a + 1e-12 || profile.eps_grid.back() < b - 1e-12)
    throw GridCoverage("sigma_tilde: profile does not cover [eps/2, 1/2]");
  auto sigma_at = [&](double u) {
    const auto& g = profile.eps_grid;
    auto it = std::lower_bound(g.begin(), g.end(), u);
    if (it == g.begin()) return profile.sigma_values.front();
    if (it == g.end()) return profile.sigma_values.back();
    const std::size_t hi = static_cast<std::size_t>(it - g.begin());
    const std::size_t lo = hi - 1;
    const double t = (u - g[lo]) / (g[hi] - g[lo]);
    return (1.0 - t) * profile.sigma_values[lo] + t * profile.sigma_values[hi];
  };
  auto integrand = [&](double u, double sig) { return sig * sig / (u * u); };
  std::vector<double> knots;
  knots.push_back(a);
  for (double u : profile.eps_grid)
    if (u > a && u < b) knots.push_back(u);
  knots.push_back(b);
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
    const double u0 = knots[i], u1 = knots[i + 1];
    acc += 0.5 * (u1 - u0) * (integrand(u0, sigma_at(u0)) + integrand(u1, sigma_at(u1)));
  }
  return std::sqrt(acc);
}

// Mean of the ceil(eps*n) largest projections <x_i - mu, v>. If a norm spec
// is supplied, validates ||v||_* <= 1 (loose tolerance).
inline double tail_conditional_mean(const PointSet& s, const Vector& v, double eps,
                                    const NormSpec* spec = nullptr) {
  const Index n = s.n();
  if (eps * static_cast<double>(n) < 1.0 - 1e-9)
    throw InvalidEps("tail_conditional_mean: eps*n < 1");
  const Index t = static_cast<Index>(std::ceil(eps * static_cast<double>(n) - 1e-9));
  if (spec && dual_norm_eval(v, *spec) > 1.0 + 1e-9)
    throw InvalidInput("tail_conditional_mean: direction exceeds the dual unit ball");
  const Vector proj = (s.points.colwise() - s.mu()).transpose() * v;
  auto [val, sub] = detail::top_mean(proj, std::min(t, n));
  (void)sub;
  return val;
}

struct ResilienceCheck {
  bool resilient = false;
  double sigma_found = 0.0;
  SigmaStarWitness witness;  // populated when not resilient
};

inline ResilienceCheck is_resilient(const PointSet& s, double sigma, double eps,
                                    const NormSpec& spec, const SigmaStarOptions& opt = {}) {
  SigmaStarWitness w;
  const CertifiedInterval ci = sigma_star(s, eps, spec, opt, &w);
  ResilienceCheck out;
  out.sigma_found = ci.upper;
  out.resilient = ci.upper <= sigma + 1e-12;
  if (!out.resilient) out.witness = std::move(w);
  return out;
}

struct ExhaustiveOptions {
  Index cap = 20;
  SigmaStarOptions sigma;
};

// First subset of size ceil((1-eps)n), in colexicographic order, that is
// (sigma, eps/(1-eps))-resilient around its own mean; returns its mean.
inline Vector recover_mean_exhaustive(const Matrix& data, double eps, double sigma,
                                      const NormSpec& spec, const ExhaustiveOptions& opt = {}) {
  if (!(eps >= 0.0 && eps < 0.5)) throw InvalidEps("recover_mean_exhaustive: eps < 1/2 required");
  const Index n = data.cols();
  if (n > opt.cap) throw InvalidConfig("recover_mean_exhaustive: n exceeds exhaustive cap");
  const Index m = kept_count(eps, n);
  const double eps_inner = eps / (1.0 - eps);
  std::optional<Vector> answer;
  for_each_subset(n, m, [&](const std::vector<Index>& idx) {
    PointSet sub(select_columns(data, idx));
    const CertifiedInterval ci = sigma_star(sub, eps_inner, spec, opt.sigma);
    if (ci.upper <= sigma + 1e-12) {
      answer = sub.mu();
      return false;
    }
    return true;
  });
  if (!answer) throw NoResilientSubset("recover_mean_exhaustive: no resilient subset of the target size");
  return *answer;
}

struct CoverCandidate {
  Vector mean;
  double weight = 0.0;
  std::vector<Index> members;
};

struct CoverResult {
  std::vector<CoverCandidate> candidates;
  bool heuristic = false;
  bool empty = false;
};

struct CoverOptions {
  Index exhaustive_cap = 20;
  std::int64_t max_checks = 200000;
  int local_search_iters = 200;
  SigmaStarOptions sigma;
};

// Maximal-style disjoint collection of ((8/alpha) sigma, 1 - alpha/2)-resilient
// subsets of size >= ceil(alpha n / 2), certified around their own means.
// Exhaustive (largest subsets first) at desk scale, local-search extraction
// beyond it. Sampling one candidate uniformly matches the information-
// theoretic recovery guarantee.
inline CoverResult recover_mean_cover(const Matrix& data, double alpha, double sigma,
                                      const NormSpec& spec, std::uint64_t seed,
                                      const CoverOptions& opt = {}) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidConfig("recover_mean_cover: alpha in (0,1]");
  const Index n = data.cols();
  const Index s_min = static_cast<Index>(std::ceil(alpha * static_cast<double>(n) / 2.0 - 1e-9));
  const double sigma_member = (8.0 / alpha) * sigma;
  const double eps_member = 1.0 - alpha / 2.0;
  CoverResult out;

  std::vector<Index> pool(static_cast<std::size_t>(n));
  std::iota(pool.begin(), pool.end(), Index{0});

  auto passes = [&](const std::vector<Index>& idx) {
    PointSet sub(select_columns(data, idx));
    return sigma_star(sub, eps_member, spec, opt.sigma).upper <= sigma_member + 1e-12;
  };

  if (n <= opt.exhaustive_cap) {
    std::int64_t checks = 0;
    bool budget_ok = true;
    while (static_cast<Index>(pool.size()) >= s_min && budget_ok) {
      bool extracted = false;
      for (Index s = static_cast<Index>(pool.size()); s >= std::max<Index>(s_min, 1) && !extracted;
           --s) {
        for_each_subset(static_cast<Index>(pool.size()), s, [&](const std::vector<Index>& local) {
          if (++checks > opt.max_checks) {
            budget_ok = false;
            return false;
          }
          std::vector<Index> idx;
          idx.reserve(local.size());
          for (Index j : local) idx.push_back(pool[static_cast<std::size_t>(j)]);
          if (!passes(idx)) return true;
          PointSet sub(select_columns(data, idx));
          out.candidates.push_back({sub.mu(), 0.0, idx});
          std::vector<Index> next;
          for (Index i : pool)
            if (std::find(idx.begin(), idx.end(), i) == idx.end()) next.push_back(i);
          pool = std::move(next);
          extracted = true;
          return false;
        });
      }
      if (!extracted) break;
    }
    if (!budget_ok) out.heuristic = true;
  }

  if (out.candidates.empty() || out.heuristic || n > opt.exhaustive_cap) {
    // local-search extraction: swap moves decreasing sigma_* of the candidate
    if (n > opt.exhaustive_cap) out.heuristic = true;
    auto rng = make_rng(seed);
    while (static_cast<Index>(pool.size()) >= std::max<Index>(s_min, 1)) {
      const Index s = std::max<Index>(s_min, 1);
      std::vector<Index> cur(pool.begin(), pool.end());
      std::shuffle(cur.begin(), cur.end(), rng);
      std::vector<Index> inside(cur.begin(), cur.begin() + s);
      std::vector<Index> outside(cur.begin() + s, cur.end());
      auto score = [&](const std::vector<Index>& idx) {
        PointSet sub(select_columns(data, idx));
        return sigma_star(sub, eps_member, spec, opt.sigma).upper;
      };
      double cur_score = score(inside);
      for (int it = 0; it < opt.local_search_iters && !outside.empty(); ++it) {
        const std::size_t a = std::uniform_int_distribution<std::size_t>(0, inside.size() - 1)(rng);
        const std::size_t b = std::uniform_int_distribution<std::size_t>(0, outside.size() - 1)(rng);
        std::swap(inside[a], outside[b]);
        const double s2 = score(inside);
        if (s2 < cur_score) cur_score = s2;
        else std::swap(inside[a], outside[b]);
      }
      if (cur_score <= sigma_member + 1e-12) {
        std::sort(inside.begin(), inside.end());
        PointSet sub(select_columns(data, inside));
        out.candidates.push_back({sub.mu(), 0.0, inside});
        std::vector<Index> next;
        for (Index i : pool)
          if (std::find(inside.begin(), inside.end(), i) == inside.end()) next.push_back(i);
        pool = std::move(next);
      } else {
        break;
      }
    }
  }

  if (out.candidates.empty()) out.empty = true;
  for (auto& c : out.candidates) c.weight = 1.0 / static_cast<double>(out.candidates.size());
  return out;
}

struct RankResilienceReport {
  double delta = 0.0;
  bool holds = false;
  std::vector<Index> worst_subset;
  double worst_pinv_norm = 0.0;
};

namespace detail {

inline Index numeric_rank(const Eigen::JacobiSVD<Matrix>& svd, double rel_tol = 1e-9) {
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv[0] <= 0) return 0;
  Index r = 0;
  for (Index i = 0; i < sv.size(); ++i)
    if (sv[i] > rel_tol * sv[0]) ++r;
  return r;
}

}  // namespace detail

// Enumerates every T with |T| >= (1-delta)|S|, checking col(X_T) = col(X_S)
// and ||pinv(X_T) X_S||_2 <= 2; reports the worst case.
inline RankResilienceReport rank_resilience_check(const Matrix& x_s, double delta,
                                                  double subset_cap = 1e6) {
  require_finite(x_s, "rank_resilience_check");
  const Index n = x_s.cols();
  const Index drop_max = static_cast<Index>(std::floor(delta * static_cast<double>(n) + 1e-9));
  double total = 0.0;
  for (Index j = 0; j <= drop_max; ++j) total += binomial_approx(n, j);
  if (total > subset_cap) throw TooManySubsets("rank_resilience_check: subset count exceeds cap");

  Eigen::JacobiSVD<Matrix> svd_s(x_s, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Index rank_s = detail::numeric_rank(svd_s);

  RankResilienceReport rep;
  rep.delta = delta;
  rep.holds = true;
  rep.worst_pinv_norm = 0.0;

  std::vector<Index> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), Index{0});

  auto consider = [&](const std::vector<Index>& keep) {
    Matrix x_t = select_columns(x_s, keep);
    Eigen::JacobiSVD<Matrix> svd_t(x_t, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Index rank_t = detail::numeric_rank(svd_t);
    if (rank_t < rank_s) {
      rep.holds = false;
      rep.worst_pinv_norm = std::numeric_limits<double>::infinity();
      rep.worst_subset = keep;
      return false;  // colspace already dropped; no need to continue
    }
    const auto& sv = svd_t.singularValues();
    Vector inv = Vector::Zero(sv.size());
    for (Index i = 0; i < sv.size(); ++i)
      if (sv[i] > 1e-9 * sv[0]) inv[i] = 1.0 / sv[i];
    Matrix pinv_t = svd_t.matrixV() * inv.asDiagonal() * svd_t.matrixU().transpose();
    Eigen::JacobiSVD<Matrix> prod(pinv_t * x_s);
    const double norm2 = prod.singularValues().size() ? prod.singularValues()[0] : 0.0;
    if (norm2 > rep.worst_pinv_norm) {
      rep.worst_pinv_norm = norm2;
      rep.worst_subset = keep;
    }
    return true;
  };

  bool keep_going = true;
  for (Index j = 0; j <= drop_max && keep_going; ++j) {
    for_each_subset(n, j, [&](const std::vector<Index>& dropped) {
      std::vector<Index> keep;
      keep.reserve(static_cast<std::size_t>(n - j));
      std::size_t di = 0;
      for (Index i = 0; i < n; ++i) {
        if (di < dropped.size() && dropped[di] == i) ++di;
        else keep.push_back(i);
      }
      keep_going = consider(keep);
      return keep_going;
    });
  }
  if (rep.holds) rep.holds = rep.worst_pinv_norm <= 2.0;
  return rep;
}

// Indices of the ceil(quantile * n) points closest to the center estimate.
inline std::vector<Index> prune_by_norm(const Matrix& data, const Vector& center, double quantile,
                                        const NormSpec& spec) {
  if (!(quantile > 0.0 && quantile <= 1.0)) throw InvalidConfig("prune_by_norm: quantile in (0,1]");
  const Index n = data.cols();
  const Index keep = std::min<Index>(
      n, static_cast<Index>(std::ceil(quantile * static_cast<double>(n) - 1e-9)));
  std::vector<std::pair<double, Index>> scored;
  scored.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i)
    scored.emplace_back(norm_eval(data.col(i) - center, spec), i);
  std::sort(scored.begin(), scored.end());
  std::vector<Index> out;
  out.reserve(static_cast<std::size_t>(keep));
  for (Index i = 0; i < keep; ++i) out.push_back(scored[static_cast<std::size_t>(i)].second);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace resil
