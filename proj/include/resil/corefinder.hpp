#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <vector>

#include "resil/common.hpp"
#include "resil/kappa.hpp"
#include "resil/norms.hpp"
#include "resil/resilience.hpp"

namespace resil {

struct CoreSolverConfig {
  int max_iters = 500;
  double tol = 1e-6;  // relative improvement of the running best
  int patience = 50;
  KappaOptions kappa;
  TwoToPsiOptions certify;
  std::uint64_t seed = 0xC04Eull;
};

struct CoreResult {
  Vector weights;                      // c in [0,1]^n, ||c||_1 >= keep * n
  std::vector<Index> core;             // {i : c_i >= 1/2}
  CertifiedInterval certified_variance;
  double target_keep = 0.0;
  int iterations = 0;
  bool stalled = false;
  double continuous_objective = 0.0;  // value of the relaxed minimax at the weights
  double rounded_objective = 0.0;     // same functional at the 0/1 rounding
};

namespace detail {

// Euclidean projection onto {c : 0 <= c <= 1, sum c >= mass}.
inline Vector project_box_mass(Vector c, double mass) {
  for (Index i = 0; i < c.size(); ++i) c[i] = std::clamp(c[i], 0.0, 1.0);
  if (c.sum() >= mass - 1e-12) return c;
  double lo = 0.0, hi = 1.0 + mass;
  auto total = [&](double lam) {
    double s = 0.0;
    for (Index i = 0; i < c.size(); ++i) s += std::clamp(c[i] + lam, 0.0, 1.0);
    return s;
  };
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (total(mid) < mass) lo = mid;
    else hi = mid;
  }
  const double lam = 0.5 * (lo + hi);
  for (Index i = 0; i < c.size(); ++i) c[i] = std::clamp(c[i] + lam, 0.0, 1.0);
  return c;
}

}  // namespace detail

// Certified bound on max over the dual unit ball of the mean squared
// projection of the core around mu.
inline CertifiedInterval certify_core_variance(const Matrix& core_points, const Vector& mu,
                                               const NormSpec& spec,
                                               const TwoToPsiOptions& opt = {}) {
  if (core_points.cols() < 1) throw InvalidInput("certify_core_variance: empty core");
  const Matrix centered = core_points.colwise() - mu;
  const CertifiedInterval nrm = induced_two_to_psi(centered, spec, 4096, opt);
  const double m = static_cast<double>(core_points.cols());
  return {nrm.lower * nrm.lower / m, nrm.upper * nrm.upper / m, nrm.method};
}

// Solves min_{c in [0,1]^n, ||c||_1 >= keep n} max_{||v||_* <= 1}
// (1/n) sum_i c_i <x_i, v>^2 by subgradient descent on the weights, with the
// adversary given by the kappa-oracle best response on the weighted second
// moment matrix, then rounds at 1/2. Rounding at 1/2 can at most double the
// objective and keeps at least (2 keep - 1) n points.
inline CoreResult find_core(const PointSet& s, double keep, const NormSpec& spec,
                            const CoreSolverConfig& cfg = {}) {
  if (!(keep > 0.5 && keep < 1.0)) throw InvalidConfig("find_core: keep in (1/2, 1) required");
  const Index n = s.n();
  const double mass = keep * static_cast<double>(n);
  const Vector mu = s.mu();
  const Matrix x = s.points.colwise() - mu;

  auto adversary = [&](const Vector& c) {
    Matrix g = Matrix::Zero(s.dim(), s.dim());
    for (Index i = 0; i < n; ++i)
      if (c[i] > 0) g.noalias() += c[i] * (x.col(i) * x.col(i).transpose());
    g /= static_cast<double>(n);
    return kappa_oracle(g, spec, cfg.kappa);
  };

  Vector c = Vector::Ones(n);
  Vector best_c = c;
  double best_val = std::numeric_limits<double>::infinity();
  int since_improvement = 0;
  int iters = 0;
  for (int t = 1; t <= cfg.max_iters; ++t) {
    ++iters;
    const KappaResult kr = adversary(c);
    Vector scores(n);
    for (Index i = 0; i < n; ++i)
      scores[i] = x.col(i).dot(kr.y * x.col(i)) / static_cast<double>(n);
    const double val = c.dot(scores);
    if (val < best_val * (1.0 - cfg.tol)) {
      since_improvement = 0;
    } else {
      ++since_improvement;
    }
    if (val < best_val) {
      best_val = val;
      best_c = c;
    }
    if (since_improvement > cfg.patience) break;
    const double smax = scores.maxCoeff();
    if (smax <= 0) break;  // all points at mu
    const double step = 1.0 / (smax * std::sqrt(static_cast<double>(t)));
    c = detail::project_box_mass(c - step * scores, mass);
  }

  CoreResult out;
  out.weights = best_c;
  out.target_keep = keep;
  out.iterations = iters;
  out.stalled = since_improvement <= cfg.patience;
  for (Index i = 0; i < n; ++i)
    if (best_c[i] >= 0.5) out.core.push_back(i);
  // evaluate both objectives with the same adversary machinery
  out.continuous_objective = adversary(best_c).value;
  Vector rounded = Vector::Zero(n);
  for (Index i : out.core) rounded[i] = 1.0;
  out.rounded_objective = adversary(rounded).value;
  Matrix core_pts = select_columns(s.points, out.core);
  out.certified_variance = certify_core_variance(core_pts, mu, spec, cfg.certify);
  return out;
}

}  // namespace resil
