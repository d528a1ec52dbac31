#pragma once

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "resil/common.hpp"

namespace resil {

enum class NormKind { Euclidean, PNorm, L1ViaP, TopKL1 };

// Which norm the estimation lives in, plus the dual / strong-convexity
// metadata every solver needs. PNorm covers p in (1,2]; L1ViaP(m) is the
// p = 1 + 1/ln(m) surrogate commonly used when the target norm is l1 on
// m coordinates (an exact-l1 vertex view is exposed separately).
struct NormSpec {
  NormKind kind = NormKind::Euclidean;
  double p = 2.0;  // PNorm / L1ViaP effective exponent
  int k_top = 0;   // TopKL1
  int m = 0;       // L1ViaP

  static NormSpec euclidean() { return NormSpec{}; }

  static NormSpec pnorm(double p_) {
    if (!(p_ > 1.0 && p_ <= 2.0)) throw InvalidConfig("pnorm: need 1 < p <= 2");
    NormSpec s;
    s.kind = NormKind::PNorm;
    s.p = p_;
    return s;
  }

  static NormSpec l1_via_p(int m_) {
    if (m_ < 3) throw InvalidConfig("l1_via_p: need m >= 3 so that p = 1 + 1/ln(m) <= 2");
    NormSpec s;
    s.kind = NormKind::L1ViaP;
    s.m = m_;
    s.p = 1.0 + 1.0 / std::log(static_cast<double>(m_));
    return s;
  }

  static NormSpec top_k_l1(int k) {
    if (k < 1) throw InvalidConfig("top_k_l1: need k_top >= 1");
    NormSpec s;
    s.kind = NormKind::TopKL1;
    s.k_top = k;
    return s;
  }

  bool is_pnorm_like() const { return kind == NormKind::PNorm || kind == NormKind::L1ViaP; }

  // Holder-dual exponent; infinity is representable.
  double qexp() const {
    switch (kind) {
      case NormKind::Euclidean: return 2.0;
      case NormKind::PNorm:
      case NormKind::L1ViaP: return p / (p - 1.0);
      case NormKind::TopKL1: break;
    }
    throw InvalidConfig("qexp: TopKL1 dual is not an l_q norm");
  }

  // gamma with ||x+y||^2 + ||x-y||^2 >= 2(||x||^2 + gamma ||y||^2).
  double strong_convexity() const {
    switch (kind) {
      case NormKind::Euclidean: return 1.0;
      case NormKind::PNorm:
      case NormKind::L1ViaP: return p - 1.0;
      case NormKind::TopKL1: break;
    }
    throw InvalidConfig("strong_convexity: TopKL1 is not strongly convex");
  }
};

namespace detail {

inline double lp_norm(const Vector& v, double p) {
  if (p == 2.0) return v.norm();
  double s = 0.0;
  for (Index i = 0; i < v.size(); ++i) s += std::pow(std::abs(v[i]), p);
  return std::pow(s, 1.0 / p);
}

inline double top_k_abs_sum(const Vector& v, int k) {
  std::vector<double> a(static_cast<std::size_t>(v.size()));
  for (Index i = 0; i < v.size(); ++i) a[static_cast<std::size_t>(i)] = std::abs(v[i]);
  const std::size_t kk = std::min<std::size_t>(static_cast<std::size_t>(k), a.size());
  std::partial_sort(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(kk), a.end(),
                    std::greater<double>());
  double s = 0.0;
  for (std::size_t i = 0; i < kk; ++i) s += a[i];
  return s;
}

}  // namespace detail

inline double norm_eval(const Vector& v, const NormSpec& spec) {
  require_finite(v, "norm_eval");
  switch (spec.kind) {
    case NormKind::Euclidean: return v.norm();
    case NormKind::PNorm:
    case NormKind::L1ViaP: return detail::lp_norm(v, spec.p);
    case NormKind::TopKL1: return detail::top_k_abs_sum(v, spec.k_top);
  }
  return 0.0;
}

inline double dual_norm_eval(const Vector& v, const NormSpec& spec) {
  require_finite(v, "dual_norm_eval");
  switch (spec.kind) {
    case NormKind::Euclidean: return v.norm();
    case NormKind::PNorm:
    case NormKind::L1ViaP: return detail::lp_norm(v, spec.qexp());
    case NormKind::TopKL1: {
      const double linf = v.lpNorm<Eigen::Infinity>();
      const double l1 = v.lpNorm<1>();
      return std::max(linf, l1 / static_cast<double>(spec.k_top));
    }
  }
  return 0.0;
}

// argmax over the *dual* unit ball {||v||_* <= 1} of <g, v>; the value is the
// primal norm of g. This is the linear-maximization oracle every ascent in
// the library leans on.
inline Vector dual_ball_argmax(const Vector& g, const NormSpec& spec) {
  const Index d = g.size();
  Vector v = Vector::Zero(d);
  switch (spec.kind) {
    case NormKind::Euclidean: {
      const double n2 = g.norm();
      if (n2 > 0) v = g / n2;
      else v[0] = 1.0;
      return v;
    }
    case NormKind::PNorm:
    case NormKind::L1ViaP: {
      const double np = detail::lp_norm(g, spec.p);
      if (np == 0.0) {
        v[0] = 1.0;
        return v;
      }
      const double e = spec.p - 1.0;
      for (Index i = 0; i < d; ++i) {
        const double a = std::abs(g[i]);
        v[i] = (g[i] >= 0 ? 1.0 : -1.0) * std::pow(a / np, e);
      }
      return v;
    }
    case NormKind::TopKL1: {
      std::vector<Index> order(static_cast<std::size_t>(d));
      for (Index i = 0; i < d; ++i) order[static_cast<std::size_t>(i)] = i;
      std::sort(order.begin(), order.end(),
                [&](Index a, Index b) { return std::abs(g[a]) > std::abs(g[b]); });
      const Index k = std::min<Index>(spec.k_top, d);
      for (Index j = 0; j < k; ++j) {
        const Index i = order[static_cast<std::size_t>(j)];
        v[i] = (g[i] >= 0 ? 1.0 : -1.0);
      }
      return v;
    }
  }
  return v;
}

// argmax over the *primal* unit ball {||x|| <= 1} of <w, x>; value equals the
// dual norm of w. Witness for the duality property tests.
inline Vector primal_ball_argmax(const Vector& w, const NormSpec& spec) {
  const Index d = w.size();
  Vector x = Vector::Zero(d);
  switch (spec.kind) {
    case NormKind::Euclidean: {
      const double n2 = w.norm();
      if (n2 > 0) x = w / n2;
      else x[0] = 1.0;
      return x;
    }
    case NormKind::PNorm:
    case NormKind::L1ViaP: {
      const double q = spec.qexp();
      const double nq = detail::lp_norm(w, q);
      if (nq == 0.0) {
        x[0] = 1.0;
        return x;
      }
      const double e = q - 1.0;
      for (Index i = 0; i < d; ++i) {
        const double a = std::abs(w[i]);
        x[i] = (w[i] >= 0 ? 1.0 : -1.0) * std::pow(a / nq, e);
      }
      return x;
    }
    case NormKind::TopKL1: {
      const double linf = w.lpNorm<Eigen::Infinity>();
      const double l1 = w.lpNorm<1>();
      const double k = static_cast<double>(spec.k_top);
      if (linf >= l1 / k) {
        Index arg = 0;
        w.cwiseAbs().maxCoeff(&arg);
        x[arg] = (w[arg] >= 0 ? 1.0 : -1.0);
      } else {
        for (Index i = 0; i < d; ++i) x[i] = (w[i] >= 0 ? 1.0 : -1.0) / k;
      }
      return x;
    }
  }
  return x;
}

enum class VertexMode { Auto, ExactL1 };

// Finite set V with ||y|| = max_{v in V} <y, v> for all y, when the dual unit
// ball is a polytope. Euclidean and PNorm (p > 1) are not polyhedral; L1ViaP
// exposes the exact-l1 sign-vector view only on request.
inline std::optional<Matrix> support_vertices(const NormSpec& spec, Index d,
                                              VertexMode mode = VertexMode::Auto,
                                              std::int64_t cap = (1 << 20)) {
  if (d < 1) throw InvalidInput("support_vertices: d >= 1 required");
  switch (spec.kind) {
    case NormKind::Euclidean:
    case NormKind::PNorm:
      return std::nullopt;
    case NormKind::L1ViaP: {
      if (mode != VertexMode::ExactL1) return std::nullopt;
      if (d >= 63 || (std::int64_t(1) << d) > cap)
        throw TooManyVertices("support_vertices: 2^d sign vectors exceed cap");
      const std::int64_t nv = std::int64_t(1) << d;
      Matrix v(d, nv);
      for (std::int64_t c = 0; c < nv; ++c)
        for (Index i = 0; i < d; ++i) v(i, c) = ((c >> i) & 1) ? 1.0 : -1.0;
      return v;
    }
    case NormKind::TopKL1: {
      const Index k = std::min<Index>(spec.k_top, d);
      const double count = binomial_approx(d, k) * std::pow(2.0, static_cast<double>(k));
      if (count > static_cast<double>(cap))
        throw TooManyVertices("support_vertices: k-sparse sign vectors exceed cap");
      std::vector<Vector> out;
      out.reserve(static_cast<std::size_t>(count));
      for_each_subset(d, k, [&](const std::vector<Index>& supp) {
        const std::int64_t ns = std::int64_t(1) << k;
        for (std::int64_t s = 0; s < ns; ++s) {
          Vector v = Vector::Zero(d);
          for (Index j = 0; j < k; ++j)
            v[supp[static_cast<std::size_t>(j)]] = ((s >> j) & 1) ? 1.0 : -1.0;
          out.push_back(std::move(v));
        }
        return true;
      });
      Matrix vm(d, static_cast<Index>(out.size()));
      for (std::size_t j = 0; j < out.size(); ++j) vm.col(static_cast<Index>(j)) = out[j];
      return vm;
    }
  }
  return std::nullopt;
}

// Euclidean projection onto {u : 0 <= u_j <= cap, sum u_j = 1}; bisection on
// the shift dual to the mass constraint.
inline Vector capped_simplex_project(const Vector& w, double cap) {
  require_finite(w, "capped_simplex_project");
  const Index n = w.size();
  if (cap * static_cast<double>(n) < 1.0 - 1e-12)
    throw InfeasibleCap("capped_simplex_project: cap * n < 1");
  auto mass = [&](double lam) {
    double s = 0.0;
    for (Index i = 0; i < n; ++i) s += std::clamp(w[i] - lam, 0.0, cap);
    return s;
  };
  double lo = w.minCoeff() - cap - 1.0, hi = w.maxCoeff() + 1.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mass(mid) >= 1.0) lo = mid;
    else hi = mid;
  }
  const double lam = 0.5 * (lo + hi);
  Vector u(n);
  for (Index i = 0; i < n; ++i) u[i] = std::clamp(w[i] - lam, 0.0, cap);
  const double s = u.sum();
  if (s > 0 && std::abs(s - 1.0) > 1e-12) u *= 1.0 / s;  // tidy up bisection residue
  return u;
}

struct AscentOptions {
  int restarts = 64;
  int max_iters = 200;
  double tol = 1e-12;
  std::uint64_t seed = 0xA5CEA5CEull;
};

// Maximizes sum_i |<x_i, v>|^k over the dual unit ball by conditional
// gradient: the objective is convex, so each exact linear maximization is a
// monotone ascent step. Returns the best (value, v) over restarts. The first
// start is deterministic (uniform positive direction), which matters for
// instances whose maximizer is the symmetric point.
inline std::pair<double, Vector> moment_ascent(const Matrix& cols, double k,
                                               const NormSpec& spec,
                                               const AscentOptions& opt = {}) {
  const Index d = cols.rows();
  auto value = [&](const Vector& v) {
    double s = 0.0;
    const Vector t = cols.transpose() * v;
    for (Index i = 0; i < t.size(); ++i) s += std::pow(std::abs(t[i]), k);
    return s;
  };
  auto grad = [&](const Vector& v) {
    const Vector t = cols.transpose() * v;
    Vector coef(t.size());
    for (Index i = 0; i < t.size(); ++i) {
      const double a = std::abs(t[i]);
      coef[i] = (k == 1.0 ? 1.0 : k * std::pow(a, k - 1.0)) * (t[i] >= 0 ? 1.0 : -1.0);
    }
    return Vector(cols * coef);
  };
  auto rng = make_rng(opt.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  double best = -1.0;
  Vector best_v = Vector::Zero(d);
  for (int r = 0; r < std::max(1, opt.restarts); ++r) {
    Vector g(d);
    if (r == 0) g.setOnes();
    else for (Index i = 0; i < d; ++i) g[i] = gauss(rng);
    Vector v = dual_ball_argmax(g, spec);
    double f = value(v);
    for (int it = 0; it < opt.max_iters; ++it) {
      Vector v2 = dual_ball_argmax(grad(v), spec);
      const double f2 = value(v2);
      if (f2 <= f * (1.0 + opt.tol) && f2 <= f + opt.tol) break;
      v = std::move(v2);
      f = f2;
    }
    if (f > best) {
      best = f;
      best_v = v;
    }
  }
  return {best, best_v};
}

// max over the dual unit ball of sum_i <x_i, v>^k, exact where the ball is a
// polytope or (k = 2, Euclidean) spectral.
inline std::pair<double, Vector> max_moment_over_dual_ball(const Matrix& cols, double k,
                                                           const NormSpec& spec,
                                                           VertexMode mode = VertexMode::Auto,
                                                           const AscentOptions& opt = {}) {
  require_finite(cols, "max_moment_over_dual_ball");
  if (spec.kind == NormKind::Euclidean && k == 2.0) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(cols * cols.transpose());
    const Index d = cols.rows();
    return {es.eigenvalues()[d - 1], es.eigenvectors().col(d - 1)};
  }
  if (auto verts = support_vertices(spec, cols.rows(), mode)) {
    double best = -1.0;
    Index arg = 0;
    for (Index j = 0; j < verts->cols(); ++j) {
      const Vector t = cols.transpose() * verts->col(j);
      double s = 0.0;
      for (Index i = 0; i < t.size(); ++i) s += std::pow(std::abs(t[i]), k);
      if (s > best) {
        best = s;
        arg = j;
      }
    }
    return {best, verts->col(arg)};
  }
  return moment_ascent(cols, k, spec, opt);
}

}  // namespace resil
