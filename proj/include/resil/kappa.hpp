#pragma once

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>

#include "resil/common.hpp"
#include "resil/norm_spec.hpp"

namespace resil {

struct KappaResult {
  Matrix y;        // feasible maximizer (PSD, ||diag(y)||_{q/2} <= 1, or tr <= 1 for q = 2)
  double value = 0.0;
  double kappa = 1.0;
  double lower_bound = 0.0;  // best rank-one value f_hat found en route
};

struct KappaOptions {
  int restarts = 3;
  int max_iters = 600;
  int rank = 0;  // 0 = full
  double tol = 1e-11;
  int direction_restarts = 48;
  std::uint64_t seed = 0x6b61707061ull;
};

namespace detail {

inline Matrix symmetrized_psd(const Matrix& g) {
  if (g.rows() != g.cols()) throw InvalidInput("kappa_oracle: matrix must be square");
  require_finite(g, "kappa_oracle");
  Matrix s = 0.5 * (g + g.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(s);
  const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  if (es.eigenvalues().minCoeff() < -1e-9 * scale)
    throw InvalidInput("kappa_oracle: matrix is not PSD within tolerance");
  Vector ev = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

// ||(row norms squared)||_{q/2}; q may be infinite.
inline double diag_constraint_norm(const Matrix& r, double q) {
  Vector s = r.rowwise().squaredNorm();
  if (!std::isfinite(q)) return s.maxCoeff();
  const double g = q / 2.0;
  double acc = 0.0;
  for (Index i = 0; i < s.size(); ++i) acc += std::pow(s[i], g);
  return std::pow(acc, 1.0 / g);
}

}  // namespace detail

// Best rank-one value f_hat(G) = max over found directions v (||v||_q <= 1)
// of v' G v, together with the witness.
inline std::pair<double, Vector> quadform_lower_bound(const Matrix& g, double q,
                                                      const AscentOptions& opt = {}) {
  NormSpec ball;
  if (q == 2.0) {
    ball = NormSpec::euclidean();
  } else if (std::isfinite(q)) {
    // dual ball of the l_p norm with p = q/(q-1)
    ball = NormSpec::pnorm(q / (q - 1.0));
  } else {
    // signs: the l_inf ball is the full-support TopKL1 dual ball
    ball = NormSpec::top_k_l1(static_cast<int>(g.rows()));
  }
  if (q == 2.0) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(g);
    const Index d = g.rows();
    return {es.eigenvalues()[d - 1], es.eigenvectors().col(d - 1)};
  }
  // v' G v = sum_i <b_i, v>^2 with G = B' B; factor via eigen decomposition.
  Eigen::SelfAdjointEigenSolver<Matrix> es(g);
  Vector ev = es.eigenvalues().cwiseMax(0.0);
  Matrix b = ev.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
  auto [val, v] = moment_ascent(b.transpose(), 2.0, ball, opt);
  return {val, v};
}

// kappa-approximate maximization of sup_{||v||_q <= 1} v' G v via the PSD
// relaxation g(G) = max{<G, Y> : Y PSD, ||diag(Y)||_{q/2} <= 1}. For q = 2
// this is the exact top eigenpair (kappa = 1). For q > 2 the relaxation is
// solved by factored gradient ascent Y = R R' with the diagonal constraint
// enforced by rescaling, and the sandwich factor is pi/2. The returned value
// never falls below the best rank-one lower bound.
inline KappaResult kappa_oracle(const Matrix& g_in, double q, const KappaOptions& opt = {}) {
  if (q < 2.0) throw InvalidConfig("kappa_oracle: q >= 2 required");
  Matrix g = detail::symmetrized_psd(g_in);
  const Index d = g.rows();

  if (q == 2.0) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(g);
    const double lam = es.eigenvalues()[d - 1];
    const Vector v = es.eigenvectors().col(d - 1);
    return {v * v.transpose(), std::max(0.0, lam), 1.0, std::max(0.0, lam)};
  }

  AscentOptions aopt;
  aopt.restarts = opt.direction_restarts;
  aopt.seed = opt.seed ^ 0xf00d;
  auto [fhat, vhat] = quadform_lower_bound(g, q, aopt);
  fhat = std::max(0.0, fhat);

  const Index rank = opt.rank > 0 ? std::min<Index>(opt.rank, d) : d;
  auto rng = make_rng(opt.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  auto normalize = [&](Matrix& r) {
    const double c = detail::diag_constraint_norm(r, q);
    if (c > 0) r *= 1.0 / std::sqrt(c);
  };
  auto objective = [&](const Matrix& r) { return (r.transpose() * g * r).trace(); };

  double best_val = 0.0;
  Matrix best_r = Matrix::Zero(d, rank);
  for (int rs = 0; rs < std::max(1, opt.restarts); ++rs) {
    Matrix r(d, rank);
    if (rs == 0) {
      r.setZero();
      r.col(0) = vhat;
      for (Index i = 0; i < d; ++i)
        for (Index j = 1; j < rank; ++j) r(i, j) = 1e-3 * gauss(rng);
    } else {
      for (Index i = 0; i < d; ++i)
        for (Index j = 0; j < rank; ++j) r(i, j) = gauss(rng);
    }
    normalize(r);
    double f = objective(r);
    double step = 1.0 / std::max(1e-12, g.operatorNorm());
    int flat = 0;
    for (int it = 0; it < opt.max_iters && flat < 20; ++it) {
      Matrix grad = 2.0 * (g * r);
      bool improved = false;
      for (int bt = 0; bt < 25; ++bt) {
        Matrix r2 = r + step * grad;
        normalize(r2);
        const double f2 = objective(r2);
        if (f2 > f) {
          r = std::move(r2);
          improved = f2 > f * (1.0 + opt.tol);
          f = f2;
          step *= 1.5;
          break;
        }
        step *= 0.5;
      }
      flat = improved ? 0 : flat + 1;
    }
    if (f > best_val) {
      best_val = f;
      best_r = r;
    }
  }

  KappaResult out;
  out.kappa = M_PI / 2.0;
  out.lower_bound = fhat;
  if (best_val < fhat) {
    out.y = vhat * vhat.transpose();
    out.value = fhat;
  } else {
    out.y = best_r * best_r.transpose();
    out.value = best_val;
  }
  return out;
}

inline KappaResult kappa_oracle(const Matrix& g, const NormSpec& spec, const KappaOptions& opt = {}) {
  if (spec.kind == NormKind::TopKL1) {
    // The truncated-l1 dual ball sits inside the sign-vector (q = inf) ball,
    // so the q = inf relaxation still upper-bounds the quadratic form; the
    // sandwich constant is only guaranteed relative to that larger ball.
    return kappa_oracle(g, std::numeric_limits<double>::infinity(), opt);
  }
  return kappa_oracle(g, spec.qexp(), opt);
}

}  // namespace resil
