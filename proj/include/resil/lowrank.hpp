#pragma once

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "resil/common.hpp"
#include "resil/meanest.hpp"
#include "resil/resilience.hpp"

namespace resil {

struct RankKConfig {
  int k = 1;
  double delta = 0.2;          // <= 1/3
  double sigma = 0.0;          // sigma_{k+1}(X_S)/sqrt(|S|); <= 0 requests auto-calibration
  double split_threshold = 0.9;
  int max_outer = 200;
  int fw_iters = 150;
  int max_doublings = 60;
  std::function<void(const RecoverIteration&)> observer;
};

namespace detail {

// Ridge responses against a factored adversary Y = F' F (F is r x d). All the
// per-column solves share one r x r eigendecomposition via the push-through
// identity, so the cost is O(r^2) per column instead of O(n^3).
struct RidgeBatch {
  Matrix resid;        // d x n residuals x_i - X q_i
  Vector q_sqnorm;     // ||q_i||_2^2
  Matrix zrep;         // r x n; q_i = P' z_i with P = U' B
  Matrix pmat;         // P, for materializing Q on demand
};

inline RidgeBatch ridge_batch(const Matrix& x, const Matrix& f, double lambda, const Vector& c) {
  const Index n = x.cols();
  const Matrix b = f * x;  // r x n
  Eigen::SelfAdjointEigenSolver<Matrix> es(b * b.transpose());
  const Vector evals = es.eigenvalues().cwiseMax(0.0);
  const Matrix p = es.eigenvectors().transpose() * b;  // r x n
  RidgeBatch out;
  out.zrep.resize(p.rows(), n);
  out.q_sqnorm.resize(n);
  for (Index i = 0; i < n; ++i) {
    Vector z = p.col(i);
    for (Index j = 0; j < z.size(); ++j) z[j] *= c[i] / (lambda + c[i] * evals[j]);
    out.zrep.col(i) = z;
    double qs = 0.0;
    for (Index j = 0; j < z.size(); ++j) qs += evals[j] * z[j] * z[j];
    out.q_sqnorm[i] = qs;
  }
  // X q_i = X P' z_i
  const Matrix xp = x * p.transpose();  // d x r
  out.resid = x - xp * out.zrep;
  out.pmat = p;
  return out;
}

}  // namespace detail

// Per-column closed-form minimizer of c_i (x_i - X q)' Y (x_i - X q) +
// lambda ||q||^2, returned as the n x n matrix Q.
inline Matrix ridge_response(const Matrix& x, const Matrix& y, double lambda, const Vector& c) {
  require_finite(x, "ridge_response");
  if (!(lambda > 0)) throw InvalidConfig("ridge_response: lambda > 0 required");
  if (c.size() != x.cols()) throw InvalidInput("ridge_response: weight size mismatch");
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (y + y.transpose()));
  const Matrix f = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                   es.eigenvectors().transpose();
  detail::RidgeBatch rb = detail::ridge_batch(x, f, lambda, c);
  return rb.pmat.transpose() * rb.zrep;
}

struct RankKReport {
  Matrix p;                 // X_A Q0 pinv(X_A); rank-bounded, not orthogonal
  Matrix p_orth;            // orthogonal projector onto col(p)
  Index rank = 0;
  double residual_spectral = 0.0;       // ||(I - p) X_A||_2
  double residual_orth = 0.0;           // same with the orthogonal projector
  double q_fro2 = 0.0;                  // ||Q||_F^2 at exit
  int iterations = 0;
  double sigma_used = 0.0;
  double lambda_used = 0.0;
  int sigma_doublings = 0;
  bool stalled = false;
  std::vector<Index> active;
};

namespace detail {

inline Index numeric_rank_of(const Matrix& m, double rel_tol = 1e-8) {
  Eigen::BDCSVD<Matrix> svd(m);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv[0] <= 0) return 0;
  Index r = 0;
  for (Index i = 0; i < sv.size(); ++i)
    if (sv[i] > rel_tol * sv[0]) ++r;
  return r;
}

inline Matrix pseudo_inverse(const Matrix& m, double rel_tol = 1e-10) {
  Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  Vector inv = Vector::Zero(sv.size());
  for (Index i = 0; i < sv.size(); ++i)
    if (sv[i] > rel_tol * sv[0]) inv[i] = 1.0 / sv[i];
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

inline RankKReport recover_rank_k_once(const Matrix& data, const RankKConfig& cfg, double sigma) {
  const Index n = data.cols();
  const Index d = data.rows();
  const double nn = static_cast<double>(n);
  const double alpha = 1.0 - cfg.delta;
  const double floor_sz = alpha * (2.0 + alpha) / (4.0 - alpha) * nn;
  const double lambda = alpha * nn * sigma * sigma / static_cast<double>(cfg.k);
  const double exit_threshold = 8.0 * nn * sigma * sigma;  // 4a with a = 2 n sigma^2

  WeightState state(n);
  RankKReport rep;
  rep.sigma_used = sigma;
  rep.lambda_used = lambda;

  for (int iter = 0; iter < cfg.max_outer; ++iter) {
    const auto act = state.active();
    if (static_cast<double>(act.size()) < floor_sz - 1e-9)
      throw PromiseViolated("recover_rank_k: active set below the invariant floor");
    const Matrix x_act = select_columns(data, act);
    const Index m = x_act.cols();
    Vector c_act(m);
    for (Index i = 0; i < m; ++i) c_act[i] = state.c[act[static_cast<std::size_t>(i)]];

    Matrix y = Matrix::Identity(d, d) / static_cast<double>(d);
    std::optional<RidgeBatch> exit_rb;
    std::optional<Vector> filter_tau;
    double filter_obj = 0.0;
    rep.iterations = iter + 1;

    for (int t = 0; t < cfg.fw_iters; ++t) {
      Eigen::SelfAdjointEigenSolver<Matrix> es(y);
      const Matrix f = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                       es.eigenvectors().transpose();
      RidgeBatch rb = ridge_batch(x_act, f, lambda, c_act);
      // exact adversary value at this Q
      Matrix gram = Matrix::Zero(d, d);
      for (Index i = 0; i < m; ++i)
        gram.noalias() += c_act[i] * (rb.resid.col(i) * rb.resid.col(i).transpose());
      Eigen::SelfAdjointEigenSolver<Matrix> ge(gram);
      const double top = ge.eigenvalues()[d - 1];
      const Vector v1 = ge.eigenvectors().col(d - 1);
      double qpen = 0.0;
      for (Index i = 0; i < m; ++i) qpen += lambda * rb.q_sqnorm[i];
      const double exit_val = top + qpen;
      if (exit_val <= exit_threshold) {
        exit_rb = std::move(rb);
        break;
      }
      // lower bound of the saddle at the rank-one adversary
      RidgeBatch rb1 = ridge_batch(x_act, v1.transpose(), lambda, c_act);
      Vector tau = Vector::Zero(n);
      double flow = 0.0;
      for (Index i = 0; i < m; ++i) {
        const double rsc = std::pow(v1.dot(rb1.resid.col(i)), 2.0);
        const double ti = rsc + lambda * rb1.q_sqnorm[i] / c_act[i];
        tau[act[static_cast<std::size_t>(i)]] = ti;
        flow += c_act[i] * ti;
      }
      if (flow > filter_obj) {
        filter_obj = flow;
        filter_tau = std::move(tau);
      }
      if (filter_obj > exit_threshold) break;  // no Q can exit; downweight now
      const double gamma = 2.0 / static_cast<double>(t + 2);
      y = (1.0 - gamma) * y + gamma * (v1 * v1.transpose());
    }

    if (!exit_rb) {
      if (!filter_tau) throw NoProgress("recover_rank_k: saddle produced no usable scores");
      if (cfg.observer) {
        RecoverIteration info;
        info.iter = iter;
        info.active = &act;
        info.c = &state.c;
        info.tau = &*filter_tau;
        info.objective = filter_obj;
        info.a = 2.0 * nn * sigma * sigma;
        info.downweighted = true;
        cfg.observer(info);
      }
      state = downweight(state, *filter_tau);
      continue;
    }

    // success: split Q at the threshold and project
    const RidgeBatch& rb = *exit_rb;
    Matrix q = rb.pmat.transpose() * rb.zrep;  // n_A x n_A
    rep.q_fro2 = q.squaredNorm();
    SplitResult split = low_rank_split(q, cfg.split_threshold);
    const Matrix xq0 = x_act * split.w0;
    rep.p = xq0 * pseudo_inverse(x_act);
    rep.rank = numeric_rank_of(rep.p);
    const Matrix resid_p = x_act - rep.p * x_act;
    Eigen::BDCSVD<Matrix> rs(resid_p);
    rep.residual_spectral = rs.singularValues().size() ? rs.singularValues()[0] : 0.0;
    // orthogonal projector onto col(p)
    Eigen::BDCSVD<Matrix> ps(xq0, Eigen::ComputeThinU);
    const auto& sv = ps.singularValues();
    Index r = 0;
    for (Index i = 0; i < sv.size(); ++i)
      if (sv.size() && sv[i] > 1e-10 * sv[0]) ++r;
    const Matrix u = ps.matrixU().leftCols(r);
    rep.p_orth = u * u.transpose();
    Eigen::BDCSVD<Matrix> rs2(x_act - rep.p_orth * x_act);
    rep.residual_orth = rs2.singularValues().size() ? rs2.singularValues()[0] : 0.0;
    rep.active = act;
    if (cfg.observer) {
      RecoverIteration info;
      info.iter = iter;
      info.active = &act;
      info.c = &state.c;
      Vector tau = Vector::Zero(n);
      info.tau = &tau;
      info.objective = 0.0;
      info.a = 2.0 * nn * sigma * sigma;
      info.downweighted = false;
      cfg.observer(info);
    }
    return rep;
  }
  rep.stalled = true;
  return rep;
}

}  // namespace detail

// Robust rank-k recovery: downweighting outer loop around the ridge saddle
// max_Y min_Q sum_i c_i (x_i - X q_i)' Y (x_i - X q_i) + lambda ||q_i||^2,
// exiting once the exact adversary value drops to 8 n sigma^2, then splitting
// Q at the singular-value threshold and projecting.
inline RankKReport recover_rank_k(const Matrix& data, const RankKConfig& cfg) {
  require_finite(data, "recover_rank_k");
  if (cfg.k < 1) throw InvalidConfig("recover_rank_k: k >= 1 required");
  if (!(cfg.delta >= 0.0 && cfg.delta <= 1.0 / 3.0 + 1e-12))
    throw InvalidConfig("recover_rank_k: delta <= 1/3 required");
  if (cfg.sigma > 0.0) return detail::recover_rank_k_once(data, cfg, cfg.sigma);
  Eigen::BDCSVD<Matrix> svd(data);
  const double top = svd.singularValues().size() ? svd.singularValues()[0] : 1.0;
  double s = std::max(1e-12 * top, 1e-300) / std::sqrt(static_cast<double>(data.cols()));
  s = std::max(s, 1e-30);
  for (int dbl = 0; dbl <= cfg.max_doublings; ++dbl) {
    try {
      RankKReport rep = detail::recover_rank_k_once(data, cfg, s);
      if (!rep.stalled) {
        rep.sigma_doublings = dbl;
        return rep;
      }
    } catch (const PromiseViolated&) {
    }
    s *= 2.0;
  }
  throw PromiseViolated("recover_rank_k: sigma doubling exhausted");
}

struct OracleRankKResult {
  Matrix p;  // orthogonal rank-k projector of the winning subset
  std::vector<Index> subset;
  double sigma_kplus1 = 0.0;
  bool resilient_found = false;
};

// Exhaustive information-theoretic oracle: among all subsets of size
// (1-delta)n that pass the delta/(1-delta) rank-resilience check, pick the
// one with the smallest sigma_{k+1} and project onto its top-k left singular
// vectors. Falls back to the best-effort winner (flagged) when no subset is
// resilient.
inline OracleRankKResult best_rank_k_oracle(const Matrix& data, int k, double delta,
                                            double subset_cap = 1e6) {
  require_finite(data, "best_rank_k_oracle");
  const Index n = data.cols();
  const Index m = kept_count(delta, n);
  if (binomial_approx(n, m) > subset_cap)
    throw TooManySubsets("best_rank_k_oracle: subset count exceeds cap");
  const double delta_inner = delta / (1.0 - delta);
  OracleRankKResult out;
  double best_resilient = std::numeric_limits<double>::infinity();
  double best_any = std::numeric_limits<double>::infinity();
  std::vector<Index> best_any_subset;
  for_each_subset(n, m, [&](const std::vector<Index>& idx) {
    const Matrix x_t = select_columns(data, idx);
    Eigen::BDCSVD<Matrix> svd(x_t);
    const auto& sv = svd.singularValues();
    const double s_k1 = k < sv.size() ? sv[k] : 0.0;
    if (s_k1 < best_any) {
      best_any = s_k1;
      best_any_subset = idx;
    }
    if (s_k1 < best_resilient) {
      RankResilienceReport rr = rank_resilience_check(x_t, delta_inner, subset_cap);
      if (rr.holds) {
        best_resilient = s_k1;
        out.subset = idx;
        out.resilient_found = true;
        out.sigma_kplus1 = s_k1;
      }
    }
    return true;
  });
  if (!out.resilient_found) {
    out.subset = best_any_subset;
    out.sigma_kplus1 = best_any;
  }
  const Matrix x_w = select_columns(data, out.subset);
  Eigen::BDCSVD<Matrix> svd(x_w, Eigen::ComputeThinU);
  const Index kk = std::min<Index>(k, svd.matrixU().cols());
  const Matrix u = svd.matrixU().leftCols(kk);
  out.p = u * u.transpose();
  return out;
}

}  // namespace resil
