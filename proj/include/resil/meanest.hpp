#pragma once

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include "resil/common.hpp"
#include "resil/kappa.hpp"
#include "resil/norm_spec.hpp"

namespace resil {

// min_w max_j lambda_j (1 - w_j) subject to sum w_j^2 <= budget, 0 <= w <= 1.
// Bisection on the attained level t, with w_j(t) = max(0, 1 - t/lambda_j).
inline std::pair<Vector, double> water_fill(const Vector& lambda, double budget) {
  if (budget < 0) throw InvalidConfig("water_fill: budget >= 0 required");
  const Index m = lambda.size();
  for (Index j = 0; j < m; ++j)
    if (lambda[j] < 0) throw InvalidInput("water_fill: lambda must be nonnegative");
  if (budget >= static_cast<double>(m)) return {Vector::Ones(m), 0.0};
  const double lmax = m > 0 ? lambda.maxCoeff() : 0.0;
  if (lmax == 0.0) return {Vector::Zero(m), 0.0};
  auto spend = [&](double t) {
    double s = 0.0;
    for (Index j = 0; j < m; ++j)
      if (lambda[j] > 0) {
        const double w = std::max(0.0, 1.0 - t / lambda[j]);
        s += w * w;
      }
    return s;
  };
  double lo = 0.0, hi = lmax;
  if (spend(0.0) <= budget) hi = 0.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (spend(mid) <= budget) hi = mid;
    else lo = mid;
  }
  const double t = hi;
  Vector w = Vector::Zero(m);
  double value = 0.0;
  for (Index j = 0; j < m; ++j) {
    if (lambda[j] > 0) w[j] = std::max(0.0, 1.0 - t / lambda[j]);
    value = std::max(value, lambda[j] * (1.0 - w[j]));
  }
  return {w, value};
}

// Solves min_W ||X - XW||_2 over 1'W = 1', ||W||_F^2 <= r via the mean
// projector P = (1/m) 1 1', an SVD of X(I - P), and water-filling the
// singular values with budget r - 1.
inline std::pair<Matrix, double> fast_l2_reconstruct(const Matrix& x, double r) {
  require_finite(x, "fast_l2_reconstruct");
  if (r < 1.0) throw InvalidConfig("fast_l2_reconstruct: r >= 1 required");
  const Index m = x.cols();
  const Vector colmean = x.rowwise().mean();
  Matrix xc = x.colwise() - colmean;
  Eigen::BDCSVD<Matrix> svd(xc, Eigen::ComputeThinU | Eigen::ComputeThinV);
  // numerically-null directions must stay out of the water-fill: their right
  // singular vectors are not orthogonal to the all-ones vector
  Vector lambda = svd.singularValues();
  Index rank = 0;
  const double tol = lambda.size() ? 1e-12 * std::max(1.0, lambda[0]) : 0.0;
  for (Index i = 0; i < lambda.size(); ++i)
    if (lambda[i] > tol) ++rank;
  lambda.conservativeResize(rank);
  auto [wvec, level] = water_fill(lambda, r - 1.0);
  (void)level;
  const Matrix v = svd.matrixV().leftCols(rank);
  Matrix w = Matrix::Constant(m, m, 1.0 / static_cast<double>(m));
  w.noalias() += v * wvec.asDiagonal() * v.transpose();
  // report the realized operator norm rather than trusting the water level
  Matrix resid = x - x * w;
  Eigen::BDCSVD<Matrix> rs(resid);
  const double value = rs.singularValues().size() ? rs.singularValues()[0] : 0.0;
  return {std::move(w), value};
}

struct SplitResult {
  Matrix w0;
  Matrix w1;
  Index rank_w0 = 0;
};

// SVD split of W at the given singular-value threshold:
// W1 keeps the components <= threshold, W0 = (W - W1)(I - W1)^{-1}.
// 1'W = 1' implies 1'W0 = 1'.
inline SplitResult low_rank_split(const Matrix& w, double threshold = 0.9) {
  require_finite(w, "low_rank_split");
  if (threshold >= 1.0) throw InvalidConfig("low_rank_split: threshold < 1 required");
  Eigen::BDCSVD<Matrix> svd(w, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vector sv = svd.singularValues();
  Vector low = sv;
  Index rank0 = 0;
  for (Index i = 0; i < sv.size(); ++i) {
    if (sv[i] > threshold) {
      low[i] = 0.0;
      ++rank0;
    }
  }
  SplitResult out;
  out.rank_w0 = rank0;
  out.w1 = svd.matrixU() * low.asDiagonal() * svd.matrixV().transpose();
  const Index m = w.rows();
  out.w0 = (w - out.w1) * (Matrix::Identity(m, m) - out.w1).partialPivLu().inverse();
  return out;
}

// Per-point weights plus the derived active set; weights only decrease.
struct WeightState {
  Vector c;
  Vector tau;  // scores from the last downweighting step

  explicit WeightState(Index n) : c(Vector::Ones(n)), tau(Vector::Zero(n)) {}

  std::vector<Index> active() const {
    std::vector<Index> a;
    for (Index i = 0; i < c.size(); ++i)
      if (c[i] >= 0.5) a.push_back(i);
    return a;
  }
};

// Multiplicative downweighting c_i <- c_i (1 - tau_i / tau_max) on the active
// set. The decrease of sum c equals sum_{active} c_i tau_i / tau_max, so
// points are removed in proportion to their share of the score mass.
inline WeightState downweight(const WeightState& state, const Vector& tau) {
  if (tau.size() != state.c.size()) throw InvalidInput("downweight: tau size mismatch");
  const auto act = state.active();
  double tau_max = 0.0;
  for (Index i : act) {
    if (tau[i] < 0) throw InvalidInput("downweight: tau must be nonnegative");
    tau_max = std::max(tau_max, tau[i]);
  }
  if (tau_max <= 0.0) throw NoProgress("downweight: all scores zero on the active set");
  WeightState next = state;
  for (Index i : act) next.c[i] = state.c[i] * (1.0 - tau[i] / tau_max);
  next.tau = tau;
  return next;
}

struct SaddleConfig {
  int fw_iters = 2000;
  double tol = 1e-5;
  int tol_window = 30;
  int pgd_iters = 15;
  double split_threshold = 0.9;
  KappaOptions kappa;
};

struct SaddleSolution {
  Matrix w;
  Matrix y;
  double value = 0.0;
  Matrix w0, w1;
  Index rank_w0 = 0;
  int iterations = 0;
  bool stalled = false;
};

// Frank-Wolfe on the concave function f(Y) = min_W sum_i c_i r_i(W)' Y r_i(W)
// over the kappa-oracle feasible set (trace ball when the norm is Euclidean),
// with the W best response computed per column by projected gradient on the
// capped simplex. Step 2/(t+2).
inline SaddleSolution saddle_reconstruct(const Matrix& x_a, const Vector& c, double cap,
                                         const NormSpec& spec, const SaddleConfig& cfg = {}) {
  require_finite(x_a, "saddle_reconstruct");
  const Index m = x_a.cols();
  const Index d = x_a.rows();
  if (c.size() != m) throw InvalidInput("saddle_reconstruct: weight size mismatch");
  if (cap * static_cast<double>(m) < 1.0 - 1e-12)
    throw InfeasibleCap("saddle_reconstruct: cap * |A| < 1");

  Matrix w = Matrix::Constant(m, m, 1.0 / static_cast<double>(m));
  Matrix y = Matrix::Identity(d, d);
  {  // feasible start for either constraint set
    const double q = spec.kind == NormKind::Euclidean ? 2.0 : spec.qexp();
    if (q == 2.0) y /= static_cast<double>(d);
    else if (std::isfinite(q)) y /= std::pow(static_cast<double>(d), 2.0 / q);
  }

  bool first_response = true;
  auto best_response = [&](const Matrix& ycur, Matrix& wio) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(ycur);
    const Matrix b = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                     es.eigenvectors().transpose();
    const Matrix xt = b * x_a;  // residual geometry under Y^{1/2}
    Eigen::BDCSVD<Matrix> sv(xt);
    const double top = sv.singularValues().size() ? sv.singularValues()[0] : 0.0;
    const double step = 1.0 / std::max(1e-12, 2.0 * top * top);
    const Matrix gram = xt.transpose() * xt;
    if (first_response) {
      // seed each column with the uniform average of its nearest columns;
      // plain uniform starts converge too slowly on far-apart clusters
      first_response = false;
      const Index need = std::min<Index>(
          m, static_cast<Index>(std::ceil(1.0 / cap - 1e-12)));
      const Vector diag = gram.diagonal();
      std::vector<Index> order(static_cast<std::size_t>(m));
      for (Index i = 0; i < m; ++i) {
        std::iota(order.begin(), order.end(), Index{0});
        std::nth_element(order.begin(), order.begin() + need, order.end(), [&](Index a, Index bb) {
          return diag[a] - 2.0 * gram(a, i) < diag[bb] - 2.0 * gram(bb, i);
        });
        wio.col(i).setZero();
        for (Index j = 0; j < need; ++j)
          wio(order[static_cast<std::size_t>(j)], i) = 1.0 / static_cast<double>(need);
      }
    }
    // FISTA with projection, per column
    Matrix prev = wio;
    for (int it = 0; it < cfg.pgd_iters; ++it) {
      const double mom = static_cast<double>(it) / static_cast<double>(it + 3);
      Matrix yk = wio + mom * (wio - prev);
      prev = wio;
      Matrix grad = 2.0 * (gram * yk - gram);
      for (Index i = 0; i < m; ++i)
        wio.col(i) = capped_simplex_project(Vector(yk.col(i) - step * grad.col(i)), cap);
    }
  };

  auto weighted_gram = [&](const Matrix& wcur) {
    Matrix resid = x_a - x_a * wcur;
    Matrix g = Matrix::Zero(d, d);
    for (Index i = 0; i < m; ++i)
      g.noalias() += c[i] * (resid.col(i) * resid.col(i).transpose());
    return g;
  };
  auto inner_value = [&](const Matrix& wcur, const Matrix& ycur) {
    return (weighted_gram(wcur) * ycur).trace();
  };

  double best = -std::numeric_limits<double>::infinity();
  Matrix best_w = w, best_y = y;
  int since_best = 0;
  int t = 0;
  for (; t < cfg.fw_iters; ++t) {
    best_response(y, w);
    const double val = inner_value(w, y);
    if (val > best * (1.0 + cfg.tol) || best < 0) since_best = 0;
    else ++since_best;
    if (val > best) {
      best = val;
      best_w = w;
      best_y = y;
    }
    if (since_best > cfg.tol_window) break;
    const KappaResult kr = kappa_oracle(weighted_gram(w), spec, cfg.kappa);
    const double gamma = 2.0 / static_cast<double>(t + 2);
    y = (1.0 - gamma) * y + gamma * kr.y;
  }

  SaddleSolution out;
  out.w = best_w;
  out.y = best_y;
  out.value = best;
  out.iterations = t;
  out.stalled = t >= cfg.fw_iters;
  SplitResult split = low_rank_split(best_w, cfg.split_threshold);
  out.w0 = std::move(split.w0);
  out.w1 = std::move(split.w1);
  out.rank_w0 = split.rank_w0;
  return out;
}

enum class EstimatorMode { FastL2, SaddleL2, GeneralNorm };

inline const char* to_string(EstimatorMode m) {
  switch (m) {
    case EstimatorMode::FastL2: return "fast-l2";
    case EstimatorMode::SaddleL2: return "saddle-l2";
    case EstimatorMode::GeneralNorm: return "general";
  }
  return "?";
}

struct Candidate {
  Vector point;
  double weight = 0.0;
};

struct EstimateReport {
  std::optional<Vector> estimate;       // single-estimate regime (alpha >= 3/4)
  std::vector<Candidate> candidates;    // list regime (alpha < 3/4)
  int iterations = 0;
  double final_objective = 0.0;
  EstimatorMode mode = EstimatorMode::FastL2;
  double sigma_used = 0.0;
  double kappa_used = 1.0;
  int sigma_doublings = 0;
  bool stalled = false;
};

struct RecoverIteration {
  int iter = 0;
  const std::vector<Index>* active = nullptr;
  const Vector* c = nullptr;    // weights before this step's downweighting
  const Vector* tau = nullptr;  // raw scores, zero off the active set
  double objective = 0.0;
  double a = 0.0;  // kappa * n * sigma^2; the filter triggers above 4a
  bool downweighted = false;
};

struct RecoverConfig {
  EstimatorMode mode = EstimatorMode::FastL2;
  int max_outer = 300;
  bool auto_sigma = false;
  int max_doublings = 60;
  double fast_r = 0.0;  // 0 -> 1/alpha
  SaddleConfig saddle;
  KappaOptions kappa;
  Index exact_w_threshold = 600;  // above this the reconstruction is the weighted mean
  double cluster_radius_factor = 2.0;
  std::function<void(const RecoverIteration&)> observer;
};

namespace detail {

inline std::vector<std::vector<Index>> single_linkage(const Matrix& pts, double radius,
                                                      std::size_t max_clusters,
                                                      const NormSpec& spec) {
  const Index m = pts.cols();
  std::vector<Index> parent(static_cast<std::size_t>(m));
  std::iota(parent.begin(), parent.end(), Index{0});
  std::function<Index(Index)> find = [&](Index i) {
    while (parent[static_cast<std::size_t>(i)] != i) {
      parent[static_cast<std::size_t>(i)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(i)])];
      i = parent[static_cast<std::size_t>(i)];
    }
    return i;
  };
  auto unite = [&](Index a, Index b) { parent[static_cast<std::size_t>(find(a))] = find(b); };
  for (Index i = 0; i < m; ++i)
    for (Index j = i + 1; j < m; ++j)
      if (norm_eval(pts.col(i) - pts.col(j), spec) <= radius) unite(i, j);
  std::vector<std::vector<Index>> clusters;
  std::vector<Index> roots;
  for (Index i = 0; i < m; ++i) {
    const Index r = find(i);
    auto it = std::find(roots.begin(), roots.end(), r);
    std::size_t ci;
    if (it == roots.end()) {
      roots.push_back(r);
      clusters.emplace_back();
      ci = clusters.size() - 1;
    } else {
      ci = static_cast<std::size_t>(it - roots.begin());
    }
    clusters[ci].push_back(i);
  }
  auto centroid = [&](const std::vector<Index>& cl) {
    Vector s = Vector::Zero(pts.rows());
    for (Index i : cl) s += pts.col(i);
    return Vector(s / static_cast<double>(cl.size()));
  };
  while (clusters.size() > max_clusters) {
    double bestd = std::numeric_limits<double>::infinity();
    std::size_t ba = 0, bb = 1;
    for (std::size_t a = 0; a < clusters.size(); ++a)
      for (std::size_t b = a + 1; b < clusters.size(); ++b) {
        const double dd = norm_eval(centroid(clusters[a]) - centroid(clusters[b]), spec);
        if (dd < bestd) {
          bestd = dd;
          ba = a;
          bb = b;
        }
      }
    clusters[ba].insert(clusters[ba].end(), clusters[bb].begin(), clusters[bb].end());
    clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(bb));
  }
  return clusters;
}

}  // namespace detail

// One pass of the downweighting outer loop at a fixed sigma. Throws
// PromiseViolated when the active set falls below the invariant floor.
inline EstimateReport recover_mean_once(const Matrix& data, double alpha, double sigma,
                                        const NormSpec& spec, const RecoverConfig& cfg) {
  const Index n = data.cols();
  const double nn = static_cast<double>(n);
  const double floor_sz = alpha * (2.0 + alpha) / (4.0 - alpha) * nn;
  const double cap = (4.0 - alpha) / (alpha * (2.0 + alpha) * nn);
  const double gamma = (cfg.mode == EstimatorMode::GeneralNorm && spec.kind != NormKind::TopKL1)
                           ? spec.strong_convexity()
                           : 1.0;
  const NormSpec oracle_spec =
      cfg.mode == EstimatorMode::GeneralNorm ? spec : NormSpec::euclidean();

  WeightState state(n);
  EstimateReport rep;
  rep.mode = cfg.mode;
  rep.sigma_used = sigma;

  for (int iter = 0; iter < cfg.max_outer; ++iter) {
    const auto act = state.active();
    if (static_cast<double>(act.size()) < floor_sz - 1e-9)
      throw PromiseViolated("recover_mean: active set below the invariant floor");
    const Matrix x_act = select_columns(data, act);
    Vector c_act(static_cast<Index>(act.size()));
    for (std::size_t i = 0; i < act.size(); ++i) c_act[static_cast<Index>(i)] = state.c[act[i]];

    Matrix resid;
    std::optional<SaddleSolution> sol;
    std::optional<Matrix> fast_w;
    const bool large = static_cast<Index>(act.size()) > cfg.exact_w_threshold;
    if (large) {
      const Vector wbar = c_act / c_act.sum();
      resid = x_act.colwise() - Vector(x_act * wbar);
    } else if (cfg.mode == EstimatorMode::FastL2) {
      const double r = cfg.fast_r > 0 ? cfg.fast_r : 1.0 / alpha;
      auto [w, val] = fast_l2_reconstruct(x_act, r);
      (void)val;
      resid = x_act - x_act * w;
      fast_w = std::move(w);
    } else {
      sol = saddle_reconstruct(x_act, c_act, cap, oracle_spec, cfg.saddle);
      resid = x_act - x_act * sol->w;
    }

    Matrix gram = Matrix::Zero(data.rows(), data.rows());
    for (Index i = 0; i < resid.cols(); ++i)
      gram.noalias() += c_act[i] * (resid.col(i) * resid.col(i).transpose());
    const KappaResult kr = kappa_oracle(gram, oracle_spec, cfg.kappa);
    rep.kappa_used = kr.kappa;
    const double a = kr.kappa * nn * sigma * sigma;

    Vector tau = Vector::Zero(n);
    for (std::size_t i = 0; i < act.size(); ++i) {
      const Vector& r = resid.col(static_cast<Index>(i));
      tau[act[i]] = r.dot(kr.y * r);
    }
    rep.iterations = iter + 1;
    rep.final_objective = kr.value;

    const bool filter = kr.value > 4.0 * a;
    if (cfg.observer) {
      RecoverIteration info;
      info.iter = iter;
      info.active = &act;
      info.c = &state.c;
      info.tau = &tau;
      info.objective = kr.value;
      info.a = a;
      info.downweighted = filter;
      cfg.observer(info);
    }
    if (filter) {
      state = downweight(state, tau);
      continue;
    }

    // success: report the estimate (alpha >= 3/4) or the candidate list
    if (alpha >= 0.75) {
      rep.estimate = Vector(x_act.rowwise().mean());
      return rep;
    }
    Matrix z;
    Index rank0 = 1;
    if (sol) {
      z = x_act * sol->w0;
      rank0 = std::max<Index>(1, sol->rank_w0);
    } else if (fast_w) {
      SplitResult split = low_rank_split(*fast_w, cfg.saddle.split_threshold);
      z = x_act * split.w0;
      rank0 = std::max<Index>(1, split.rank_w0);
    } else {
      const Vector wbar = c_act / c_act.sum();
      z = Matrix((x_act * wbar).replicate(1, x_act.cols()));
    }
    const double radius =
        cfg.cluster_radius_factor * std::sqrt(rep.kappa_used) * sigma / (std::sqrt(gamma) * alpha);
    auto clusters = detail::single_linkage(z, radius, static_cast<std::size_t>(rank0 + 1), spec);
    for (const auto& cl : clusters) {
      Vector s = Vector::Zero(data.rows());
      for (Index i : cl) s += z.col(i);
      rep.candidates.push_back(
          {Vector(s / static_cast<double>(cl.size())),
           static_cast<double>(cl.size()) / static_cast<double>(z.cols())});
    }
    return rep;
  }
  rep.stalled = true;
  return rep;
}

// Robust mean estimation with the downweighting outer loop. sigma is the
// promised variance bound of the good set; with auto_sigma it is doubled
// from a median-pairwise-distance guess until the loop exits cleanly.
inline EstimateReport recover_mean(const Matrix& data, double alpha, double sigma,
                                   const NormSpec& spec, const RecoverConfig& cfg = {}) {
  require_finite(data, "recover_mean");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidConfig("recover_mean: alpha in (0,1]");
  if (!cfg.auto_sigma) {
    if (!(sigma > 0.0)) throw InvalidConfig("recover_mean: sigma > 0 required (or auto_sigma)");
    return recover_mean_once(data, alpha, sigma, spec, cfg);
  }
  double s = sigma;
  if (!(s > 0.0)) {
    // median pairwise distance / sqrt(d), on a bounded sample of pairs; the
    // doubling starts well below the guess since outliers inflate the median
    // and the first clean exit should use the smallest workable sigma
    const Index n = data.cols();
    auto rng = make_rng(0x5161u);
    std::uniform_int_distribution<Index> pick(0, n - 1);
    std::vector<double> dists;
    const int pairs = std::min<int>(2000, static_cast<int>(n) * (static_cast<int>(n) - 1) / 2);
    for (int t = 0; t < pairs; ++t) {
      Index i = pick(rng), j = pick(rng);
      if (i == j) continue;
      dists.push_back((data.col(i) - data.col(j)).norm());
    }
    std::sort(dists.begin(), dists.end());
    s = dists.empty() ? 1.0 : dists[dists.size() / 2] / std::sqrt(static_cast<double>(data.rows()));
    s = std::max(s / 4.0, 1e-9);
  }
  for (int dbl = 0; dbl <= cfg.max_doublings; ++dbl) {
    try {
      EstimateReport rep = recover_mean_once(data, alpha, s, spec, cfg);
      if (!rep.stalled) {
        rep.sigma_doublings = dbl;
        return rep;
      }
    } catch (const PromiseViolated&) {
    }
    s *= 2.0;
  }
  throw PromiseViolated("recover_mean: sigma doubling exhausted");
}

}  // namespace resil
