#pragma once

#include <Eigen/Core>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>

#include "resil/common.hpp"
#include "resil/kappa.hpp"
#include "resil/norm_spec.hpp"

namespace resil {

struct TwoToPsiOptions {
  std::int64_t vertex_cap = (1 << 20);
  VertexMode vertex_mode = VertexMode::ExactL1;
  AscentOptions ascent;
  KappaOptions kappa;
};

// Interval containing ||A||_{2->psi} = sup_{||u||_2 <= 1} ||A u||_psi, where
// A's columns are the a_i. Squared, this equals the maximum of
// sum_i <a_i, v>^2 over the dual unit ball. Exact for Euclidean (top singular
// value) and for polyhedral dual balls (vertex enumeration); for PNorm the
// problem is NP-hard and the interval is the ascent lower bound against the
// kappa-oracle relaxation value.
inline CertifiedInterval induced_two_to_psi(const Matrix& a, const NormSpec& spec,
                                            std::int64_t budget = 4096,
                                            const TwoToPsiOptions& opt = {}) {
  require_finite(a, "induced_two_to_psi");
  switch (spec.kind) {
    case NormKind::Euclidean: {
      Eigen::JacobiSVD<Matrix> svd(a);
      const double s = a.size() == 0 ? 0.0 : svd.singularValues()[0];
      return CertifiedInterval::exact(s);
    }
    case NormKind::TopKL1: {
      auto verts = support_vertices(spec, a.rows(), VertexMode::Auto, opt.vertex_cap);
      double best = 0.0;
      for (Index j = 0; j < verts->cols(); ++j)
        best = std::max(best, (a.transpose() * verts->col(j)).squaredNorm());
      return {std::sqrt(best), std::sqrt(best), BoundMethod::VertexEnum};
    }
    case NormKind::L1ViaP:
      if (opt.vertex_mode == VertexMode::ExactL1) {
        if (auto verts = support_vertices(spec, a.rows(), VertexMode::ExactL1, opt.vertex_cap)) {
          double best = 0.0;
          for (Index j = 0; j < verts->cols(); ++j)
            best = std::max(best, (a.transpose() * verts->col(j)).squaredNorm());
          return {std::sqrt(best), std::sqrt(best), BoundMethod::VertexEnum};
        }
      }
      [[fallthrough]];
    case NormKind::PNorm: {
      if (budget <= 0) throw InvalidConfig("induced_two_to_psi: budget must be positive");
      AscentOptions aopt = opt.ascent;
      aopt.restarts = std::max(aopt.restarts, static_cast<int>(budget / std::max(1, aopt.max_iters)));
      auto [flo, v] = moment_ascent(a, 2.0, spec, aopt);
      (void)v;
      KappaResult kr = kappa_oracle(a * a.transpose(), spec.qexp(), opt.kappa);
      const double up = std::max(kr.value, flo);
      return {std::sqrt(std::max(0.0, flo)), std::sqrt(up), BoundMethod::SdpSandwich};
    }
  }
  return CertifiedInterval::exact(0.0);
}

}  // namespace resil
