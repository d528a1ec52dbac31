#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace resil {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Error taxonomy shared across the library. Callers that front a process
// boundary (the CLI) map these onto exit codes.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InvalidInput : Error { using Error::Error; };
struct InvalidConfig : Error { using Error::Error; };
struct InvalidEps : Error { using Error::Error; };
struct InfeasibleCap : Error { using Error::Error; };
struct TooManyVertices : Error { using Error::Error; };
struct TooManySubsets : Error { using Error::Error; };
struct GridCoverage : Error { using Error::Error; };
struct NoResilientSubset : Error { using Error::Error; };
struct NoProgress : Error { using Error::Error; };
struct PromiseViolated : Error { using Error::Error; };

enum class BoundMethod { Exact, VertexEnum, SampledDirections, SdpSandwich };

inline const char* to_string(BoundMethod m) {
  switch (m) {
    case BoundMethod::Exact: return "exact";
    case BoundMethod::VertexEnum: return "vertex_enum";
    case BoundMethod::SampledDirections: return "sampled_directions";
    case BoundMethod::SdpSandwich: return "sdp_sandwich";
  }
  return "?";
}

// [lower, upper] bracket for a quantity we cannot always evaluate exactly.
// Exact implies lower == upper.
struct CertifiedInterval {
  double lower = 0.0;
  double upper = 0.0;
  BoundMethod method = BoundMethod::Exact;

  static CertifiedInterval exact(double v) { return {v, v, BoundMethod::Exact}; }
  double mid() const { return 0.5 * (lower + upper); }
};

inline void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw InvalidInput(std::string(what) + ": non-finite entries");
}
inline void require_finite(const Vector& v, const char* what) {
  if (!v.allFinite()) throw InvalidInput(std::string(what) + ": non-finite entries");
}

// splitmix64; used to derive independent per-cell / per-restart streams so
// results do not depend on scheduling.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(master ^ splitmix64(index + 0x51ab5e));
}

inline std::mt19937_64 make_rng(std::uint64_t seed) { return std::mt19937_64(splitmix64(seed)); }

// Subset size ceil((1-eps)*n) with a nudge against float fuzz on exactly
// representable products.
inline Index kept_count(double eps, Index n) {
  return static_cast<Index>(std::ceil((1.0 - eps) * static_cast<double>(n) - 1e-9));
}

inline double binomial_approx(Index n, Index k) {
  if (k < 0 || k > n) return 0.0;
  k = std::min(k, n - k);
  double r = 1.0;
  for (Index i = 0; i < k; ++i) r *= static_cast<double>(n - i) / static_cast<double>(i + 1);
  return r;
}

// Visits all k-subsets of {0..n-1} in colexicographic order. fn returns false
// to stop early.
template <typename Fn>
void for_each_subset(Index n, Index k, Fn&& fn) {
  if (k < 0 || k > n) return;
  std::vector<Index> c(static_cast<std::size_t>(k));
  for (Index i = 0; i < k; ++i) c[static_cast<std::size_t>(i)] = i;
  if (k == 0) {
    fn(c);
    return;
  }
  while (true) {
    if (!fn(c)) return;
    Index i = 0;
    while (i + 1 < k && c[static_cast<std::size_t>(i)] + 1 == c[static_cast<std::size_t>(i + 1)]) ++i;
    ++c[static_cast<std::size_t>(i)];
    for (Index j = 0; j < i; ++j) c[static_cast<std::size_t>(j)] = j;
    if (c[static_cast<std::size_t>(k - 1)] >= n) return;
  }
}

inline Matrix select_columns(const Matrix& x, const std::vector<Index>& idx) {
  Matrix out(x.rows(), static_cast<Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) out.col(static_cast<Index>(j)) = x.col(idx[j]);
  return out;
}

}  // namespace resil
