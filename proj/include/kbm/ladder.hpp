#pragma once

// Algebra of one Casimir block: the ladder basis has one vector e_k per
// vertical Fourier mode k, X_+ e_k = a_k e_{k+1} and X_- e_k = -a_{k-1} e_{k-1}
// with a_k >= 0. This is the real gauge compatible with X_+^* = -X_-.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <sstream>
#include <vector>

#include "kbm/error.hpp"

namespace kbm {

using cd = std::complex<double>;

/// Absolute tolerance for exact algebraic identities on ladders.
inline constexpr double kTolZero = 1e-12;

struct CasimirBlock {
  double curvature = 0.0;
  double eta = 0.0;
  int k_min = 0;
  int k_max = 0;
  /// True iff the ladder terminates intrinsically (K > 0, or the trivial block).
  bool finite = true;

  int dim() const { return k_max - k_min + 1; }
  /// Array index of ladder slot k.
  int index_of(int k) const { return k - k_min; }
  bool trivial() const { return eta == 0.0; }
};

struct LadderExtent {
  int k_min = 0;
  int k_max = 0;
  bool finite = true;

  bool bounded() const {
    return k_min != std::numeric_limits<int>::min() &&
           k_max != std::numeric_limits<int>::max();
  }
};

/// Squared norm ratio |X_+ u|^2 / |u|^2 for u in V_{eta,k}. Negative values
/// mean slot k+1 is absent from the block.
inline double ladder_coeff_sq(double eta, double K, int k) {
  const double kk = static_cast<double>(k);
  return 0.25 * (eta - K * kk - K * kk * kk);
}

namespace detail {
inline double zero_tolerance(double eta) { return kTolZero * (1.0 + std::abs(eta)); }
}  // namespace detail

/// Intrinsic ladder range of the block with Casimir value `eta`.
///
/// For K > 0 the ladder terminates where a coefficient vanishes, which
/// happens only when eta = K l (l + 1) for an integer l; other values of eta
/// do not label a block and are rejected. For K <= 0 the range is unbounded
/// and must be truncated.
inline LadderExtent ladder_extent(double eta, double K) {
  if (!(eta >= 0.0) || !std::isfinite(eta)) {
    throw Error(ErrorKind::invalid_argument, "ladder_extent: eta must be finite and >= 0");
  }
  if (!std::isfinite(K)) {
    throw Error(ErrorKind::invalid_argument, "ladder_extent: curvature must be finite");
  }
  if (eta == 0.0) return {0, 0, true};
  if (K <= 0.0) {
    return {std::numeric_limits<int>::min(), std::numeric_limits<int>::max(), false};
  }
  const double tol = detail::zero_tolerance(eta);
  const int limit = static_cast<int>(std::ceil(std::sqrt(eta / K))) + 2;
  for (int k = 0; k <= limit; ++k) {
    const double sq = ladder_coeff_sq(eta, K, k);
    if (std::abs(sq) <= tol) return {-k, k, true};
    if (sq < 0.0) {
      std::ostringstream msg;
      msg << "eta=" << eta << " is not of the form K*l*(l+1) for K=" << K
          << "; the ladder has no terminating rung";
      throw Error(ErrorKind::not_casimir_value, msg.str());
    }
  }
  throw Error(ErrorKind::not_casimir_value, "ladder_extent: no terminating rung found");
}

/// Builds a validated block on [k_min, k_max]. For K > 0 the range must be
/// the intrinsic one; for K <= 0 any range containing 0 is a truncation.
inline CasimirBlock make_block(double eta, double K, int k_min, int k_max) {
  if (k_min > 0 || k_max < 0) {
    throw Error(ErrorKind::invalid_argument, "make_block: range must contain slot 0");
  }
  const LadderExtent ext = ladder_extent(eta, K);
  CasimirBlock block{K, eta, k_min, k_max, ext.finite};
  if (ext.bounded()) {
    if (k_min != ext.k_min || k_max != ext.k_max) {
      throw Error(ErrorKind::inconsistent_block,
                  "make_block: finite ladder must use its intrinsic range");
    }
    return block;
  }
  const double tol = detail::zero_tolerance(eta);
  for (int k = k_min; k < k_max; ++k) {
    if (ladder_coeff_sq(eta, K, k) < -tol) {
      throw Error(ErrorKind::not_casimir_value, "make_block: negative coefficient inside ladder");
    }
  }
  return block;
}

/// Block on the intrinsic range; only valid for finite ladders.
inline CasimirBlock finite_block(double eta, double K) {
  const LadderExtent ext = ladder_extent(eta, K);
  if (!ext.bounded()) {
    throw Error(ErrorKind::invalid_argument, "finite_block: ladder is infinite, truncate it");
  }
  return CasimirBlock{K, eta, ext.k_min, ext.k_max, true};
}

struct LadderCoefficients {
  CasimirBlock block;
  /// a[j] is the X_+ coefficient from slot k_min + j to k_min + j + 1.
  std::vector<double> a;

  double at(int k) const { return a.at(static_cast<std::size_t>(k - block.k_min)); }
};

inline LadderCoefficients ladder_coefficients(const CasimirBlock& block) {
  LadderCoefficients out{block, {}};
  out.a.reserve(static_cast<std::size_t>(block.dim() - 1));
  const double tol = detail::zero_tolerance(block.eta);
  for (int k = block.k_min; k < block.k_max; ++k) {
    const double sq = ladder_coeff_sq(block.eta, block.curvature, k);
    if (sq < -tol) {
      throw Error(ErrorKind::not_casimir_value, "ladder_coefficients: negative coefficient");
    }
    out.a.push_back(std::sqrt(std::max(sq, 0.0)));
  }
  return out;
}

/// Dense matrices of the ladder operators on the (possibly truncated) basis.
struct LadderMatrices {
  Eigen::MatrixXcd x_plus;
  Eigen::MatrixXcd x_minus;
  Eigen::MatrixXcd v;

  Eigen::MatrixXcd x() const { return x_plus + x_minus; }
};

inline LadderMatrices ladder_matrices(const LadderCoefficients& coeffs) {
  const int n = coeffs.block.dim();
  LadderMatrices m{Eigen::MatrixXcd::Zero(n, n), Eigen::MatrixXcd::Zero(n, n),
                   Eigen::MatrixXcd::Zero(n, n)};
  for (int j = 0; j + 1 < n; ++j) {
    const double a = coeffs.a[static_cast<std::size_t>(j)];
    m.x_plus(j + 1, j) = a;
    m.x_minus(j, j + 1) = -a;
  }
  for (int j = 0; j < n; ++j) {
    m.v(j, j) = cd(0.0, static_cast<double>(coeffs.block.k_min + j));
  }
  return m;
}

/// Rows of ladder matrices whose two-step stencil stays inside the basis.
inline std::pair<int, int> interior_rows(const CasimirBlock& block) {
  if (block.finite) return {0, block.dim() - 1};
  return {1, block.dim() - 2};
}

/// Max-norm of (-4 X_+ X_- + i K V - K V^2) - eta I over interior rows.
inline double casimir_residual(const LadderCoefficients& coeffs) {
  const CasimirBlock& b = coeffs.block;
  const LadderMatrices m = ladder_matrices(coeffs);
  const double K = b.curvature;
  const Eigen::MatrixXcd omega = -4.0 * m.x_plus * m.x_minus + cd(0.0, K) * m.v - K * m.v * m.v;
  const auto [first, last] = interior_rows(b);
  double worst = 0.0;
  for (int r = first; r <= last; ++r) {
    for (int c = 0; c < b.dim(); ++c) {
      const cd expected = (r == c) ? cd(b.eta, 0.0) : cd(0.0, 0.0);
      worst = std::max(worst, std::abs(omega(r, c) - expected));
    }
  }
  return worst;
}

}  // namespace kbm
