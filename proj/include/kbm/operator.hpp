#pragma once

// Tridiagonal restrictions of T(x) = Delta_S + x X and of the rescaled
// generator P_gamma = -gamma X + gamma^2/2 Delta_S to one Casimir block.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>

#include "kbm/error.hpp"
#include "kbm/ladder.hpp"
#include "kbm/tridiagonal.hpp"

namespace kbm {

namespace detail {

inline void check_consistent(const CasimirBlock& block, const LadderCoefficients& coeffs) {
  const auto& cb = coeffs.block;
  if (cb.k_min != block.k_min || cb.k_max != block.k_max || cb.eta != block.eta ||
      cb.curvature != block.curvature ||
      coeffs.a.size() != static_cast<std::size_t>(block.dim() - 1)) {
    throw Error(ErrorKind::inconsistent_block, "ladder coefficients do not match the block");
  }
}

inline TridiagonalOperator skeleton(const CasimirBlock& block) {
  TridiagonalOperator op;
  const auto n = static_cast<std::size_t>(block.dim());
  op.diag.assign(n, cd{});
  op.sub.assign(n - 1, cd{});
  op.sup.assign(n - 1, cd{});
  op.k_offset = block.k_min;
  op.meta.eta = block.eta;
  op.meta.curvature = block.curvature;
  op.meta.truncated = !block.finite;
  return op;
}

}  // namespace detail

/// Matrix of the geodesic vector field X = X_+ + X_- (real skew-symmetric).
inline TridiagonalOperator assemble_X(const CasimirBlock& block, const LadderCoefficients& coeffs) {
  detail::check_consistent(block, coeffs);
  TridiagonalOperator op = detail::skeleton(block);
  for (std::size_t j = 0; j < coeffs.a.size(); ++j) {
    op.sub[j] = coeffs.a[j];
    op.sup[j] = -coeffs.a[j];
  }
  return op;
}

/// Fiber Laplacian Delta_S = -V^2, acting by k^2 on slot k.
inline TridiagonalOperator assemble_laplacian(const CasimirBlock& block) {
  TridiagonalOperator op = detail::skeleton(block);
  for (int j = 0; j < block.dim(); ++j) {
    const double k = static_cast<double>(block.k_min + j);
    op.diag[j] = k * k;
  }
  return op;
}

inline TridiagonalOperator assemble_T(const CasimirBlock& block, const LadderCoefficients& coeffs,
                                      cd x) {
  detail::check_consistent(block, coeffs);
  TridiagonalOperator op = assemble_laplacian(block);
  for (std::size_t j = 0; j < coeffs.a.size(); ++j) {
    op.sub[j] = x * coeffs.a[j];
    op.sup[j] = -x * coeffs.a[j];
  }
  op.meta.kind = OperatorKind::family_t;
  op.meta.parameter = x;
  return op;
}

inline TridiagonalOperator assemble_Pgamma(const CasimirBlock& block,
                                           const LadderCoefficients& coeffs, double gamma) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) {
    throw Error(ErrorKind::invalid_argument, "assemble_Pgamma: gamma must be > 0");
  }
  detail::check_consistent(block, coeffs);
  TridiagonalOperator op = detail::skeleton(block);
  const double half_g2 = 0.5 * gamma * gamma;
  for (int j = 0; j < block.dim(); ++j) {
    const double k = static_cast<double>(block.k_min + j);
    op.diag[j] = half_g2 * k * k;
  }
  for (std::size_t j = 0; j < coeffs.a.size(); ++j) {
    op.sub[j] = -gamma * coeffs.a[j];
    op.sup[j] = gamma * coeffs.a[j];
  }
  op.meta.kind = OperatorKind::generator;
  op.meta.parameter = gamma;
  return op;
}

/// min over random complex unit vectors v of Re <op v, v>.
inline double accretivity_minimum(const TridiagonalOperator& op, int trials, std::uint64_t seed) {
  if (trials < 1) throw Error(ErrorKind::invalid_argument, "accretivity_minimum: trials >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto n = static_cast<std::size_t>(op.dim());
  std::vector<cd> v(n);
  double best = std::numeric_limits<double>::infinity();
  for (int t = 0; t < trials; ++t) {
    for (auto& z : v) {
      const double re = normal(rng);
      z = cd(re, normal(rng));
    }
    const double nv = norm2(v);
    for (auto& z : v) z /= nv;
    const auto w = op.apply(v);
    best = std::min(best, inner(w, v).real());
  }
  return best;
}

}  // namespace kbm
