#pragma once

// Matrix-level perturbation theory for the family T(x) = Delta_S + x X on one
// block: Rayleigh-Schroedinger coefficients, Riesz projections by contour
// quadrature, and resolvent-norm estimates.

#include <Eigen/SVD>

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "kbm/eig.hpp"
#include "kbm/error.hpp"
#include "kbm/ladder.hpp"
#include "kbm/operator.hpp"

namespace kbm {

struct PerturbationSeries {
  CasimirBlock block;
  cd mu0{};
  cd mu1{};
  /// Taylor coefficient of x^2; the second derivative of mu at 0 is 2 * mu2.
  cd mu2{};
  std::vector<cd> phi0;
  std::vector<cd> phi1;

  cd second_derivative() const { return 2.0 * mu2; }
};

/// First and second order coefficients of the branch through 0. The
/// component of phi1 along phi0 is fixed to zero.
inline PerturbationSeries rs_series(const CasimirBlock& block, const LadderCoefficients& coeffs) {
  PerturbationSeries s;
  s.block = block;
  const auto n = static_cast<std::size_t>(block.dim());
  s.phi0.assign(n, cd{});
  s.phi1.assign(n, cd{});
  const auto j0 = static_cast<std::size_t>(block.index_of(0));
  s.phi0[j0] = 1.0;
  if (block.trivial()) return s;

  const TridiagonalOperator t0 = assemble_laplacian(block);
  const TridiagonalOperator x_op = assemble_X(block, coeffs);
  s.mu0 = t0.diag[j0];

  const auto x_phi0 = x_op.apply(s.phi0);
  s.mu1 = inner(x_phi0, s.phi0);

  // (T - mu0) phi1 = -(X - mu1) phi0 on the complement of phi0; T is diagonal.
  for (std::size_t j = 0; j < n; ++j) {
    if (j == j0) continue;
    const cd denom = t0.diag[j] - s.mu0;
    if (std::abs(denom) < 1e-14) {
      throw Error(ErrorKind::singular_solve, "rs_series: unperturbed eigenvalue is not simple");
    }
    s.phi1[j] = -(x_phi0[j] - s.mu1 * s.phi0[j]) / denom;
  }
  auto x_phi1 = x_op.apply(s.phi1);
  for (std::size_t j = 0; j < n; ++j) x_phi1[j] -= s.mu1 * s.phi1[j];
  // T^(2) = 0 for a linear family.
  s.mu2 = inner(x_phi1, s.phi0);
  return s;
}

struct Contour {
  cd center{0.0, 0.0};
  double radius = 0.5;
  int nodes = 64;

  void validate() const {
    if (!(radius > 0.0) || !std::isfinite(radius)) {
      throw Error(ErrorKind::invalid_argument, "contour radius must be > 0");
    }
    if (nodes < 8) throw Error(ErrorKind::invalid_argument, "contour needs at least 8 nodes");
  }

  cd node(int j) const {
    const double theta = 2.0 * std::numbers::pi * j / nodes;
    return center + radius * cd(std::cos(theta), std::sin(theta));
  }

  /// Checks that no point of `spectrum` lies within `dist` of the circle.
  bool avoids(const std::vector<cd>& spectrum, double dist) const {
    for (const cd& z : spectrum) {
      if (std::abs(std::abs(z - center) - radius) < dist) return false;
    }
    return true;
  }
};

/// Contour for the unperturbed eigenvalue 0: circle of radius 1/2 about 0.
inline Contour default_contour() { return {}; }

inline Eigen::MatrixXcd dense_resolvent(const TridiagonalOperator& op, cd zeta) {
  TridiagonalLU lu(op, zeta);
  if (lu.min_relative_pivot() < 1e-14) {
    throw Error(ErrorKind::singular_solve, "resolvent: zeta is (numerically) an eigenvalue");
  }
  const int n = op.dim();
  Eigen::MatrixXcd r(n, n);
  std::vector<cd> col(static_cast<std::size_t>(n));
  for (int c = 0; c < n; ++c) {
    std::fill(col.begin(), col.end(), cd{});
    col[c] = 1.0;
    lu.solve_in_place(col);
    for (int i = 0; i < n; ++i) r(i, c) = col[i];
  }
  return r;
}

/// P = -(1/2 pi i) \oint (op - zeta)^{-1} dzeta by the trapezoidal rule.
inline Eigen::MatrixXcd riesz_projection(const TridiagonalOperator& op, const Contour& contour) {
  contour.validate();
  if (op.dim() <= kDenseMaxDim && !contour.avoids(eig_dense(op), 1e-8)) {
    throw Error(ErrorKind::singular_solve, "riesz_projection: eigenvalue within 1e-8 of contour");
  }
  const int n = op.dim();
  Eigen::MatrixXcd p = Eigen::MatrixXcd::Zero(n, n);
  for (int j = 0; j < contour.nodes; ++j) {
    const cd zeta = contour.node(j);
    const cd weight = -(zeta - contour.center) / static_cast<double>(contour.nodes);
    p += weight * dense_resolvent(op, zeta);
  }
  return p;
}

struct NormEstimate {
  double power = 0.0;
  /// Dense SVD value when dim <= 512, else NaN.
  double dense = std::numeric_limits<double>::quiet_NaN();

  double value() const { return std::isnan(dense) ? power : dense; }
};

/// Largest singular value by power iteration on B^H B, certified by a dense
/// SVD for small dimensions.
inline NormEstimate spectral_norm(const TridiagonalOperator& b, double rel_tol = 1e-12,
                                  int max_iter = 20000) {
  NormEstimate out;
  const auto n = static_cast<std::size_t>(b.dim());
  const TridiagonalOperator bh = b.adjoint();
  std::vector<cd> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = cd(1.0 + 0.01 * static_cast<double>(i % 7), 0.1);
  double nv = norm2(v);
  for (auto& z : v) z /= nv;
  double sigma = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    const auto bv = b.apply(v);
    const double next = norm2(bv);
    auto w = bh.apply(bv);
    nv = norm2(w);
    if (nv == 0.0) {
      sigma = next;
      break;
    }
    for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / nv;
    if (it > 0 && std::abs(next - sigma) <= rel_tol * next) {
      sigma = next;
      break;
    }
    sigma = next;
  }
  out.power = sigma;
  if (b.dim() <= 512) {
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(b.to_dense());
    out.dense = svd.singularValues()(0);
  }
  return out;
}

/// X (Delta_S - zeta)^{-1}, which is again tridiagonal.
inline TridiagonalOperator perturbed_resolvent_factor(const CasimirBlock& block,
                                                      const LadderCoefficients& coeffs, cd zeta) {
  const TridiagonalOperator x_op = assemble_X(block, coeffs);
  TridiagonalOperator b = x_op;
  std::vector<cd> inv(static_cast<std::size_t>(block.dim()));
  for (int j = 0; j < block.dim(); ++j) {
    const double k = static_cast<double>(block.k_min + j);
    const cd d = k * k - zeta;
    if (std::abs(d) < 1e-14 * (1.0 + k * k)) {
      throw Error(ErrorKind::singular_solve, "zeta lies on the spectrum of Delta_S");
    }
    inv[j] = 1.0 / d;
  }
  for (int j = 0; j < block.dim(); ++j) b.diag[j] = 0.0;
  for (std::size_t j = 0; j < b.sub.size(); ++j) {
    b.sub[j] = x_op.sub[j] * inv[j];
    b.sup[j] = x_op.sup[j] * inv[j + 1];
  }
  b.meta.kind = OperatorKind::other;
  return b;
}

/// min over contour nodes of 1 / ||X (Delta_S - zeta)^{-1}||. Parameters
/// |x| below this value keep the spectrum split by the contour.
inline double perturbation_radius(const CasimirBlock& block, const LadderCoefficients& coeffs,
                                  const Contour& contour) {
  contour.validate();
  if (block.trivial()) return std::numeric_limits<double>::infinity();
  double radius = std::numeric_limits<double>::infinity();
  for (int j = 0; j < contour.nodes; ++j) {
    const auto b = perturbed_resolvent_factor(block, coeffs, contour.node(j));
    const double sigma = spectral_norm(b).value();
    if (sigma > 0.0) radius = std::min(radius, 1.0 / sigma);
  }
  return radius;
}

struct RemarkBound {
  double computed = 0.0;
  double closed_form = 0.0;

  double relative_error() const { return std::abs(computed - closed_form) / closed_form; }
};

/// Norm of X (Delta_S - zeta)^{-1} restricted to the k = 0 slot, next to the
/// closed form |zeta|^{-1} sqrt(eta / 2).
inline RemarkBound remark_bound(double eta, cd zeta, double K = 0.0) {
  if (!(eta > 0.0)) throw Error(ErrorKind::invalid_argument, "remark_bound: eta must be > 0");
  const CasimirBlock block = K > 0.0 ? finite_block(eta, K) : make_block(eta, K, -2, 2);
  const LadderCoefficients coeffs = ladder_coefficients(block);
  const auto b = perturbed_resolvent_factor(block, coeffs, zeta);
  for (int k = 0; k * k <= std::abs(zeta) + 1.0; ++k) {
    if (std::abs(zeta - static_cast<double>(k * k)) < 1e-14) {
      throw Error(ErrorKind::singular_solve, "remark_bound: zeta lies on the spectrum of Delta_S");
    }
  }
  std::vector<cd> e0(static_cast<std::size_t>(block.dim()), cd{});
  e0[static_cast<std::size_t>(block.index_of(0))] = 1.0;
  RemarkBound out;
  out.computed = norm2(b.apply(e0));
  out.closed_form = std::sqrt(0.5 * eta) / std::abs(zeta);
  return out;
}

}  // namespace kbm
