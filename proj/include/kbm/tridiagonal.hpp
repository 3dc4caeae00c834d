#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <span>
#include <vector>

#include "kbm/error.hpp"

namespace kbm {

using cd = std::complex<double>;

enum class OperatorKind { family_t, generator, other };

/// Where an assembled matrix came from.
struct OperatorMeta {
  OperatorKind kind = OperatorKind::other;
  double eta = 0.0;
  double curvature = 0.0;
  /// x for the family T(x), gamma for the generator P_gamma.
  cd parameter{0.0, 0.0};
  bool truncated = false;
};

/// Complex tridiagonal matrix; sub[j] = M(j+1, j), sup[j] = M(j, j+1).
struct TridiagonalOperator {
  std::vector<cd> diag;
  std::vector<cd> sup;
  std::vector<cd> sub;
  /// Ladder index of array slot 0.
  int k_offset = 0;
  OperatorMeta meta;

  int dim() const { return static_cast<int>(diag.size()); }

  Eigen::MatrixXcd to_dense() const {
    const int n = dim();
    Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(n, n);
    for (int j = 0; j < n; ++j) m(j, j) = diag[j];
    for (int j = 0; j + 1 < n; ++j) {
      m(j + 1, j) = sub[j];
      m(j, j + 1) = sup[j];
    }
    return m;
  }

  std::vector<cd> apply(std::span<const cd> v) const {
    const int n = dim();
    std::vector<cd> out(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
      cd s = diag[j] * v[j];
      if (j > 0) s += sub[j - 1] * v[j - 1];
      if (j + 1 < n) s += sup[j] * v[j + 1];
      out[j] = s;
    }
    return out;
  }

  TridiagonalOperator adjoint() const {
    TridiagonalOperator out = *this;
    for (auto& d : out.diag) d = std::conj(d);
    for (std::size_t j = 0; j < sub.size(); ++j) {
      out.sub[j] = std::conj(sup[j]);
      out.sup[j] = std::conj(sub[j]);
    }
    out.meta.kind = OperatorKind::other;
    return out;
  }

  /// Maximum absolute row sum.
  double norm_inf() const {
    const int n = dim();
    double best = 0.0;
    for (int j = 0; j < n; ++j) {
      double s = std::abs(diag[j]);
      if (j > 0) s += std::abs(sub[j - 1]);
      if (j + 1 < n) s += std::abs(sup[j]);
      best = std::max(best, s);
    }
    return best;
  }
};

inline double norm2(std::span<const cd> v) {
  double scale = 0.0;
  for (const cd& z : v) scale = std::max(scale, std::abs(z));
  if (scale == 0.0) return 0.0;
  double s = 0.0;
  for (const cd& z : v) s += std::norm(z / scale);
  return scale * std::sqrt(s);
}

/// <u, v> = sum u_i conj(v_i).
inline cd inner(std::span<const cd> u, std::span<const cd> v) {
  cd s{0.0, 0.0};
  for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * std::conj(v[i]);
  return s;
}

/// LU factorization of (A - shift I) with partial pivoting (gttrf layout).
class TridiagonalLU {
 public:
  TridiagonalLU(const TridiagonalOperator& op, cd shift) { factor(op, shift); }

  /// Smallest |pivot| relative to the matrix scale; 0 means exactly singular.
  double min_relative_pivot() const { return min_rel_pivot_; }

  /// Replaces exactly-zero pivots by eps * scale so inverse iteration can
  /// proceed at an exact eigenvalue.
  void regularize() {
    const double tiny = std::numeric_limits<double>::epsilon() * std::max(scale_, 1e-300);
    for (auto& d : d_) {
      if (std::abs(d) < tiny) d = cd(tiny, 0.0);
    }
  }

  void solve_in_place(std::span<cd> b) const {
    const int n = static_cast<int>(d_.size());
    for (int i = 0; i + 1 < n; ++i) {
      if (pivot_[i]) std::swap(b[i], b[i + 1]);
      b[i + 1] -= l_[i] * b[i];
    }
    b[n - 1] /= d_[n - 1];
    if (n > 1) b[n - 2] = (b[n - 2] - u1_[n - 2] * b[n - 1]) / d_[n - 2];
    for (int i = n - 3; i >= 0; --i) {
      b[i] = (b[i] - u1_[i] * b[i + 1] - u2_[i] * b[i + 2]) / d_[i];
    }
  }

  std::vector<cd> solve(std::span<const cd> b) const {
    std::vector<cd> x(b.begin(), b.end());
    solve_in_place(x);
    return x;
  }

 private:
  void factor(const TridiagonalOperator& op, cd shift) {
    const int n = op.dim();
    d_.resize(n);
    for (int i = 0; i < n; ++i) d_[i] = op.diag[i] - shift;
    u1_.assign(op.sup.begin(), op.sup.end());
    std::vector<cd> dl(op.sub.begin(), op.sub.end());
    u2_.assign(static_cast<std::size_t>(std::max(n - 2, 0)), cd{});
    l_.assign(static_cast<std::size_t>(std::max(n - 1, 0)), cd{});
    pivot_.assign(static_cast<std::size_t>(std::max(n - 1, 0)), false);

    scale_ = 0.0;
    for (int i = 0; i < n; ++i) {
      double s = std::abs(d_[i]);
      if (i > 0) s += std::abs(dl[i - 1]);
      if (i + 1 < n) s += std::abs(u1_[i]);
      scale_ = std::max(scale_, s);
    }

    for (int i = 0; i + 1 < n; ++i) {
      if (std::abs(d_[i]) >= std::abs(dl[i])) {
        if (d_[i] != cd{}) {
          const cd f = dl[i] / d_[i];
          l_[i] = f;
          d_[i + 1] -= f * u1_[i];
        }
      } else {
        pivot_[i] = true;
        const cd f = d_[i] / dl[i];
        l_[i] = f;
        d_[i] = dl[i];
        const cd tmp = u1_[i];
        u1_[i] = d_[i + 1];
        d_[i + 1] = tmp - f * d_[i + 1];
        if (i + 2 < n) {
          u2_[i] = u1_[i + 1];
          u1_[i + 1] = -f * u2_[i];
        }
      }
    }
    double min_pivot = std::numeric_limits<double>::infinity();
    for (const cd& d : d_) min_pivot = std::min(min_pivot, std::abs(d));
    min_rel_pivot_ = scale_ > 0.0 ? min_pivot / scale_ : 0.0;
  }

  std::vector<cd> d_, u1_, u2_, l_;
  std::vector<bool> pivot_;
  double scale_ = 0.0;
  double min_rel_pivot_ = 0.0;
};

}  // namespace kbm
