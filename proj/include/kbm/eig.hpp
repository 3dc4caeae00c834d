#pragma once

// Eigenvalue machinery for complex tridiagonal matrices and continuation of
// the eigenvalue branch mu(x) of T(x) = Delta_S + x X that starts at 0.

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "kbm/error.hpp"
#include "kbm/ladder.hpp"
#include "kbm/operator.hpp"
#include "kbm/tridiagonal.hpp"

namespace kbm {

/// det(op - lambda I) = mantissa * 2^exponent, with d/dlambda sharing the exponent.
struct CharPoly {
  cd mantissa{0.0, 0.0};
  cd derivative_mantissa{0.0, 0.0};
  int exponent = 0;

  cd value() const { return {std::ldexp(mantissa.real(), exponent), std::ldexp(mantissa.imag(), exponent)}; }
  cd derivative() const {
    return {std::ldexp(derivative_mantissa.real(), exponent),
            std::ldexp(derivative_mantissa.imag(), exponent)};
  }
  /// p / p', independent of the exponent.
  cd newton_step() const { return mantissa / derivative_mantissa; }
};

namespace detail {

inline double max_abs(cd z) { return std::max(std::abs(z.real()), std::abs(z.imag())); }

inline cd scaled(cd z, int e) { return {std::ldexp(z.real(), e), std::ldexp(z.imag(), e)}; }

/// Rescales a set of recurrence values by a common power of two when they
/// leave [2^-100, 2^100]; returns the exponent that was removed.
template <std::size_t N>
int rebalance(std::array<cd*, N> values) {
  double m = 0.0;
  for (cd* v : values) m = std::max(m, max_abs(*v));
  if (m == 0.0 || !std::isfinite(m)) return 0;
  if (m < 0x1p+100 && m > 0x1p-100) return 0;
  int e = 0;
  std::frexp(m, &e);
  for (cd* v : values) *v = scaled(*v, -e);
  return e;
}

}  // namespace detail

/// Characteristic polynomial by the three-term recurrence
/// p_j = (d_j - lambda) p_{j-1} - sub_{j-1} sup_{j-1} p_{j-2}.
inline CharPoly char_poly(const TridiagonalOperator& op, cd lambda) {
  const int n = op.dim();
  cd p_prev{1.0, 0.0}, q_prev{0.0, 0.0};
  cd p = op.diag[0] - lambda, q{-1.0, 0.0};
  int exponent = 0;
  for (int j = 1; j < n; ++j) {
    const cd c = op.sub[j - 1] * op.sup[j - 1];
    const cd dj = op.diag[j] - lambda;
    const cd p_next = dj * p - c * p_prev;
    const cd q_next = -p + dj * q - c * q_prev;
    p_prev = p;
    q_prev = q;
    p = p_next;
    q = q_next;
    exponent += detail::rebalance<4>({&p, &q, &p_prev, &q_prev});
  }
  return {p, q, exponent};
}

inline constexpr int kDenseMaxDim = 4096;

/// All eigenvalues by a dense nonsymmetric solver, sorted by (re, im).
inline std::vector<cd> eig_dense(const TridiagonalOperator& op) {
  if (op.dim() > kDenseMaxDim) {
    throw Error(ErrorKind::dimension_too_large, "eig_dense: dimension exceeds 4096");
  }
  std::vector<cd> out;
  const Eigen::MatrixXcd dense = op.to_dense();
  if (dense.imag().isZero(0.0)) {
    Eigen::EigenSolver<Eigen::MatrixXd> solver(dense.real(), false);
    if (solver.info() != Eigen::Success) {
      throw Error(ErrorKind::non_convergence, "eig_dense: QR iteration did not converge");
    }
    const auto& ev = solver.eigenvalues();
    out.assign(ev.data(), ev.data() + ev.size());
  } else {
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> solver(dense, false);
    if (solver.info() != Eigen::Success) {
      throw Error(ErrorKind::non_convergence, "eig_dense: QR iteration did not converge");
    }
    const auto& ev = solver.eigenvalues();
    out.assign(ev.data(), ev.data() + ev.size());
  }
  std::sort(out.begin(), out.end(), [](cd a, cd b) {
    return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
  });
  return out;
}

struct InverseIterationResult {
  std::vector<cd> vector;
  double residual = 0.0;
  bool converged = false;
};

inline double eigen_residual(const TridiagonalOperator& op, cd mu, std::span<const cd> v) {
  auto w = op.apply(v);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] -= mu * v[i];
  return norm2(w);
}

inline void fix_phase(std::vector<cd>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (std::abs(v[i]) > std::abs(v[best])) best = i;
  }
  if (std::abs(v[best]) == 0.0) return;
  const cd phase = std::conj(v[best]) / std::abs(v[best]);
  for (auto& z : v) z *= phase;
  v[best] = cd(v[best].real(), 0.0);
}

inline InverseIterationResult inverse_iteration(const TridiagonalOperator& op, cd mu,
                                                std::uint64_t seed, int max_iter = 25) {
  const auto n = static_cast<std::size_t>(op.dim());
  const double tol = 1e-10 * op.norm_inf();
  TridiagonalLU lu(op, mu);
  lu.regularize();

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  std::vector<cd> v(n);
  for (auto& z : v) {
    const double re = 1.0 + 0.5 * uni(rng);
    z = cd(re, 0.5 * uni(rng));
  }

  InverseIterationResult out;
  for (int it = 0; it < max_iter; ++it) {
    lu.solve_in_place(v);
    const double nv = norm2(v);
    if (!(nv > 0.0) || !std::isfinite(nv)) break;
    for (auto& z : v) z /= nv;
    out.residual = eigen_residual(op, mu, v);
    if (out.residual <= tol && it >= 1) {
      out.converged = true;
      break;
    }
  }
  fix_phase(v);
  out.vector = std::move(v);
  return out;
}

/// Unit eigenvector for a simple eigenvalue mu; throws when mu is multiple
/// (two independent starts disagree) or inverse iteration fails.
inline std::vector<cd> eigvec(const TridiagonalOperator& op, cd mu) {
  auto first = inverse_iteration(op, mu, 1);
  if (!first.converged) {
    throw Error(ErrorKind::non_convergence,
                "eigvec: inverse iteration did not converge (defective or clustered eigenvalue)");
  }
  auto second = inverse_iteration(op, mu, 2);
  const double overlap = std::abs(inner(first.vector, second.vector));
  if (!second.converged || overlap < 1.0 - 1e-8) {
    throw Error(ErrorKind::multiplicity, "eigvec: eigenvalue is not simple");
  }
  return first.vector;
}

enum class BranchStatus { complete, collision, non_convergence };

inline std::string_view to_string(BranchStatus s) {
  switch (s) {
    case BranchStatus::complete: return "complete";
    case BranchStatus::collision: return "collision";
    case BranchStatus::non_convergence: return "non_convergence";
  }
  return "unknown";
}

struct EigenBranch {
  CasimirBlock block;
  std::vector<cd> x_samples;
  std::vector<cd> mu_values;
  std::vector<double> residuals;
  std::vector<double> gap_to_rest;
  std::vector<bool> simple;
  /// |mu - nearest dense eigenvalue| where a dense spot check ran, else NaN.
  std::vector<double> oracle_distance;
  /// Sample index at which each requested waypoint was reached.
  std::vector<std::size_t> waypoint_samples;
  BranchStatus status = BranchStatus::complete;
  std::string message;

  cd last_x() const { return x_samples.back(); }
  cd last_mu() const { return mu_values.back(); }
  bool complete() const { return status == BranchStatus::complete; }
};

struct TrackOptions {
  /// Minimum number of steps over the whole path.
  int steps = 16;
  /// Absolute cap on the step length; 0 derives it from `steps`.
  double max_step = 0.0;
  /// Predicted branch motion per step is kept below this fraction of the gap.
  double step_safety = 0.1;
  /// Smallest step, relative to max(1, |x|), before giving up.
  double min_step = 1e-12;
  int newton_max = 40;
  /// Dense spot check cadence; 0 selects 1 for dim <= 512 and 8 otherwise.
  int dense_every = 0;
  bool compute_residuals = true;
};

inline double collision_threshold(cd mu) { return 1e-6 * (1.0 + std::abs(mu)); }

/// Continues the eigenvalue of T(x) emanating from mu(0) = 0 along a path of
/// waypoints starting at x = 0.
class BranchTracker {
 public:
  BranchTracker(CasimirBlock block, LadderCoefficients coeffs, TrackOptions options = {})
      : block_(block), coeffs_(std::move(coeffs)), options_(options) {
    detail::check_consistent(block_, coeffs_);
    const int n = block_.dim();
    diag_.resize(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
      const double k = static_cast<double>(block_.k_min + j);
      diag_[j] = k * k;
    }
    prod_.resize(coeffs_.a.size());
    for (std::size_t j = 0; j < prod_.size(); ++j) prod_[j] = -coeffs_.a[j] * coeffs_.a[j];
    dense_every_ = options_.dense_every > 0 ? options_.dense_every : (n <= 512 ? 1 : 8);
  }

  const CasimirBlock& block() const { return block_; }
  const LadderCoefficients& coefficients() const { return coeffs_; }

  TridiagonalOperator op(cd x) const { return assemble_T(block_, coeffs_, x); }

  struct FamilyPoly {
    cd p, p_lambda, p_x;
  };

  /// det(T(x) - lambda) and its partial derivatives, all sharing one scale.
  FamilyPoly family_poly(cd x, cd lambda) const {
    const std::size_t n = diag_.size();
    const cd x2 = x * x;
    cd p_prev{1.0, 0.0}, l_prev{}, x_prev{};
    cd p = diag_[0] - lambda, pl{-1.0, 0.0}, px{};
    for (std::size_t j = 1; j < n; ++j) {
      const double c = prod_[j - 1];
      const cd dj = diag_[j] - lambda;
      const cd p_next = dj * p - x2 * c * p_prev;
      const cd l_next = -p + dj * pl - x2 * c * l_prev;
      const cd x_next = dj * px - x2 * c * x_prev - 2.0 * x * c * p_prev;
      p_prev = p;
      l_prev = pl;
      x_prev = px;
      p = p_next;
      pl = l_next;
      px = x_next;
      detail::rebalance<6>({&p, &pl, &px, &p_prev, &l_prev, &x_prev});
    }
    return {p, pl, px};
  }

  /// Newton on the characteristic polynomial at fixed x.
  std::optional<cd> newton(cd x, cd guess, int* iterations = nullptr, int max_iter = 0) const {
    if (max_iter <= 0) max_iter = options_.newton_max;
    cd lambda = guess;
    double prev = std::numeric_limits<double>::infinity();
    for (int it = 0; it < max_iter; ++it) {
      const FamilyPoly f = family_poly(x, lambda);
      if (f.p == cd{}) {
        if (iterations) *iterations = it;
        return lambda;
      }
      const cd step = f.p / f.p_lambda;
      if (!std::isfinite(step.real()) || !std::isfinite(step.imag())) return std::nullopt;
      lambda -= step;
      const double s = std::abs(step);
      const double scale = std::abs(lambda);
      if (s <= 1e-14 * scale || s == 0.0) {
        if (iterations) *iterations = it + 1;
        return lambda;
      }
      // Round-off floor: no further progress at a level already accurate.
      if (it >= 3 && s > 0.5 * prev && s <= 1e-11 * std::max(scale, 1e-300)) {
        if (iterations) *iterations = it + 1;
        return lambda;
      }
      prev = s;
    }
    return std::nullopt;
  }

  /// d mu / dx from the implicit function theorem on p(x, mu) = 0.
  cd derivative(cd x, cd mu) const {
    const FamilyPoly f = family_poly(x, mu);
    if (f.p_lambda == cd{}) return {std::numeric_limits<double>::infinity(), 0.0};
    return -f.p_x / f.p_lambda;
  }

  struct SpotCheck {
    double gap = std::numeric_limits<double>::infinity();
    double oracle_distance = 0.0;
  };

  SpotCheck spot_check(cd x, cd mu) const {
    SpotCheck out;
    if (block_.dim() == 1) {
      out.oracle_distance = std::abs(op(x).diag[0] - mu);
      return out;
    }
    const auto ev = eig_dense(op(x));
    std::size_t nearest = 0;
    for (std::size_t i = 1; i < ev.size(); ++i) {
      if (std::abs(ev[i] - mu) < std::abs(ev[nearest] - mu)) nearest = i;
    }
    out.oracle_distance = std::abs(ev[nearest] - mu);
    for (std::size_t i = 0; i < ev.size(); ++i) {
      if (i != nearest) out.gap = std::min(out.gap, std::abs(ev[i] - mu));
    }
    return out;
  }

  EigenBranch track(const std::vector<cd>& waypoints) const {
    return track_from(cd{}, cd{}, waypoints);
  }

  /// Continues from a known eigenvalue mu0 of T(x0) through the waypoints.
  EigenBranch track_from(cd x0, cd mu0, const std::vector<cd>& waypoints) const {
    EigenBranch br;
    br.block = block_;
    double path_length = 0.0;
    cd prev = x0;
    for (const cd& w : waypoints) {
      path_length += std::abs(w - prev);
      prev = w;
    }
    double h_max = options_.max_step > 0.0 ? options_.max_step
                   : path_length > 0.0   ? path_length / std::max(options_.steps, 1)
                                         : std::numeric_limits<double>::infinity();

    cd x = x0;
    cd mu = mu0;
    SpotCheck check = spot_check(x, mu);
    std::size_t since_check = 0;
    record(br, x, mu, check, true);

    double h_hint = h_max;
    for (const cd& target : waypoints) {
      while (x != target) {
        const cd delta = target - x;
        const double remaining = std::abs(delta);
        const cd dir = delta / remaining;
        const cd dmu = derivative(x, mu);
        double h = std::min({remaining, h_max, h_hint});
        const double rate = std::abs(dmu);
        if (rate > 0.0 && std::isfinite(check.gap)) {
          h = std::min(h, options_.step_safety * check.gap / rate);
        }
        if (!std::isfinite(rate)) h = 0.0;
        const double h_min =
            std::min(options_.min_step * std::max(1.0, std::abs(target)), remaining);
        h = std::max(h, h_min);

        bool accepted = false;
        while (h >= h_min) {
          const bool final_step = h >= remaining * (1.0 - 1e-12);
          const cd x_new = final_step ? target : x + h * dir;
          const cd predicted = mu + dmu * (x_new - x);
          int iters = 0;
          const auto corrected = newton(x_new, predicted, &iters);
          const double jump_limit =
              std::isfinite(check.gap) ? 0.25 * check.gap : std::numeric_limits<double>::infinity();
          if (corrected && std::abs(*corrected - predicted) <= jump_limit) {
            x = x_new;
            mu = *corrected;
            accepted = true;
            h_hint = iters > 8 ? 0.5 * h : 2.0 * h;
            break;
          }
          h *= 0.5;
        }
        if (!accepted) {
          const double gap_scale = 1e-3 * (1.0 + std::abs(mu));
          br.status = check.gap < gap_scale ? BranchStatus::collision : BranchStatus::non_convergence;
          br.message = br.status == BranchStatus::collision
                           ? "branch ceases to be separable (step underflow near a multiple eigenvalue)"
                           : "Newton corrector failed to converge";
          return br;
        }
        ++since_check;
        const bool due = since_check >= static_cast<std::size_t>(dense_every_) || x == target;
        if (due) {
          check = spot_check(x, mu);
          since_check = 0;
        }
        record(br, x, mu, check, due);
        if (check.gap <= collision_threshold(mu)) {
          br.status = BranchStatus::collision;
          br.message = "gap to the rest of the spectrum below collision threshold";
          return br;
        }
      }
      br.waypoint_samples.push_back(br.x_samples.size() - 1);
    }
    return br;
  }

 private:
  void record(EigenBranch& br, cd x, cd mu, const SpotCheck& check, bool checked) const {
    br.x_samples.push_back(x);
    br.mu_values.push_back(mu);
    br.gap_to_rest.push_back(check.gap);
    br.simple.push_back(check.gap > collision_threshold(mu));
    br.oracle_distance.push_back(checked ? check.oracle_distance
                                         : std::numeric_limits<double>::quiet_NaN());
    if (options_.compute_residuals) {
      br.residuals.push_back(inverse_iteration(op(x), mu, 7).residual);
    } else {
      br.residuals.push_back(std::numeric_limits<double>::quiet_NaN());
    }
  }

  CasimirBlock block_;
  LadderCoefficients coeffs_;
  TrackOptions options_;
  std::vector<double> diag_;
  std::vector<double> prod_;
  int dense_every_ = 1;
};

/// Branch of T(x) from mu(0) = 0 along the segment [0, x_target].
inline EigenBranch track_branch(const CasimirBlock& block, const LadderCoefficients& coeffs,
                                cd x_target, int steps, TrackOptions options = {}) {
  options.steps = steps;
  BranchTracker tracker(block, coeffs, options);
  if (x_target == cd{}) return tracker.track({});
  return tracker.track({x_target});
}

}  // namespace kbm
