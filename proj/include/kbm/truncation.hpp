#pragma once

// Truncation of infinite ladders (K <= 0) to a symmetric window [-k_max, k_max]
// with a doubling certificate: the tracked branch must not move when the
// window doubles.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "kbm/eig.hpp"
#include "kbm/error.hpp"
#include "kbm/ladder.hpp"

namespace kbm {

struct TruncationPolicy {
  enum class Mode { fixed, adaptive };

  Mode mode = Mode::adaptive;
  /// Window half-width for fixed mode; starting value for adaptive mode
  /// (0 selects default_truncation_k).
  int k_max = 0;
  double tol = 1e-10;
  int k_cap = 4096;
  /// Parameter values x at which the branch shift is measured (adaptive mode).
  std::vector<cd> targets;

  static TruncationPolicy fixed(int k) {
    TruncationPolicy p;
    p.mode = Mode::fixed;
    p.k_max = k;
    return p;
  }
  static TruncationPolicy adaptive(double tol, std::vector<cd> targets = {}) {
    TruncationPolicy p;
    p.mode = Mode::adaptive;
    p.tol = tol;
    p.targets = std::move(targets);
    return p;
  }
};

inline int default_truncation_k(double eta) {
  return std::max(32, static_cast<int>(std::ceil(8.0 * (1.0 + std::sqrt(eta)))));
}

inline CasimirBlock truncated_block(double eta, double K, int k_max) {
  if (k_max < 1) throw Error(ErrorKind::invalid_argument, "truncation: k_max must be >= 1");
  return make_block(eta, K, -k_max, k_max);
}

struct TruncationResult {
  CasimirBlock block;
  /// max |mu_k(x) - mu_2k(x)| over the targets for the returned k.
  double certificate = std::numeric_limits<double>::quiet_NaN();
  std::vector<int> tried;
  bool certified = false;
};

namespace detail {

inline std::vector<cd> branch_values(const CasimirBlock& block, const std::vector<cd>& targets) {
  TrackOptions opts;
  opts.compute_residuals = false;
  BranchTracker tracker(block, ladder_coefficients(block), opts);
  std::vector<std::size_t> order(targets.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(targets[a]) < std::abs(targets[b]);
  });
  std::vector<cd> values(targets.size(), cd(std::numeric_limits<double>::quiet_NaN(), 0.0));
  // Each target gets its own segment from 0 so that complex targets work too.
  for (std::size_t i : order) {
    const EigenBranch br = tracker.track({targets[i]});
    if (!br.complete()) {
      throw Error(ErrorKind::collision, "truncation: branch not separable at a certificate target");
    }
    values[i] = br.last_mu();
  }
  return values;
}

}  // namespace detail

inline TruncationResult truncate_certified(double eta, double K, const TruncationPolicy& policy) {
  if (K > 0.0) throw Error(ErrorKind::invalid_argument, "truncate: finite ladders (K > 0) need no truncation");
  if (!(eta > 0.0)) throw Error(ErrorKind::invalid_argument, "truncate: eta must be > 0");
  TruncationResult out;
  if (policy.mode == TruncationPolicy::Mode::fixed) {
    out.block = truncated_block(eta, K, policy.k_max);
    out.tried.push_back(policy.k_max);
    if (!policy.targets.empty()) {
      const auto a = detail::branch_values(out.block, policy.targets);
      const auto b = detail::branch_values(truncated_block(eta, K, 2 * policy.k_max), policy.targets);
      out.certificate = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) out.certificate = std::max(out.certificate, std::abs(a[i] - b[i]));
      out.certified = out.certificate < policy.tol;
    }
    return out;
  }
  if (policy.targets.empty()) {
    throw Error(ErrorKind::invalid_argument, "truncate: adaptive policy needs target parameters");
  }
  int k = policy.k_max > 0 ? policy.k_max : default_truncation_k(eta);
  auto current = detail::branch_values(truncated_block(eta, K, k), policy.targets);
  while (true) {
    out.tried.push_back(k);
    const auto doubled = detail::branch_values(truncated_block(eta, K, 2 * k), policy.targets);
    double shift = 0.0;
    for (std::size_t i = 0; i < current.size(); ++i) shift = std::max(shift, std::abs(current[i] - doubled[i]));
    out.block = truncated_block(eta, K, k);
    out.certificate = shift;
    if (shift < policy.tol) {
      out.certified = true;
      return out;
    }
    if (2 * k > policy.k_cap) return out;
    k *= 2;
    current = doubled;
  }
}

inline CasimirBlock truncate(double eta, double K, const TruncationPolicy& policy) {
  return truncate_certified(eta, K, policy).block;
}

}  // namespace kbm
