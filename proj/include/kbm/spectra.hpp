#pragma once

// Surface-level orchestration: base Laplace spectra of model surfaces,
// gamma sweeps of lambda_eta(gamma) = (gamma^2 / 2) mu(-2 / gamma) and the
// mixing-rate report built on the smallest nonzero eta.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kbm/eig.hpp"
#include "kbm/error.hpp"
#include "kbm/ladder.hpp"
#include "kbm/truncation.hpp"

namespace kbm {

enum class SpectrumSource { sphere, flat_torus, custom };

inline std::string_view to_string(SpectrumSource s) {
  switch (s) {
    case SpectrumSource::sphere: return "sphere";
    case SpectrumSource::flat_torus: return "flat_torus";
    case SpectrumSource::custom: return "custom";
  }
  return "unknown";
}

struct SpectrumEntry {
  double eta = 0.0;
  int multiplicity = 1;
  std::string label;
};

struct SurfaceSpectrum {
  double curvature = 0.0;
  std::vector<SpectrumEntry> entries;
  SpectrumSource source = SpectrumSource::custom;

  /// Smallest nonzero eta, if any.
  std::optional<double> spectral_gap() const {
    for (const auto& e : entries) {
      if (e.eta > 0.0) return e.eta;
    }
    return std::nullopt;
  }
};

inline SurfaceSpectrum sphere_spectrum(double K, int l_max) {
  if (!(K > 0.0) || !std::isfinite(K)) throw Error(ErrorKind::invalid_argument, "sphere_spectrum: K must be > 0");
  if (l_max < 0) throw Error(ErrorKind::invalid_argument, "sphere_spectrum: l_max must be >= 0");
  SurfaceSpectrum s{K, {}, SpectrumSource::sphere};
  for (int l = 0; l <= l_max; ++l) {
    s.entries.push_back({K * l * (l + 1), 2 * l + 1, "l=" + std::to_string(l)});
  }
  return s;
}

/// Flat square torus of side L: eta = (2 pi / L)^2 (m^2 + n^2).
inline SurfaceSpectrum torus_spectrum(double L, double eta_cap) {
  if (!(L > 0.0) || !std::isfinite(L)) throw Error(ErrorKind::invalid_argument, "torus_spectrum: L must be > 0");
  if (!(eta_cap >= 0.0) || !std::isfinite(eta_cap)) {
    throw Error(ErrorKind::invalid_argument, "torus_spectrum: eta_cap must be >= 0");
  }
  const double scale = std::pow(2.0 * std::numbers::pi / L, 2);
  const long bound = static_cast<long>(std::floor(std::sqrt(eta_cap / scale))) + 1;
  std::map<long, int> counts;
  for (long m = -bound; m <= bound; ++m) {
    for (long n = -bound; n <= bound; ++n) {
      const long norm = m * m + n * n;
      if (scale * static_cast<double>(norm) <= eta_cap * (1.0 + 1e-12)) ++counts[norm];
    }
  }
  SurfaceSpectrum s{0.0, {}, SpectrumSource::flat_torus};
  for (const auto& [norm, mult] : counts) {
    s.entries.push_back({scale * static_cast<double>(norm), mult, "|n|^2=" + std::to_string(norm)});
  }
  return s;
}

inline SurfaceSpectrum custom_spectrum(double K, std::vector<std::pair<double, int>> eta_list) {
  if (!std::isfinite(K)) throw Error(ErrorKind::validation, "custom_spectrum: curvature must be finite");
  SurfaceSpectrum s{K, {}, SpectrumSource::custom};
  bool has_zero = false;
  for (const auto& [eta, mult] : eta_list) {
    if (!(eta >= 0.0) || !std::isfinite(eta)) {
      throw Error(ErrorKind::validation, "custom_spectrum: eta must be finite and >= 0");
    }
    if (mult < 1) throw Error(ErrorKind::validation, "custom_spectrum: multiplicity must be >= 1");
    if (eta == 0.0) has_zero = true;
  }
  if (!has_zero) throw Error(ErrorKind::validation, "custom_spectrum: zero mode missing");
  std::sort(eta_list.begin(), eta_list.end());
  for (std::size_t i = 0; i < eta_list.size(); ++i) {
    const auto& [eta, mult] = eta_list[i];
    if (!s.entries.empty() && s.entries.back().eta == eta) {
      s.entries.back().multiplicity += mult;
      continue;
    }
    s.entries.push_back({eta, mult, "custom[" + std::to_string(s.entries.size()) + "]"});
  }
  return s;
}

enum class RowStatus { ok, detour, failed };

inline std::string_view to_string(RowStatus s) {
  switch (s) {
    case RowStatus::ok: return "ok";
    case RowStatus::detour: return "detour";
    case RowStatus::failed: return "failed";
  }
  return "unknown";
}

struct GammaRow {
  double gamma = 0.0;
  cd lambda{};
  double abs_error = 0.0;
  bool simple = false;
  int k_max = 0;
  double residual = 0.0;
  /// |lambda(k_max) - lambda(2 k_max)|; 0 for finite ladders.
  double certificate = 0.0;
  RowStatus status = RowStatus::ok;
  std::string note;
};

struct GammaTable {
  double eta = 0.0;
  double curvature = 0.0;
  int multiplicity = 1;
  std::vector<GammaRow> rows;
  /// 2 / |x| at the first loss of simplicity along the real parameter axis.
  std::optional<double> empirical_r;
  std::optional<double> x_collision;
  int k_max = 0;
  bool truncated = false;
  /// Max certificate over rows with gamma >= tail_start().
  double certificate = 0.0;
  bool certified = true;
  std::vector<int> k_tried;

  double tail_start() const { return 4.0 * (1.0 + std::sqrt(eta)); }
};

struct SweepOptions {
  TrackOptions track;
};

namespace detail {

struct RowValue {
  cd mu{};
  bool simple = false;
  double residual = 0.0;
  RowStatus status = RowStatus::ok;
  std::string note;
};

/// Anchors must be comfortably separated before a detour may start there.
inline bool safe_anchor(const EigenBranch& br) {
  return br.gap_to_rest.back() >= 1e-2 * (1.0 + std::abs(br.last_mu()));
}

struct BlockSweep {
  std::vector<RowValue> rows;
  std::optional<double> x_collision;
};

/// Branch values at x = -2 / gamma for every grid point, continuing along
/// the real axis in order of increasing |x|. Past a collision the path
/// detours through the upper half x-plane from the last well-separated
/// anchor, so later rows carry one analytic continuation of the branch.
inline BlockSweep sweep_block(const CasimirBlock& block, const std::vector<double>& grid,
                              const SweepOptions& options) {
  std::vector<std::size_t> order(grid.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = grid.size() - 1 - i;
  std::vector<cd> waypoints;
  for (std::size_t i : order) waypoints.push_back(cd(-2.0 / grid[i], 0.0));

  TrackOptions track = options.track;
  if (track.max_step <= 0.0) {
    track.max_step = std::abs(waypoints.back()) / std::max(track.steps, 1);
  }
  BranchTracker tracker(block, ladder_coefficients(block), track);

  BlockSweep out;
  out.rows.resize(grid.size());
  cd anchor_x{}, anchor_mu{};
  bool passed = false;

  auto fill_row = [&](RowValue& row, const EigenBranch& br) {
    row.mu = br.last_mu();
    row.simple = br.simple.back();
    row.residual = br.residuals.back();
    row.status = passed ? RowStatus::detour : RowStatus::ok;
  };

  for (std::size_t w = 0; w < waypoints.size(); ++w) {
    const cd target = waypoints[w];
    RowValue& row = out.rows[order[w]];
    EigenBranch br = tracker.track_from(anchor_x, anchor_mu, {target});
    if (!br.complete()) {
      if (!passed) {
        out.x_collision = std::abs(br.last_x());
        passed = true;
      }
      const cd mid = 0.5 * (anchor_x + target) + cd(0.0, 0.5 * std::abs(target - anchor_x));
      br = tracker.track_from(anchor_x, anchor_mu, {mid, target});
      row.note = "continued around a collision through the complex x-plane";
    }
    if (br.complete()) {
      fill_row(row, br);
      if (safe_anchor(br)) {
        anchor_x = target;
        anchor_mu = br.last_mu();
      }
      continue;
    }
    if (std::abs(br.last_x() - target) <= 1e-6 * std::abs(target)) {
      // The target sits on a branch point: finish with Newton at the target.
      const auto polished = tracker.newton(target, br.last_mu(), nullptr, 400);
      row.mu = polished ? *polished : br.last_mu();
      row.simple = false;
      row.residual = inverse_iteration(tracker.op(target), row.mu, 7).residual;
      row.status = RowStatus::detour;
      row.note = "parameter sits at a multiple eigenvalue";
      continue;
    }
    row.status = RowStatus::failed;
    row.simple = false;
    row.mu = cd(std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN());
    row.residual = std::numeric_limits<double>::quiet_NaN();
    row.note = "branch lost: " + br.message;
  }
  return out;
}

inline void validate_grid(const std::vector<double>& grid) {
  if (grid.empty()) throw Error(ErrorKind::invalid_argument, "gamma grid is empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] > 0.0) || !std::isfinite(grid[i])) {
      throw Error(ErrorKind::invalid_argument, "gamma grid must be positive");
    }
    if (i > 0 && !(grid[i] > grid[i - 1])) {
      throw Error(ErrorKind::invalid_argument, "gamma grid must be strictly ascending");
    }
  }
}

}  // namespace detail

/// Logarithmic grid with `points` values from 10^log_start to 10^log_end.
inline std::vector<double> log_grid(double log_start, double log_end, int points) {
  if (points < 2) throw Error(ErrorKind::invalid_argument, "log_grid: points must be >= 2");
  if (!(log_end > log_start)) throw Error(ErrorKind::invalid_argument, "log_grid: empty range");
  std::vector<double> g(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i) {
    g[i] = std::pow(10.0, log_start + (log_end - log_start) * i / (points - 1));
  }
  return g;
}

/// Default grid: 25 points per decade from gamma = 1 to gamma = 1e4.
inline std::vector<double> default_gamma_grid() { return log_grid(0.0, 4.0, 101); }

inline GammaTable gamma_sweep(double eta, double K, const std::vector<double>& grid,
                              const TruncationPolicy& policy, const SweepOptions& options = {}) {
  detail::validate_grid(grid);
  if (!(eta >= 0.0)) throw Error(ErrorKind::invalid_argument, "gamma_sweep: eta must be >= 0");
  GammaTable table;
  table.eta = eta;
  table.curvature = K;
  table.rows.resize(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) table.rows[i].gamma = grid[i];

  // The trivial block carries the zero branch for every gamma.
  if (eta == 0.0) {
    for (auto& row : table.rows) {
      row.lambda = 0.0;
      row.abs_error = 0.0;
      row.simple = true;
      row.k_max = 0;
    }
    return table;
  }

  auto fill = [&](const detail::BlockSweep& sweep, int k_max) {
    for (std::size_t i = 0; i < grid.size(); ++i) {
      GammaRow& row = table.rows[i];
      const auto& v = sweep.rows[i];
      row.lambda = 0.5 * grid[i] * grid[i] * v.mu;
      row.abs_error = std::abs(row.lambda - eta);
      row.simple = v.simple;
      row.residual = v.residual;
      row.status = v.status;
      row.note = v.note;
      row.k_max = k_max;
    }
    table.x_collision = sweep.x_collision;
    table.empirical_r.reset();
    if (sweep.x_collision && *sweep.x_collision > 0.0) table.empirical_r = 2.0 / *sweep.x_collision;
    table.k_max = k_max;
  };

  if (K > 0.0) {
    const CasimirBlock block = finite_block(eta, K);
    fill(detail::sweep_block(block, grid, options), block.k_max);
    return table;
  }

  table.truncated = true;
  const double tail = table.tail_start();
  int k = policy.k_max > 0 ? policy.k_max : default_truncation_k(eta);
  if (policy.mode == TruncationPolicy::Mode::fixed && policy.k_max < 1) {
    throw Error(ErrorKind::invalid_argument, "gamma_sweep: fixed truncation needs k_max >= 1");
  }
  auto base = detail::sweep_block(truncated_block(eta, K, k), grid, options);
  while (true) {
    table.k_tried.push_back(k);
    const auto doubled = detail::sweep_block(truncated_block(eta, K, 2 * k), grid, options);
    double worst = 0.0;
    bool finite = true;
    std::vector<double> shifts(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const double scale = 0.5 * grid[i] * grid[i];
      shifts[i] = scale * std::abs(base.rows[i].mu - doubled.rows[i].mu);
      if (grid[i] >= tail) {
        if (!std::isfinite(shifts[i])) finite = false;
        else worst = std::max(worst, shifts[i]);
      }
    }
    const bool ok = finite && worst < policy.tol;
    const bool stop = policy.mode == TruncationPolicy::Mode::fixed || ok || 2 * k > policy.k_cap;
    if (stop) {
      fill(base, k);
      for (std::size_t i = 0; i < grid.size(); ++i) table.rows[i].certificate = shifts[i];
      table.certificate = finite ? worst : std::numeric_limits<double>::infinity();
      table.certified = ok;
      return table;
    }
    k *= 2;
    base = doubled;
  }
}

struct ConvergenceVerdict {
  double tail_start = 0.0;
  std::size_t tail_points = 0;
  double max_tail_error = 0.0;
  double error_at_gamma_max = 0.0;
  bool monotone_tail = true;
  /// Least-squares slope of log |lambda - eta| against log gamma on the tail.
  double fitted_rate = std::numeric_limits<double>::quiet_NaN();
};

inline double fit_loglog_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!(xs[i] > 0.0) || !(ys[i] > 0.0)) continue;
    const double lx = std::log(xs[i]), ly = std::log(ys[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++n;
  }
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  const double dn = static_cast<double>(n);
  const double denom = dn * sxx - sx * sx;
  if (denom == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return (dn * sxy - sx * sy) / denom;
}

inline ConvergenceVerdict convergence_verdict(const GammaTable& table) {
  ConvergenceVerdict v;
  v.tail_start = table.tail_start();
  std::vector<double> gs, errs;
  for (const auto& row : table.rows) {
    if (row.gamma < v.tail_start) continue;
    if (!gs.empty() && !(row.abs_error <= errs.back())) v.monotone_tail = false;
    gs.push_back(row.gamma);
    errs.push_back(row.abs_error);
    v.max_tail_error = std::max(v.max_tail_error, row.abs_error);
  }
  v.tail_points = gs.size();
  if (!table.rows.empty()) v.error_at_gamma_max = table.rows.back().abs_error;
  v.fitted_rate = fit_loglog_slope(gs, errs);
  return v;
}

struct MixingRow {
  double gamma = 0.0;
  double re_lambda_eta1 = 0.0;
  double excess = 0.0;
  /// min over computed eta > 0 of Re lambda_eta(gamma).
  double gap_bound = 0.0;
};

struct MixingReport {
  double eta1 = 0.0;
  int multiplicity = 0;
  std::vector<MixingRow> rows;
  double fitted_rate = std::numeric_limits<double>::quiet_NaN();
  bool approaches_from_above = true;
  double limit_estimate = 0.0;
};

inline MixingReport mixing_report(const SurfaceSpectrum& spectrum, const std::vector<GammaTable>& tables) {
  const auto gap = spectrum.spectral_gap();
  if (!gap) throw Error(ErrorKind::validation, "mixing_report: spectrum has no nonzero eigenvalue");
  const double eta1 = *gap;
  const GammaTable* t1 = nullptr;
  for (const auto& t : tables) {
    if (std::abs(t.eta - eta1) <= 1e-12 * (1.0 + eta1)) t1 = &t;
  }
  if (!t1) throw Error(ErrorKind::validation, "mixing_report: no gamma table for the spectral gap eta_1");

  MixingReport rep;
  rep.eta1 = eta1;
  for (const auto& e : spectrum.entries) {
    if (e.eta == eta1) rep.multiplicity = e.multiplicity;
  }
  std::vector<double> gs, excess;
  for (const auto& row : t1->rows) {
    MixingRow m;
    m.gamma = row.gamma;
    m.re_lambda_eta1 = row.lambda.real();
    m.excess = m.re_lambda_eta1 - eta1;
    m.gap_bound = m.re_lambda_eta1;
    for (const auto& t : tables) {
      if (!(t.eta > 0.0)) continue;
      for (const auto& r : t.rows) {
        if (r.gamma == row.gamma && std::isfinite(r.lambda.real())) {
          m.gap_bound = std::min(m.gap_bound, r.lambda.real());
        }
      }
    }
    if (row.gamma >= t1->tail_start()) {
      gs.push_back(row.gamma);
      excess.push_back(std::abs(m.excess));
      if (!(m.excess > 0.0)) rep.approaches_from_above = false;
    }
    rep.rows.push_back(m);
  }
  rep.fitted_rate = fit_loglog_slope(gs, excess);
  if (!rep.rows.empty()) rep.limit_estimate = rep.rows.back().re_lambda_eta1;
  return rep;
}

}  // namespace kbm
