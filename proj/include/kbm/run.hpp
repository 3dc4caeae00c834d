#pragma once

// Run configuration and the end-to-end driver behind `kbm_lab run`: one
// gamma sweep per eta of the surface spectrum, followed by serialization of
// tables, summaries, perturbation coefficients, diagnostics and plot data.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "kbm/eig.hpp"
#include "kbm/error.hpp"
#include "kbm/ladder.hpp"
#include "kbm/operator.hpp"
#include "kbm/perturb.hpp"
#include "kbm/spectra.hpp"
#include "kbm/truncation.hpp"

namespace kbm {

using json = nlohmann::ordered_json;

struct SurfaceConfig {
  std::string type = "sphere";
  double K = 1.0;
  int l_max = 2;
  double L = 2.0 * std::numbers::pi;
  double eta_cap = 2.5;
  /// Eigenvalue list for `custom` surfaces: .json or whitespace-separated text.
  std::string path;
};

struct GridConfig {
  double log_start = 0.0;
  double log_end = 4.0;
  int points = 101;
  /// Explicit grid; overrides the logarithmic one when non-empty.
  std::vector<double> values;

  std::vector<double> grid() const { return values.empty() ? log_grid(log_start, log_end, points) : values; }
};

struct TruncationConfig {
  std::string mode = "adaptive";
  int k_max = 0;
  double tol = 1e-10;
  int k_cap = 4096;

  TruncationPolicy policy() const {
    TruncationPolicy p = mode == "fixed" ? TruncationPolicy::fixed(k_max) : TruncationPolicy::adaptive(tol);
    p.k_max = k_max;
    p.tol = tol;
    p.k_cap = k_cap;
    return p;
  }
};

struct OutputConfig {
  std::vector<std::string> formats{"csv", "json"};
  std::string directory = "kbm_out";

  bool wants(const std::string& f) const { return std::find(formats.begin(), formats.end(), f) != formats.end(); }
};

inline const std::vector<std::string>& known_checks() {
  static const std::vector<std::string> c{"casimir", "accretivity", "remark", "oracle"};
  return c;
}

struct RunConfig {
  SurfaceConfig surface;
  GridConfig gamma_grid;
  TruncationConfig truncation;
  Contour contour;
  OutputConfig outputs;
  std::uint64_t seed = 1;
  std::vector<std::string> checks = known_checks();
  int jobs = 1;
  /// Directory against which a relative custom spectrum path is resolved.
  std::string base_dir;

  void validate() const;
  static RunConfig from_json(const json& j, const std::string& base_dir = {});
  json to_json() const;
};

namespace detail {

inline void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return key == k; })) {
      throw Error(ErrorKind::validation, "config: unknown key '" + key + "' in " + where);
    }
  }
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::validation, std::string("config: bad value for '") + key + "': " + e.what());
  }
}

}  // namespace detail

inline RunConfig RunConfig::from_json(const json& j, const std::string& base_dir) {
  if (!j.is_object()) throw Error(ErrorKind::validation, "config: top level must be an object");
  detail::reject_unknown(j, {"surface", "gamma_grid", "truncation", "contour", "outputs", "seed", "checks", "jobs"},
                         "config");
  RunConfig c;
  c.base_dir = base_dir;
  if (j.contains("surface")) {
    const auto& s = j["surface"];
    detail::reject_unknown(s, {"type", "K", "l_max", "L", "eta_cap", "path"}, "surface");
    detail::read(s, "type", c.surface.type);
    if (c.surface.type == "torus") c.surface.K = 0.0;
    if (c.surface.type == "custom") c.surface.K = -1.0;
    detail::read(s, "K", c.surface.K);
    detail::read(s, "l_max", c.surface.l_max);
    detail::read(s, "L", c.surface.L);
    detail::read(s, "eta_cap", c.surface.eta_cap);
    detail::read(s, "path", c.surface.path);
  }
  if (j.contains("gamma_grid")) {
    const auto& g = j["gamma_grid"];
    detail::reject_unknown(g, {"log_start", "log_end", "points", "values"}, "gamma_grid");
    detail::read(g, "log_start", c.gamma_grid.log_start);
    detail::read(g, "log_end", c.gamma_grid.log_end);
    detail::read(g, "points", c.gamma_grid.points);
    detail::read(g, "values", c.gamma_grid.values);
  }
  if (j.contains("truncation")) {
    const auto& t = j["truncation"];
    detail::reject_unknown(t, {"mode", "k_max", "tol", "k_cap"}, "truncation");
    detail::read(t, "mode", c.truncation.mode);
    detail::read(t, "k_max", c.truncation.k_max);
    detail::read(t, "tol", c.truncation.tol);
    detail::read(t, "k_cap", c.truncation.k_cap);
  }
  if (j.contains("contour")) {
    const auto& t = j["contour"];
    detail::reject_unknown(t, {"radius", "nodes"}, "contour");
    detail::read(t, "radius", c.contour.radius);
    detail::read(t, "nodes", c.contour.nodes);
  }
  if (j.contains("outputs")) {
    const auto& o = j["outputs"];
    detail::reject_unknown(o, {"formats", "directory"}, "outputs");
    detail::read(o, "formats", c.outputs.formats);
    detail::read(o, "directory", c.outputs.directory);
  }
  detail::read(j, "seed", c.seed);
  detail::read(j, "checks", c.checks);
  detail::read(j, "jobs", c.jobs);
  c.validate();
  return c;
}

inline void RunConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorKind::validation, "config: " + m); };
  const auto& s = surface;
  if (s.type == "sphere") {
    if (!(s.K > 0.0) || !std::isfinite(s.K)) fail("sphere needs K > 0");
    if (s.l_max < 0) fail("sphere needs l_max >= 0");
  } else if (s.type == "torus") {
    if (!(s.L > 0.0) || !std::isfinite(s.L)) fail("torus needs L > 0");
    if (!(s.eta_cap >= 0.0) || !std::isfinite(s.eta_cap)) fail("torus needs eta_cap >= 0");
  } else if (s.type == "custom") {
    if (s.path.empty()) fail("custom surface needs a spectrum path");
    if (!std::isfinite(s.K)) fail("custom surface needs finite K");
  } else {
    fail("surface type must be sphere, torus or custom");
  }
  if (gamma_grid.values.empty()) {
    if (gamma_grid.points < 2) fail("gamma_grid.points must be >= 2");
    if (!(gamma_grid.log_end > gamma_grid.log_start)) fail("gamma_grid needs log_end > log_start");
  } else {
    for (std::size_t i = 0; i < gamma_grid.values.size(); ++i) {
      if (!(gamma_grid.values[i] > 0.0) || !std::isfinite(gamma_grid.values[i])) fail("gamma values must be > 0");
      if (i > 0 && !(gamma_grid.values[i] > gamma_grid.values[i - 1])) fail("gamma values must ascend");
    }
  }
  if (truncation.mode == "fixed") {
    if (truncation.k_max < 1) fail("fixed truncation needs k_max >= 1");
  } else if (truncation.mode == "adaptive") {
    if (!(truncation.tol > 0.0)) fail("adaptive truncation needs tol > 0");
    if (truncation.k_max < 0) fail("truncation.k_max must be >= 0");
  } else {
    fail("truncation.mode must be fixed or adaptive");
  }
  if (truncation.k_cap < 1) fail("truncation.k_cap must be >= 1");
  if (!(contour.radius > 0.0 && contour.radius < 1.0)) fail("contour.radius must lie in (0, 1)");
  if (contour.nodes < 8) fail("contour.nodes must be >= 8");
  if (outputs.formats.empty()) fail("outputs.formats must not be empty");
  for (const auto& f : outputs.formats) {
    if (f != "csv" && f != "json") fail("unknown output format '" + f + "'");
  }
  if (outputs.directory.empty()) fail("outputs.directory must not be empty");
  for (const auto& c : checks) {
    if (std::find(known_checks().begin(), known_checks().end(), c) == known_checks().end()) {
      fail("unknown check '" + c + "'");
    }
  }
  if (jobs < 1) fail("jobs must be >= 1");
}

inline json RunConfig::to_json() const {
  json j;
  j["surface"] = {{"type", surface.type}, {"K", surface.K}};
  if (surface.type == "sphere") j["surface"]["l_max"] = surface.l_max;
  if (surface.type == "torus") {
    j["surface"]["L"] = surface.L;
    j["surface"]["eta_cap"] = surface.eta_cap;
  }
  if (surface.type == "custom") j["surface"]["path"] = surface.path;
  if (gamma_grid.values.empty()) {
    j["gamma_grid"] = {{"log_start", gamma_grid.log_start}, {"log_end", gamma_grid.log_end},
                       {"points", gamma_grid.points}};
  } else {
    j["gamma_grid"] = {{"values", gamma_grid.values}};
  }
  j["truncation"] = {{"mode", truncation.mode}, {"k_max", truncation.k_max}, {"tol", truncation.tol},
                     {"k_cap", truncation.k_cap}};
  j["contour"] = {{"radius", contour.radius}, {"nodes", contour.nodes}};
  j["outputs"] = {{"formats", outputs.formats}, {"directory", outputs.directory}};
  j["seed"] = seed;
  j["checks"] = checks;
  j["jobs"] = jobs;
  return j;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open config file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::validation, std::string("config: parse error: ") + e.what());
  }
  return RunConfig::from_json(j, std::filesystem::path(path).parent_path().string());
}

/// Reads (eta, multiplicity) pairs. JSON files hold an array of [eta, m]
/// pairs, bare numbers or {"eta", "multiplicity"} objects, optionally under
/// an "eigenvalues" key; text files hold one "eta [m]" per line, '#' comments.
inline std::vector<std::pair<double, int>> load_eta_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open spectrum file " + path);
  std::vector<std::pair<double, int>> out;
  if (std::filesystem::path(path).extension() == ".json") {
    json j;
    try {
      j = json::parse(in);
      const json& list = j.is_object() ? j.at("eigenvalues") : j;
      for (const auto& e : list) {
        if (e.is_number()) out.emplace_back(e.get<double>(), 1);
        else if (e.is_array()) out.emplace_back(e.at(0).get<double>(), e.size() > 1 ? e.at(1).get<int>() : 1);
        else out.emplace_back(e.at("eta").get<double>(), e.value("multiplicity", 1));
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::validation, std::string("spectrum file: ") + e.what());
    }
    return out;
  }
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    double eta;
    if (!(ls >> eta)) {
      if (line.find_first_not_of(" \t\r") != std::string::npos) {
        throw Error(ErrorKind::validation, "spectrum file: bad line " + std::to_string(lineno));
      }
      continue;
    }
    int mult = 1;
    if (!(ls >> mult)) mult = 1;
    out.emplace_back(eta, mult);
  }
  return out;
}

inline SurfaceSpectrum build_spectrum(const RunConfig& c) {
  const auto& s = c.surface;
  if (s.type == "sphere") return sphere_spectrum(s.K, s.l_max);
  if (s.type == "torus") return torus_spectrum(s.L, s.eta_cap);
  std::filesystem::path p(s.path);
  if (p.is_relative() && !c.base_dir.empty()) p = std::filesystem::path(c.base_dir) / p;
  return custom_spectrum(s.K, load_eta_list(p.string()));
}

struct ErrorRecord {
  std::string kind;
  std::string stage;
  double eta = std::numeric_limits<double>::quiet_NaN();
  std::string message;
};

struct CheckRecord {
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;
  bool passed = true;
  json detail;
};

/// Everything computed for one eta of the spectrum.
struct EtaResult {
  SpectrumEntry entry;
  std::optional<GammaTable> table;
  std::optional<ConvergenceVerdict> verdict;
  std::optional<PerturbationSeries> series;
  double radius = std::numeric_limits<double>::quiet_NaN();
  std::vector<CheckRecord> checks;
  std::vector<ErrorRecord> errors;
};

namespace detail {

inline bool wants_check(const RunConfig& c, const char* name) {
  return std::find(c.checks.begin(), c.checks.end(), name) != c.checks.end();
}

inline CasimirBlock result_block(const GammaTable& t) {
  if (t.eta == 0.0) return finite_block(0.0, t.curvature);
  if (t.curvature > 0.0) return finite_block(t.eta, t.curvature);
  return truncated_block(t.eta, t.curvature, t.k_max);
}

inline void run_checks(const RunConfig& c, std::size_t index, EtaResult& r) {
  const GammaTable& t = *r.table;
  const CasimirBlock block = result_block(t);
  const LadderCoefficients coeffs = ladder_coefficients(block);
  if (wants_check(c, "casimir")) {
    const double v = casimir_residual(coeffs);
    r.checks.push_back({"casimir", v, 1e-12, v <= 1e-12, {{"k_min", block.k_min}, {"k_max", block.k_max}}});
  }
  if (wants_check(c, "accretivity")) {
    double worst = std::numeric_limits<double>::infinity();
    json per_gamma = json::array();
    for (double gamma : {0.5, 2.0, 10.0}) {
      const double v = accretivity_minimum(assemble_Pgamma(block, coeffs, gamma), 100, c.seed + 101 * index);
      per_gamma.push_back({{"gamma", gamma}, {"min_re_energy", v}});
      worst = std::min(worst, v);
    }
    r.checks.push_back({"accretivity", worst, -1e-12, worst >= -1e-12, per_gamma});
  }
  if (wants_check(c, "remark") && t.eta > 0.0) {
    double worst = 0.0;
    json cells = json::array();
    for (double zeta : {0.25, 0.5, 0.75}) {
      const RemarkBound b = remark_bound(t.eta, cd(zeta, 0.0), t.curvature);
      cells.push_back({{"zeta", zeta}, {"computed", b.computed}, {"closed_form", b.closed_form}});
      worst = std::max(worst, b.relative_error());
    }
    r.checks.push_back({"remark", worst, 1e-10, worst <= 1e-10, cells});
  }
  if (wants_check(c, "oracle") && block.dim() <= 512) {
    // Absolute agreement is limited by the backward error of the dense
    // solver, which scales with the norm of P_gamma.
    double worst_excess = 0.0;
    double worst_dist = 0.0;
    int rows = 0;
    for (const auto& row : t.rows) {
      if (row.status == RowStatus::failed) continue;
      const auto op = assemble_Pgamma(block, coeffs, row.gamma);
      const auto spec = eig_dense(op);
      double d = std::numeric_limits<double>::infinity();
      for (const cd& z : spec) d = std::min(d, std::abs(z - row.lambda));
      const double tol = 1e-8 + 1e-13 * op.norm_inf();
      worst_dist = std::max(worst_dist, d);
      worst_excess = std::max(worst_excess, d / tol);
      ++rows;
    }
    r.checks.push_back({"oracle", worst_excess, 1.0, worst_excess <= 1.0,
                        {{"rows", rows}, {"max_distance", worst_dist}}});
  }
}

inline EtaResult process_eta(const RunConfig& c, double K, const SpectrumEntry& entry, std::size_t index,
                             const std::vector<double>& grid) {
  EtaResult r;
  r.entry = entry;
  const auto guard = [&](const char* stage, auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      r.errors.push_back({std::string(to_string(e.kind())), stage, entry.eta, e.what()});
    } catch (const std::exception& e) {
      r.errors.push_back({"internal", stage, entry.eta, e.what()});
    }
  };
  guard("gamma_sweep", [&] {
    GammaTable t = gamma_sweep(entry.eta, K, grid, c.truncation.policy());
    t.multiplicity = entry.multiplicity;
    r.verdict = convergence_verdict(t);
    r.table = std::move(t);
    for (const auto& row : r.table->rows) {
      if (row.status == RowStatus::failed) {
        r.errors.push_back({"non_convergence", "gamma_sweep", entry.eta,
                            "branch lost at gamma=" + std::to_string(row.gamma) + ": " + row.note});
      }
    }
    if (r.table->truncated && !r.table->certified) {
      r.errors.push_back({"validation", "truncation", entry.eta, "truncation certificate not met below k_cap"});
    }
  });
  if (!r.table) return r;
  guard("perturbation", [&] {
    const CasimirBlock block = result_block(*r.table);
    const LadderCoefficients coeffs = ladder_coefficients(block);
    r.series = rs_series(block, coeffs);
    r.radius = perturbation_radius(block, coeffs, c.contour);
  });
  guard("checks", [&] { run_checks(c, index, r); });
  for (const auto& chk : r.checks) {
    if (!chk.passed) r.errors.push_back({"validation", "check:" + chk.name, entry.eta, "check outside tolerance"});
  }
  return r;
}

inline std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline json num_json(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json complex_json(cd z) { return {{"re", num_json(z.real())}, {"im", num_json(z.imag())}}; }

inline std::string table_stem(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "gamma_table_%03zu", index);
  return buf;
}

class OutputWriter {
 public:
  explicit OutputWriter(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_ / "plots", ec);
    if (ec) throw Error(ErrorKind::io, "cannot create output directory " + dir_.string() + ": " + ec.message());
  }

  void write(const std::string& name, const std::string& content) const {
    const auto path = dir_ / name;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << content;
    if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  }

  void write_json(const std::string& name, const json& j) const { write(name, j.dump(2) + "\n"); }

 private:
  std::filesystem::path dir_;
};

inline std::string table_csv(const GammaTable& t) {
  std::string s = "gamma,re_lambda,im_lambda,abs_error,simple,k_max,residual,eta,K,trunc_certificate,status\n";
  for (const auto& row : t.rows) {
    s += num(row.gamma) + "," + num(row.lambda.real()) + "," + num(row.lambda.imag()) + "," + num(row.abs_error) +
         "," + (row.simple ? "1" : "0") + "," + std::to_string(row.k_max) + "," + num(row.residual) + "," +
         num(t.eta) + "," + num(t.curvature) + "," + num(row.certificate) + "," + std::string(to_string(row.status)) +
         "\n";
  }
  return s;
}

inline json table_json(const GammaTable& t) {
  json rows = json::array();
  for (const auto& row : t.rows) {
    json r = {{"gamma", row.gamma},
              {"lambda", complex_json(row.lambda)},
              {"abs_error", num_json(row.abs_error)},
              {"simple", row.simple},
              {"k_max", row.k_max},
              {"residual", num_json(row.residual)},
              {"trunc_certificate", num_json(row.certificate)},
              {"status", to_string(row.status)}};
    if (!row.note.empty()) r["note"] = row.note;
    rows.push_back(std::move(r));
  }
  return {{"eta", t.eta}, {"K", t.curvature}, {"multiplicity", t.multiplicity}, {"k_max", t.k_max},
          {"truncated", t.truncated}, {"rows", rows}};
}

inline json summary_entry(const EtaResult& r, std::size_t index) {
  json e = {{"index", index}, {"eta", r.entry.eta}, {"multiplicity", r.entry.multiplicity}, {"label", r.entry.label}};
  if (!r.table) {
    e["status"] = "failed";
    return e;
  }
  const GammaTable& t = *r.table;
  const ConvergenceVerdict& v = *r.verdict;
  e["status"] = r.errors.empty() ? "ok" : "errors";
  e["table"] = table_stem(index);
  e["k_max"] = t.k_max;
  e["truncated"] = t.truncated;
  e["k_tried"] = t.k_tried;
  e["trunc_certificate"] = num_json(t.certificate);
  e["certified"] = t.certified;
  e["tail_start"] = v.tail_start;
  e["tail_points"] = v.tail_points;
  e["max_tail_error"] = num_json(v.max_tail_error);
  e["error_at_gamma_max"] = num_json(v.error_at_gamma_max);
  e["monotone_tail"] = v.monotone_tail;
  e["fitted_rate"] = {{"value", num_json(v.fitted_rate)}, {"empirical", true}};
  e["converges"] = t.eta == 0.0 || (v.monotone_tail && v.tail_points >= 2);
  e["empirical_r"] = t.empirical_r ? json(*t.empirical_r) : json(nullptr);
  e["x_collision"] = t.x_collision ? json(*t.x_collision) : json(nullptr);
  return e;
}

}  // namespace detail

struct RunOutcome {
  int exit_code = 0;
  std::vector<ErrorRecord> errors;
  std::vector<EtaResult> results;
};

inline json errors_json(const std::vector<ErrorRecord>& errors) {
  json arr = json::array();
  for (const auto& e : errors) {
    arr.push_back({{"kind", e.kind}, {"stage", e.stage}, {"eta", detail::num_json(e.eta)}, {"message", e.message}});
  }
  return {{"errors", arr}};
}

/// Runs every eta of the configured spectrum on a pool of `jobs` workers and
/// writes the artifacts. Output is independent of the worker count.
inline RunOutcome run(const RunConfig& config) {
  RunOutcome outcome;
  config.validate();
  const detail::OutputWriter writer(config.outputs.directory);
  SurfaceSpectrum spectrum;
  try {
    spectrum = build_spectrum(config);
  } catch (const Error& e) {
    outcome.errors.push_back({std::string(to_string(e.kind())), "spectrum", NAN, e.what()});
    writer.write_json("errors.json", errors_json(outcome.errors));
    outcome.exit_code = 1;
    return outcome;
  }
  const auto grid = config.gamma_grid.grid();
  const std::size_t n = spectrum.entries.size();
  outcome.results.resize(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      outcome.results[i] = detail::process_eta(config, spectrum.curvature, spectrum.entries[i], i, grid);
    }
  };
  const int jobs = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(config.jobs), std::max<std::size_t>(n, 1)));
  std::vector<std::thread> pool;
  for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  for (const auto& r : outcome.results) {
    outcome.errors.insert(outcome.errors.end(), r.errors.begin(), r.errors.end());
  }

  // Serialization happens on this thread only, in spectrum order.
  json summary_rows = json::array();
  json pert_rows = json::array();
  json diag_rows = json::array();
  json all_tables = json::array();
  std::string pert_csv = "eta,K,multiplicity,re_mu1,im_mu1,re_mu2,im_mu2,second_derivative,half_eta_residual,"
                         "perturbation_radius,k_max\n";
  std::string summary_csv = "eta,K,multiplicity,k_max,trunc_certificate,max_tail_error,error_at_gamma_max,"
                            "monotone_tail,fitted_rate,empirical_r\n";
  std::vector<GammaTable> tables;
  for (std::size_t i = 0; i < n; ++i) {
    const EtaResult& r = outcome.results[i];
    summary_rows.push_back(detail::summary_entry(r, i));
    if (!r.table) continue;
    const GammaTable& t = *r.table;
    tables.push_back(t);
    const std::string stem = detail::table_stem(i);
    if (config.outputs.wants("csv")) writer.write(stem + ".csv", detail::table_csv(t));
    if (config.outputs.wants("json")) all_tables.push_back(detail::table_json(t));

    std::string err_dat = "# gamma abs_error\n", lam_dat = "# gamma re_lambda im_lambda\n";
    for (const auto& row : t.rows) {
      err_dat += detail::num(row.gamma) + " " + detail::num(row.abs_error) + "\n";
      lam_dat += detail::num(row.gamma) + " " + detail::num(row.lambda.real()) + " " +
                 detail::num(row.lambda.imag()) + "\n";
    }
    writer.write("plots/abs_error_" + stem.substr(12) + ".dat", err_dat);
    writer.write("plots/lambda_" + stem.substr(12) + ".dat", lam_dat);

    const auto& v = *r.verdict;
    summary_csv += detail::num(t.eta) + "," + detail::num(t.curvature) + "," + std::to_string(t.multiplicity) + "," +
                   std::to_string(t.k_max) + "," + detail::num(t.certificate) + "," + detail::num(v.max_tail_error) +
                   "," + detail::num(v.error_at_gamma_max) + "," + (v.monotone_tail ? "1" : "0") + "," +
                   detail::num(v.fitted_rate) + "," + detail::num(t.empirical_r.value_or(NAN)) + "\n";

    if (r.series) {
      const auto& s = *r.series;
      const double half_res = std::abs(s.mu2 - 0.5 * t.eta);
      pert_csv += detail::num(t.eta) + "," + detail::num(t.curvature) + "," + std::to_string(t.multiplicity) + "," +
                  detail::num(s.mu1.real()) + "," + detail::num(s.mu1.imag()) + "," + detail::num(s.mu2.real()) +
                  "," + detail::num(s.mu2.imag()) + "," + detail::num(s.second_derivative().real()) + "," +
                  detail::num(half_res) + "," + detail::num(r.radius) + "," + std::to_string(t.k_max) + "\n";
      pert_rows.push_back({{"eta", t.eta},
                           {"K", t.curvature},
                           {"multiplicity", t.multiplicity},
                           {"mu1", detail::complex_json(s.mu1)},
                           {"mu2_taylor_coefficient", detail::complex_json(s.mu2)},
                           {"second_derivative", detail::complex_json(s.second_derivative())},
                           {"half_eta_residual", half_res},
                           {"perturbation_radius", detail::num_json(r.radius)},
                           {"k_max", t.k_max}});
    }
    json checks = json::array();
    for (const auto& c : r.checks) {
      checks.push_back({{"name", c.name}, {"value", detail::num_json(c.value)}, {"tolerance", c.tolerance},
                        {"passed", c.passed}, {"detail", c.detail}});
    }
    diag_rows.push_back({{"eta", t.eta}, {"K", t.curvature}, {"checks", checks}});
  }

  json summary = {{"config", config.to_json()},
                  {"surface", {{"source", to_string(spectrum.source)}, {"K", spectrum.curvature}}},
                  {"gamma_points", grid.size()},
                  {"etas", summary_rows}};
  if (const auto gap = spectrum.spectral_gap()) {
    try {
      const MixingReport m = mixing_report(spectrum, tables);
      std::string mix_dat = "# gamma re_lambda_eta1 gap_bound\n";
      for (const auto& row : m.rows) {
        mix_dat += detail::num(row.gamma) + " " + detail::num(row.re_lambda_eta1) + " " + detail::num(row.gap_bound) +
                   "\n";
      }
      writer.write("plots/mixing.dat", mix_dat);
      summary["mixing"] = {{"eta1", m.eta1},
                           {"multiplicity", m.multiplicity},
                           {"re_lambda_eta1_at_gamma_max", m.limit_estimate},
                           {"approaches_from_above", m.approaches_from_above},
                           {"excess_rate", {{"value", detail::num_json(m.fitted_rate)}, {"empirical", true}}}};
    } catch (const Error& e) {
      outcome.errors.push_back({std::string(to_string(e.kind())), "mixing_report", *gap, e.what()});
    }
  }
  summary["errors"] = outcome.errors.size();
  writer.write_json("summary.json", summary);
  if (config.outputs.wants("csv")) {
    writer.write("summary.csv", summary_csv);
    writer.write("perturbation.csv", pert_csv);
  }
  if (config.outputs.wants("json")) {
    writer.write_json("gamma_tables.json", {{"tables", all_tables}});
    writer.write_json("perturbation.json", {{"rows", pert_rows}});
  }
  writer.write_json("diagnostics.json", {{"etas", diag_rows}});
  std::error_code ec;
  std::filesystem::remove(std::filesystem::path(config.outputs.directory) / "errors.json", ec);
  if (!outcome.errors.empty()) {
    writer.write_json("errors.json", errors_json(outcome.errors));
    outcome.exit_code = 1;
  }
  return outcome;
}

}  // namespace kbm
