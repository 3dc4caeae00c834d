// kbm_lab: gamma sweeps over a surface spectrum, and the acceptance selftest.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "kbm/acceptance.hpp"
#include "kbm/run.hpp"

namespace {

struct RunFlags {
  std::string config_path;
  kbm::RunConfig defaults;
  std::string surface;
  double K = 0.0;
  int l_max = 0;
  double L = 0.0;
  double eta_cap = 0.0;
  std::string spectrum;
  double log_start = 0.0, log_end = 0.0;
  int points = 0;
  std::vector<double> gammas;
  std::string truncation;
  int k_max = 0, k_cap = 0;
  double trunc_tol = 0.0;
  double contour_radius = 0.0;
  int contour_nodes = 0;
  std::vector<std::string> formats;
  std::string out;
  std::uint64_t seed = 0;
  std::vector<std::string> checks;
  int jobs = 0;
  bool print_config = false;
};

void add_run_options(CLI::App& app, RunFlags& f) {
  const auto& d = f.defaults;
  f.surface = d.surface.type;
  f.K = d.surface.K;
  f.l_max = d.surface.l_max;
  f.L = d.surface.L;
  f.eta_cap = d.surface.eta_cap;
  f.log_start = d.gamma_grid.log_start;
  f.log_end = d.gamma_grid.log_end;
  f.points = d.gamma_grid.points;
  f.truncation = d.truncation.mode;
  f.k_max = d.truncation.k_max;
  f.k_cap = d.truncation.k_cap;
  f.trunc_tol = d.truncation.tol;
  f.contour_radius = d.contour.radius;
  f.contour_nodes = d.contour.nodes;
  f.formats = d.outputs.formats;
  f.out = d.outputs.directory;
  f.seed = d.seed;
  f.checks = d.checks;
  f.jobs = d.jobs;

  app.add_option("-c,--config", f.config_path, "JSON run configuration; flags override its values")
      ->check(CLI::ExistingFile);
  app.add_option("--surface", f.surface, "sphere, torus or custom")
      ->check(CLI::IsMember({"sphere", "torus", "custom"}))
      ->capture_default_str();
  app.add_option("--K", f.K, "Gaussian curvature (sphere: K > 0; torus: 0; custom: any)")->capture_default_str();
  app.add_option("--l-max", f.l_max, "sphere: largest degree l")->capture_default_str();
  app.add_option("--L", f.L, "torus: side length")->capture_default_str();
  app.add_option("--eta-cap", f.eta_cap, "torus: largest eigenvalue kept")->capture_default_str();
  app.add_option("--spectrum", f.spectrum, "custom: eigenvalue file (.json or text 'eta [mult]' lines)");
  app.add_option("--log-start", f.log_start, "gamma grid: log10 of the first gamma")->capture_default_str();
  app.add_option("--log-end", f.log_end, "gamma grid: log10 of the last gamma")->capture_default_str();
  app.add_option("--points", f.points, "gamma grid: number of points")->capture_default_str();
  app.add_option("--gamma", f.gammas, "explicit ascending gamma values (replaces the log grid)");
  app.add_option("--truncation", f.truncation, "fixed or adaptive")
      ->check(CLI::IsMember({"fixed", "adaptive"}))
      ->capture_default_str();
  app.add_option("--k-max", f.k_max, "window half-width (fixed) or starting value (adaptive; 0 = default)")
      ->capture_default_str();
  app.add_option("--trunc-tol", f.trunc_tol, "doubling tolerance for adaptive truncation")->capture_default_str();
  app.add_option("--k-cap", f.k_cap, "largest window half-width tried")->capture_default_str();
  app.add_option("--contour-radius", f.contour_radius, "radius of the circle about 0")->capture_default_str();
  app.add_option("--contour-nodes", f.contour_nodes, "quadrature nodes on the circle")->capture_default_str();
  app.add_option("--format", f.formats, "output formats (csv, json)")->capture_default_str();
  app.add_option("-o,--out", f.out, "output directory")->capture_default_str();
  app.add_option("--seed", f.seed, "seed for randomized checks")->capture_default_str();
  app.add_option("--checks", f.checks, "check suites: casimir, accretivity, remark, oracle")->capture_default_str();
  app.add_option("-j,--jobs", f.jobs, "worker threads")->capture_default_str();
  app.add_flag("--print-config", f.print_config, "print the effective configuration and exit");
}

kbm::RunConfig resolve_config(const CLI::App& app, const RunFlags& f) {
  kbm::json j = kbm::json::object();
  std::string base_dir;
  if (!f.config_path.empty()) {
    std::ifstream in(f.config_path);
    try {
      j = kbm::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw kbm::Error(kbm::ErrorKind::validation, std::string("config: parse error: ") + e.what());
    }
    base_dir = std::filesystem::path(f.config_path).parent_path().string();
  }
  auto given = [&](const char* name) { return app.count(name) > 0; };
  if (given("--surface")) j["surface"]["type"] = f.surface;
  if (given("--K")) j["surface"]["K"] = f.K;
  if (given("--l-max")) j["surface"]["l_max"] = f.l_max;
  if (given("--L")) j["surface"]["L"] = f.L;
  if (given("--eta-cap")) j["surface"]["eta_cap"] = f.eta_cap;
  if (given("--spectrum")) {
    j["surface"]["path"] = f.spectrum;
    base_dir.clear();
  }
  if (given("--log-start")) j["gamma_grid"]["log_start"] = f.log_start;
  if (given("--log-end")) j["gamma_grid"]["log_end"] = f.log_end;
  if (given("--points")) j["gamma_grid"]["points"] = f.points;
  if (given("--gamma")) j["gamma_grid"]["values"] = f.gammas;
  if (given("--truncation")) j["truncation"]["mode"] = f.truncation;
  if (given("--k-max")) j["truncation"]["k_max"] = f.k_max;
  if (given("--trunc-tol")) j["truncation"]["tol"] = f.trunc_tol;
  if (given("--k-cap")) j["truncation"]["k_cap"] = f.k_cap;
  if (given("--contour-radius")) j["contour"]["radius"] = f.contour_radius;
  if (given("--contour-nodes")) j["contour"]["nodes"] = f.contour_nodes;
  if (given("--format")) j["outputs"]["formats"] = f.formats;
  if (given("--out")) j["outputs"]["directory"] = f.out;
  if (given("--seed")) j["seed"] = f.seed;
  if (given("--checks")) j["checks"] = f.checks;
  if (given("--jobs")) j["jobs"] = f.jobs;
  return kbm::RunConfig::from_json(j, base_dir);
}

void print_error(const kbm::ErrorRecord& e) {
  std::cerr << kbm::errors_json({e}).dump() << "\n";
}

int do_run(const CLI::App& app, const RunFlags& f) {
  kbm::RunConfig config;
  try {
    config = resolve_config(app, f);
  } catch (const kbm::Error& e) {
    print_error({std::string(kbm::to_string(e.kind())), "config", NAN, e.what()});
    return 2;
  }
  if (f.print_config) {
    std::cout << config.to_json().dump(2) << "\n";
    return 0;
  }
  try {
    const kbm::RunOutcome outcome = kbm::run(config);
    for (const auto& e : outcome.errors) print_error(e);
    std::size_t tables = 0;
    for (const auto& r : outcome.results) tables += r.table ? 1 : 0;
    std::cout << "wrote " << tables << " gamma table(s) to " << config.outputs.directory << "; "
              << outcome.errors.size() << " error(s)\n";
    return outcome.exit_code;
  } catch (const kbm::Error& e) {
    print_error({std::string(kbm::to_string(e.kind())), "run", NAN, e.what()});
    return 1;
  }
}

int do_selftest(double tolerance_scale, std::uint64_t seed, const std::string& report_path, std::vector<int> only) {
  if (only.empty()) only = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  kbm::acceptance::Options opts;
  opts.tolerance_scale = tolerance_scale;
  opts.seed = seed;
  kbm::acceptance::Suite suite(opts);
  kbm::json report = {{"tolerance_scale", tolerance_scale}, {"seed", seed}, {"criteria", kbm::json::array()}};
  int failures = 0;
  for (int id : only) {
    const auto r = suite.run(id);
    std::printf("%s\n", kbm::acceptance::format_line(r).c_str());
    std::fflush(stdout);
    report["criteria"].push_back({{"id", r.id}, {"name", r.name}, {"passed", r.passed}, {"detail", r.detail}});
    if (!r.passed) ++failures;
  }
  report["passed"] = failures == 0;
  std::printf("%d of %zu criteria passed\n", static_cast<int>(only.size()) - failures, only.size());
  if (!report_path.empty()) {
    std::ofstream out(report_path, std::ios::binary | std::ios::trunc);
    out << report.dump(2) << "\n";
    if (!out) {
      std::fprintf(stderr, "cannot write report %s\n", report_path.c_str());
      return 1;
    }
  }
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral laboratory for kinetic Brownian motion generators on constant-curvature surfaces"};
  app.require_subcommand(1);

  RunFlags run_flags;
  CLI::App* run_cmd = app.add_subcommand("run", "sweep gamma for every eta of a surface spectrum");
  add_run_options(*run_cmd, run_flags);

  double tolerance_scale = 1.0;
  std::uint64_t seed = kbm::acceptance::Options{}.seed;
  std::string report_path;
  CLI::App* self_cmd = app.add_subcommand("selftest", "run the acceptance criteria");
  self_cmd->add_option("--perturb-tolerance", tolerance_scale,
                       "multiply every tolerance by this factor (values < 1 provoke failures)")
      ->capture_default_str();
  self_cmd->add_option("--seed", seed, "seed for randomized criteria")->capture_default_str();
  self_cmd->add_option("--report", report_path, "write a JSON report (no timings)");
  std::vector<int> only;
  self_cmd->add_option("--only", only, "run only these criterion ids")->check(CLI::Range(1, 10));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  if (run_cmd->parsed()) return do_run(*run_cmd, run_flags);
  return do_selftest(tolerance_scale, seed, report_path, only);
}
