// Command line front end: solve, convergence sweep, Jacobian and invariant
// checks, polygon dumps.

#include "mongecone/harness.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

namespace fs = std::filesystem;
using namespace mongecone;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitSolver = 1;
constexpr int kExitConfig = 2;

struct Options {
  std::string config;
  std::string problem;
  std::string h;
  std::string mode;
  std::string pinning;
  std::optional<double> delta;
  std::optional<double> rho;
  std::optional<int> max_iterations;
  std::optional<std::uint64_t> seed;
  std::string output_dir;
  bool timing = false;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->set_help_flag("--help", "print this help message and exit");
  cmd->add_option("--config", o.config, "key = value run configuration");
  cmd->add_option("--problem", o.problem, "built-in problem: s5 (default) or toy");
  cmd->add_option("--h", o.h, "mesh size, e.g. 1/64, 0.015625 or 2^-6");
  cmd->add_option("--mode", o.mode, "theory or experiment");
  cmd->add_option("--pinning", o.pinning, "pinned or augmented");
  cmd->add_option("--delta", o.delta, "sufficient decrease factor");
  cmd->add_option("--rho", o.rho, "backtracking factor");
  cmd->add_option("--max-iterations", o.max_iterations);
  cmd->add_option("--seed", o.seed);
  cmd->add_option("--output-dir", o.output_dir);
  cmd->add_flag("--timing", o.timing, "record wall-clock times in the trace");
}

// Command line values override the config file.
RunConfig resolve(const Options& o, const std::string& default_h) {
  RunConfig cfg;
  if (!o.config.empty()) {
    std::ifstream in(o.config);
    if (!in) throw ConfigError("cannot open config file '" + o.config + "'");
    cfg = parse_config(in);
  } else {
    cfg.problem = "s5";
    cfg.h = parse_mesh_size(default_h);
  }
  if (!o.problem.empty()) cfg.problem = o.problem;
  if (!o.h.empty()) cfg.h = parse_mesh_size(o.h);
  if (!o.mode.empty()) cfg.mode = parse_mode(o.mode);
  if (!o.pinning.empty()) cfg.pinning = parse_pinning(o.pinning);
  if (o.delta) cfg.delta = *o.delta;
  if (o.rho) cfg.rho = *o.rho;
  if (o.max_iterations) cfg.max_iterations = *o.max_iterations;
  if (o.seed) cfg.seed = *o.seed;
  if (!o.output_dir.empty()) cfg.output_dir = o.output_dir;
  if (!(cfg.delta >= 0 && cfg.delta < 1)) throw ConfigError("key 'delta' must lie in [0, 1)");
  if (!(cfg.rho > 0 && cfg.rho < 1)) throw ConfigError("key 'rho' must lie in (0, 1)");
  try {
    builtin_problem(cfg.problem);
  } catch (const ProblemError& e) {
    throw ConfigError(std::string("key 'problem': ") + e.what());
  }
  return cfg;
}

ProblemSpec problem_for(const RunConfig& cfg) {
  ProblemSpec spec = builtin_problem(cfg.problem);
  spec.h = cfg.h;
  spec.pinning = cfg.pinning;
  return spec;
}

fs::path output_path(const RunConfig& cfg, const std::string& name) {
  fs::create_directories(cfg.output_dir);
  return fs::path(cfg.output_dir) / name;
}

void print_trace_summary(const NewtonTrace& trace) {
  for (const auto& w : trace.warnings) std::cerr << "warning: " << w << '\n';
  std::printf("%4s  %-14s %4s  %-12s\n", "k", "|G|", "i_k", "step");
  for (const auto& r : trace.iterations) {
    if (r.i_k >= 0)
      std::printf("%4d  %-14.6e %4d  %-12.4e\n", r.k, r.residual_norm, r.i_k, r.step_norm);
    else
      std::printf("%4d  %-14.6e %4s\n", r.k, r.residual_norm, "-");
  }
}

int run_solve(const Options& o, SolveSettings extra = {}) {
  const RunConfig cfg = resolve(o, "1/64");
  const ProblemSpec spec = problem_for(cfg);
  SolveSettings s = cfg.settings();
  s.record_timing = o.timing || extra.record_timing;
  const SolveOutcome out = solve_problem(spec, s);
  const auto& trace = out.result.trace;
  print_trace_summary(trace);

  {
    std::ofstream os(output_path(cfg, "trace.jsonl"));
    trace.write_jsonl(os);
  }
  {
    std::ofstream os(output_path(cfg, "solution.csv"));
    os << "x,y,v\n";
    os.precision(17);
    const Lattice& lat = out.problem.system.lattice();
    for (Index i = 0; i < lat.size(); ++i)
      os << lat.point(i).x() << ',' << lat.point(i).y() << ',' << out.solution[i] << '\n';
  }
  if (std::isfinite(out.max_error)) std::printf("max nodal error %.6e\n", out.max_error);
  if (!trace.converged) {
    std::cerr << "solver failed: " << trace.failure << '\n';
    return kExitSolver;
  }
  std::printf("converged in %d steps, |G| = %.3e\n", trace.steps(), trace.final_residual());
  return kExitOk;
}

int run_convergence_cmd(const Options& o, int h_min, int h_max) {
  if (h_min < 1 || h_max < h_min) throw ConfigError("need 1 <= --h-min <= --h-max");
  const RunConfig cfg = resolve(o, "1/" + std::to_string(1 << h_min));
  const ProblemSpec spec = problem_for(cfg);
  std::vector<double> hs;
  for (int e = h_min; e <= h_max; ++e) hs.push_back(std::ldexp(1.0, -e));
  const auto rows = run_convergence(spec, hs, cfg.settings());
  write_convergence_csv(std::cout, rows);
  std::ofstream os(output_path(cfg, "convergence.csv"));
  write_convergence_csv(os, rows);
  bool ok = true;
  for (const auto& r : rows) {
    if (!r.converged) {
      std::cerr << "h = " << r.h << ": " << r.failure << '\n';
      ok = false;
    }
  }
  return ok ? kExitOk : kExitSolver;
}

int run_check_jacobian(const Options& o, int perturbations, double step) {
  const RunConfig cfg = resolve(o, "1/8");
  const ProblemSpec spec = problem_for(cfg);
  const BuiltProblem built = build_problem(spec);
  const MongeAmpereSystem& sys = built.system;
  const MeshFunction v0 = initial_quadratic(spec, sys.lattice());

  // Perturbation size relative to the smallest second difference of v0.
  const double h = sys.lattice().h();
  const double amplitude = 0.1 * initial_quadratic_curvature(spec) * h * h;
  std::mt19937_64 gen(cfg.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  std::printf("%-6s %-14s %-8s %-10s\n", "sample", "max_rel_err", "flagged", "entries");
  double worst = 0, worst_flagged = 0;
  for (int t = 0; t <= perturbations; ++t) {
    MeshFunction v = v0;
    if (t > 0)
      for (Index i = 0; i < v.size(); ++i)
        if (i != sys.lattice().pinned_index()) v[i] += amplitude * unit(gen);
    const Eigen::VectorXd u = sys.unknowns_from_mesh(v);
    const Evaluation ev = sys.evaluate(u, true);
    const FdJacobian fd = fd_jacobian_oracle(sys, u, step);
    const JacobianComparison cmp = compare_jacobians(ev.jacobian, fd);
    std::printf("%-6s %-14.3e %-8.4f %-10ld\n", t == 0 ? "v0" : std::to_string(t).c_str(),
                cmp.max_relative_error, cmp.flagged_fraction, static_cast<long>(cmp.nonzeros));
    if (t > 0) {
      worst = std::max(worst, cmp.max_relative_error);
      worst_flagged = std::max(worst_flagged, cmp.flagged_fraction);
    }
  }
  const bool ok = worst <= 1e-5 && worst_flagged <= 0.02;
  std::printf("perturbed samples: max relative error %.3e, flagged %.4f -> %s\n", worst, worst_flagged,
              ok ? "ok" : "MISMATCH");
  return ok ? kExitOk : kExitSolver;
}

int run_check_invariants(const Options& o) {
  const RunConfig cfg = resolve(o, "1/32");
  const ProblemSpec spec = problem_for(cfg);
  SolveSettings s = cfg.settings();
  s.keep_iterates = true;
  const SolveOutcome out = solve_problem(spec, s);
  const MongeAmpereSystem& sys = out.problem.system;
  std::printf("%4s  %-14s %-14s %s\n", "k", "mass_defect", "containment", "wcdd");
  bool ok = out.result.trace.converged;
  for (const auto& rec : out.result.trace.iterations) {
    const InvariantReport rep = check_invariants(sys, rec.iterate);
    const char* wcdd = sys.pinning() == Pinning::pinned ? (rep.wcdd.passed() ? "pass" : "FAIL") : "n/a";
    std::printf("%4d  %-14.3e %-14.3e %s\n", rec.k, rep.relative_mass_defect,
                std::max(0.0, rep.max_containment_violation), wcdd);
    ok = ok && rep.relative_mass_defect <= 1e-5;
    if (sys.pinning() == Pinning::pinned) ok = ok && rep.wcdd.passed();
    if (&rec == &out.result.trace.iterations.back()) ok = ok && rep.max_containment_violation <= 1e-8;
  }
  return ok ? kExitOk : kExitSolver;
}

int run_dump_polygons(const Options& o, bool initial) {
  const RunConfig cfg = resolve(o, "1/16");
  const ProblemSpec spec = problem_for(cfg);
  BuiltProblem built = build_problem(spec);
  const MongeAmpereSystem& sys = built.system;
  MeshFunction v = initial_quadratic(spec, sys.lattice());
  if (!initial) {
    SolveSettings s = cfg.settings();
    const NewtonResult res = damped_newton(sys, sys.unknowns_from_mesh(v), make_newton_config(sys, s));
    if (!res.trace.converged) {
      std::cerr << "solver failed: " << res.trace.failure << '\n';
      return kExitSolver;
    }
    v = sys.mesh_from_unknowns(res.solution);
  }
  const ExtensionCache ext = sys.extend(v);
  std::ofstream os(output_path(cfg, "polygons.jsonl"));
  for (Index i = 0; i < sys.lattice().size(); ++i) {
    const SubdiffPolygon sub = sys.subdifferential(v, ext, i);
    nlohmann::ordered_json j;
    j["index"] = i;
    j["point"] = {sys.lattice().point(i).x(), sys.lattice().point(i).y()};
    auto verts = nlohmann::json::array();
    for (const auto& p : sub.polygon.vertices()) verts.push_back({p.x(), p.y()});
    j["vertices"] = std::move(verts);
    j["omega"] = sys.polygon_measure(sub.polygon);
    j["mu"] = sys.rhs()[i];
    os << j.dump() << '\n';
  }
  std::printf("wrote %ld polygons to %s\n", static_cast<long>(sys.lattice().size()),
              output_path(cfg, "polygons.jsonl").c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monge-Ampere second boundary value problem: discretization and damped Newton solver"};
  app.set_help_flag("--help", "print this help message and exit");
  app.require_subcommand(1);
  Options opts;

  auto* solve = app.add_subcommand("solve", "solve one problem, write trace.jsonl and solution.csv");
  add_common(solve, opts);

  int h_min = 6, h_max = 7;
  auto* conv = app.add_subcommand("convergence", "mesh sweep h = 2^-h_min .. 2^-h_max, write convergence.csv");
  add_common(conv, opts);
  conv->add_option("--h-min", h_min, "coarsest level exponent");
  conv->add_option("--h-max", h_max, "finest level exponent");

  int perturbations = 5;
  double fd_step = 1e-6;
  auto* jac = app.add_subcommand("check-jacobian", "compare the analytic Jacobian with finite differences");
  add_common(jac, opts);
  jac->add_option("--perturbations", perturbations);
  jac->add_option("--step", fd_step);

  auto* inv = app.add_subcommand("check-invariants", "mass conservation, containment and WCDD along a solve");
  add_common(inv, opts);

  bool initial = false;
  auto* dump = app.add_subcommand("dump-polygons", "write subdifferential polygons as JSON lines");
  add_common(dump, opts);
  dump->add_flag("--initial", initial, "dump at the initial guess instead of the solution");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*solve) return run_solve(opts);
    if (*conv) return run_convergence_cmd(opts, h_min, h_max);
    if (*jac) return run_check_jacobian(opts, perturbations, fd_step);
    if (*inv) return run_check_invariants(opts);
    if (*dump) return run_dump_polygons(opts, initial);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ProblemError& e) {
    std::cerr << "problem error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitSolver;
  }
  return kExitOk;
}
