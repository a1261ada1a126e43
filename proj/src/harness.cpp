#include "mongecone/harness.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <random>
#include <sstream>

namespace mongecone {

namespace {

std::vector<Eigen::Vector2i> s5_stencil() {
  return {{1, 0}, {0, 1}, {1, 1}, {1, -1}, {2, 1}, {-1, 2}, {1, 2}, {-2, 1}};
}

}  // namespace

ProblemSpec builtin_problem_s5() {
  ProblemSpec spec;
  spec.name = "s5";
  spec.domain = ConvexPolygond::box(0, 1, 0, 1);
  // Image of the unit square under Du(x, y) = (x + y, x + 2y).
  spec.target = ConvexPolygond({{0, 0}, {1, 1}, {2, 3}, {1, 2}});
  spec.density = {[](const Point2d& p) { return std::exp(-0.5 * p.squaredNorm()); },
                  "exp(-|p|^2/2)"};
  // f = R(Du) det D^2u with det D^2u = 1.
  spec.source = {[](const Point2d& x) {
                   const double a = x.x() + x.y();
                   const double b = x.x() + 2 * x.y();
                   return std::exp(-0.5 * (a * a + b * b));
                 },
                 "R(Du)"};
  spec.exact = [](const Point2d& x) {
    return 0.5 * x.x() * x.x() + x.x() * x.y() + x.y() * x.y();
  };
  spec.exact_gradient = [](const Point2d& x) { return Point2d(x.x() + x.y(), x.x() + 2 * x.y()); };
  spec.stencil = s5_stencil();
  spec.h = 1.0 / 64;
  spec.alpha = 0;
  return spec;
}

ProblemSpec builtin_problem_toy() {
  ProblemSpec spec;
  spec.name = "toy";
  spec.domain = ConvexPolygond::box(0, 1, 0, 1);
  spec.target = ConvexPolygond::box(-1, 1, -1, 1);
  spec.density = Density::constant(1.0, "one");
  spec.manufactured = [](const Point2d& x) {
    return 0.6 * x.x() * x.x() + 0.25 * x.x() * x.y() + 0.45 * x.y() * x.y() - 0.55 * x.x() -
           0.4 * x.y() + 0.15 * x.x() * x.x() * x.x();
  };
  spec.exact = spec.manufactured;
  spec.stencil = {{1, 0}, {0, 1}, {1, 1}, {1, -1}};
  spec.h = 0.25;
  spec.alpha = 0;
  return spec;
}

ProblemSpec builtin_problem(const std::string& name) {
  if (name == "s5") return builtin_problem_s5();
  if (name == "toy") return builtin_problem_toy();
  throw ProblemError("unknown problem '" + name + "' (expected s5 or toy)");
}

BuiltProblem build_problem(const ProblemSpec& spec, const SchemeOptions& options) {
  Lattice lattice = build_lattice(spec.domain, spec.h, spec.offset, spec.pin);
  Stencil stencil = build_stencil(spec.stencil, spec.target);
  std::vector<ConvexPolygond> cells = partition_cells(lattice);
  std::vector<double> areas;
  areas.reserve(cells.size());
  for (const auto& c : cells) areas.push_back(area(c));

  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(lattice.size());
  const bool manufactured = static_cast<bool>(spec.manufactured);
  if (!manufactured) {
    if (!spec.source.eval) throw ProblemError("problem '" + spec.name + "' has no source density");
    for (Index i = 0; i < lattice.size(); ++i)
      rhs[i] = integrate_cell(cells[i], spec.source, TriangleRule::midpoint3());
  }

  MongeAmpereSystem system(std::move(lattice), std::move(stencil), spec.target, spec.density, rhs,
                           std::move(areas), spec.pinning, spec.alpha, options);
  double source_mass = 0;
  if (manufactured) {
    MeshFunction vstar(system.lattice().size());
    for (Index i = 0; i < vstar.size(); ++i) vstar[i] = spec.manufactured(system.lattice().point(i));
    const ExtensionCache ext = system.extend(vstar);
    for (Index i = 0; i < vstar.size(); ++i) rhs[i] = system.ma_measure(vstar, ext, i);
    system = system.with_rhs(rhs);
    source_mass = rhs.sum();
  } else {
    source_mass = integrate_polygon_refined(spec.domain, spec.source, TriangleRule::radon7(), 6);
  }

  const double target_mass = system.target_mass();
  if (std::abs(source_mass - target_mass) > 1e-6 * std::abs(target_mass)) {
    std::ostringstream os;
    os.precision(12);
    os << "problem '" << spec.name << "' violates mass compatibility: source " << source_mass
       << " vs target " << target_mass;
    throw ProblemError(os.str());
  }
  return {std::move(system), std::move(cells), source_mass, target_mass};
}

double distance_outside(const ConvexPolygond& poly, const Point2d& p) {
  const auto& v = poly.vertices();
  double d = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Point2d e = v[(i + 1) % v.size()] - v[i];
    const Point2d outward(e.y(), -e.x());
    d = std::max(d, outward.dot(p - v[i]) / outward.norm());
  }
  return d;
}

double initial_quadratic_curvature(const ProblemSpec& spec) {
  const Point2d pbar = centroid(spec.target);
  const Point2d xbar = centroid(spec.domain);
  const double inner = -distance_outside(spec.target, pbar);
  double radius = 0;
  for (const auto& x : spec.domain.vertices()) radius = std::max(radius, (x - xbar).norm());
  return 0.9 * inner / radius;
}

MeshFunction initial_quadratic(const ProblemSpec& spec, const Lattice& lattice) {
  const Point2d pbar = centroid(spec.target);
  const Point2d xbar = centroid(spec.domain);
  const double sigma = initial_quadratic_curvature(spec);
  MeshFunction v(lattice.size());
  for (Index i = 0; i < lattice.size(); ++i) {
    const Point2d d = lattice.point(i) - xbar;
    v[i] = pbar.dot(d) + 0.5 * sigma * d.squaredNorm();
  }
  v.array() += spec.alpha - v[lattice.pinned_index()];
  return v;
}

double max_nodal_error(const ProblemSpec& spec, const MongeAmpereSystem& system, const MeshFunction& v) {
  if (!spec.exact) return std::numeric_limits<double>::quiet_NaN();
  const Lattice& lat = system.lattice();
  const double shift = spec.alpha - spec.exact(lat.point(lat.pinned_index()));
  double err = 0;
  for (Index i = 0; i < lat.size(); ++i)
    err = std::max(err, std::abs(v[i] - (spec.exact(lat.point(i)) + shift)));
  return err;
}

NewtonConfig make_newton_config(const MongeAmpereSystem& system, const SolveSettings& s) {
  NewtonConfig cfg;
  cfg.delta = s.delta;
  cfg.rho = s.rho;
  cfg.mode = s.mode;
  cfg.epsilon = system.default_epsilon(s.epsilon_factor);
  cfg.max_iterations = s.max_iterations;
  cfg.max_backtracks = s.max_backtracks;
  cfg.residual_tolerance = s.residual_tolerance.value_or(1e-11 * system.target_mass());
  cfg.keep_iterates = s.keep_iterates;
  cfg.record_timing = s.record_timing;
  return cfg;
}

SolveOutcome solve_problem(const ProblemSpec& spec, const SolveSettings& settings,
                           const SchemeOptions& options) {
  BuiltProblem built = build_problem(spec, options);
  const MongeAmpereSystem& sys = built.system;
  const NewtonConfig cfg = make_newton_config(sys, settings);
  const Eigen::VectorXd u0 = sys.unknowns_from_mesh(initial_quadratic(spec, sys.lattice()));
  NewtonResult result = damped_newton(sys, u0, cfg);
  MeshFunction mesh = sys.mesh_from_unknowns(result.solution);
  const double err = max_nodal_error(spec, sys, mesh);
  return {std::move(built), std::move(result), std::move(mesh), err};
}

std::vector<ConvergenceRow> run_convergence(const ProblemSpec& spec, std::span<const double> hs,
                                            const SolveSettings& settings) {
  if (!spec.exact) throw ProblemError("convergence study needs an exact solution");
  std::vector<ConvergenceRow> rows;
  for (const double h : hs) {
    ProblemSpec level = spec;
    level.h = h;
    ConvergenceRow row;
    row.h = h;
    try {
      const SolveOutcome out = solve_problem(level, settings);
      row.max_error = out.max_error;
      row.iterations = out.result.trace.steps();
      row.final_residual = out.result.trace.final_residual();
      row.converged = out.result.trace.converged;
      row.failure = out.result.trace.failure;
    } catch (const std::exception& e) {
      row.max_error = std::numeric_limits<double>::quiet_NaN();
      row.failure = e.what();
    }
    if (!rows.empty() && rows.back().max_error > 0 && row.max_error > 0)
      row.rate = std::log2(rows.back().max_error / row.max_error) / std::log2(rows.back().h / h);
    rows.push_back(row);
  }
  return rows;
}

void write_convergence_csv(std::ostream& os, std::span<const ConvergenceRow> rows) {
  os << "h,max_error,rate,iterations,final_residual\n";
  std::ostringstream line;
  for (const auto& r : rows) {
    line.str("");
    line.precision(17);
    line << r.h << ',';
    line.precision(6);
    line << std::scientific << r.max_error << ',';
    if (r.rate) line << std::fixed << std::setprecision(4) << *r.rate;
    line << ',' << r.iterations << ',' << std::scientific << std::setprecision(6) << r.final_residual;
    line.unsetf(std::ios::floatfield);
    os << line.str() << '\n';
  }
}

FdJacobian fd_jacobian_oracle(const MongeAmpereSystem& scheme, const Eigen::VectorXd& u, double step) {
  SchemeOptions fine = scheme.options();
  fine.area_rule = TriangleRule::radon7();
  fine.area_levels = 3;
  const MongeAmpereSystem system = scheme.with_options(fine);
  const Index n = system.num_unknowns();
  const Index m = system.num_equations();
  const NeighborTable& table = system.neighbors();
  const int nd = system.stencil().size();
  const ExtensionCache base = system.extend(system.mesh_from_unknowns(u));

  FdJacobian fd;
  fd.matrix.setZero(m, n);
  fd.flagged.setConstant(m, n, false);
  for (Index j = 0; j < n; ++j) {
    Eigen::VectorXd up = u, um = u;
    up[j] += step;
    um[j] -= step;
    const Evaluation ep = system.evaluate(up, false);
    const Evaluation em = system.evaluate(um, false);
    fd.matrix.col(j) = (ep.residual - em.residual) / (2 * step);
    for (Index r = 0; r < m; ++r) {
      const Index i = system.row_point(r);
      for (int k = 0; k < nd; ++k) {
        const Index ref = table.at(i, k);
        if (!NeighborTable::is_exterior(ref)) continue;
        const Index s = NeighborTable::slot(ref);
        if (ep.extension.gamma[s] != base.gamma[s] || em.extension.gamma[s] != base.gamma[s]) {
          fd.flagged(r, j) = true;
          break;
        }
      }
    }
  }
  fd.flagged_count = fd.flagged.count();
  return fd;
}

JacobianComparison compare_jacobians(const SparseMatrix& analytic, const FdJacobian& fd, double floor) {
  const Eigen::MatrixXd a = Eigen::MatrixXd(analytic);
  const Eigen::MatrixXd& f = fd.matrix;
  JacobianComparison cmp;
  for (Index r = 0; r < f.rows(); ++r) {
    const double row_max = std::max(f.row(r).cwiseAbs().maxCoeff(), a.row(r).cwiseAbs().maxCoeff());
    for (Index c = 0; c < f.cols(); ++c) {
      if (a(r, c) == 0.0 && f(r, c) == 0.0) continue;
      ++cmp.nonzeros;
      if (fd.flagged(r, c)) {
        ++cmp.flagged;
        continue;
      }
      ++cmp.compared;
      const double denom = std::max(std::abs(f(r, c)), floor * row_max);
      const double rel = denom > 0 ? std::abs(a(r, c) - f(r, c)) / denom : 0.0;
      if (rel > cmp.max_relative_error) {
        cmp.max_relative_error = rel;
        cmp.worst_row = r;
        cmp.worst_col = c;
      }
    }
  }
  cmp.flagged_fraction = cmp.nonzeros ? static_cast<double>(cmp.flagged) / cmp.nonzeros : 0.0;
  return cmp;
}

McEstimate mc_measure_oracle(const ConvexPolygond& poly, const Density& density, std::int64_t samples,
                             std::uint64_t seed) {
  if (poly.degenerate() || samples <= 0) return {};
  Point2d lo = poly[0], hi = poly[0];
  for (const auto& v : poly.vertices()) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  const double box_area = (hi - lo).prod();
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> ux(lo.x(), hi.x()), uy(lo.y(), hi.y());
  double sum = 0, sum_sq = 0;
  for (std::int64_t s = 0; s < samples; ++s) {
    const Point2d p(ux(gen), uy(gen));
    const double x = poly.contains(p, 0.0) ? density(p) : 0.0;
    sum += x;
    sum_sq += x * x;
  }
  const double n = static_cast<double>(samples);
  const double mean = sum / n;
  const double var = std::max(0.0, sum_sq / n - mean * mean);
  return {box_area * mean, box_area * std::sqrt(var / n)};
}

InvariantReport check_invariants(const MongeAmpereSystem& system, const Eigen::VectorXd& u) {
  InvariantReport rep;
  const Evaluation ev = system.evaluate(u, system.pinning() == Pinning::pinned);
  const MeshFunction v = system.mesh_from_unknowns(u);
  rep.total_measure = ev.omega.sum();
  rep.target_mass = system.target_mass();
  rep.relative_mass_defect = std::abs(rep.total_measure - rep.target_mass) / rep.target_mass;
  for (Index i = 0; i < system.lattice().size(); ++i) {
    const SubdiffPolygon sub = system.subdifferential(v, ev.extension, i);
    for (const auto& p : sub.polygon.vertices())
      rep.max_containment_violation =
          std::max(rep.max_containment_violation, distance_outside(system.target(), p));
  }
  if (system.pinning() == Pinning::pinned) rep.wcdd = wcdd_diagnostic(ev.jacobian);
  return rep;
}

double parse_mesh_size(const std::string& text) {
  auto number = [&](const std::string& s) {
    std::size_t pos = 0;
    double x = 0;
    try {
      x = std::stod(s, &pos);
    } catch (const std::exception&) {
      throw ConfigError("invalid mesh size '" + text + "'");
    }
    if (pos != s.size()) throw ConfigError("invalid mesh size '" + text + "'");
    return x;
  };
  double h = 0;
  if (const auto slash = text.find('/'); slash != std::string::npos) {
    h = number(text.substr(0, slash)) / number(text.substr(slash + 1));
  } else if (const auto caret = text.find('^'); caret != std::string::npos) {
    h = std::pow(number(text.substr(0, caret)), number(text.substr(caret + 1)));
  } else {
    h = number(text);
  }
  if (!(h > 0) || !std::isfinite(h)) throw ConfigError("mesh size must be positive: '" + text + "'");
  return h;
}

NewtonMode parse_mode(const std::string& text) {
  if (text == "theory") return NewtonMode::theory;
  if (text == "experiment") return NewtonMode::experiment;
  throw ConfigError("mode must be 'theory' or 'experiment', got '" + text + "'");
}

Pinning parse_pinning(const std::string& text) {
  if (text == "pinned") return Pinning::pinned;
  if (text == "augmented") return Pinning::augmented;
  throw ConfigError("pinning must be 'pinned' or 'augmented', got '" + text + "'");
}

SolveSettings RunConfig::settings() const {
  SolveSettings s;
  s.mode = mode;
  s.delta = delta;
  s.rho = rho;
  s.epsilon_factor = epsilon_factor;
  s.max_iterations = max_iterations;
  s.residual_tolerance = residual_tolerance;
  return s;
}

RunConfig parse_config(std::istream& is) {
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    if (value.empty()) throw ConfigError("key '" + key + "' has no value");
    if (!kv.emplace(key, value).second) throw ConfigError("duplicate key '" + key + "'");
  }

  static const char* const known[] = {"problem",        "h",        "delta",   "rho",
                                      "epsilon_factor", "mode",     "pinning", "max_iterations",
                                      "residual_tolerance", "seed", "output_dir"};
  for (const auto& [key, value] : kv)
    if (std::find_if(std::begin(known), std::end(known), [&](const char* k) { return key == k; }) ==
        std::end(known))
      throw ConfigError("unknown key '" + key + "'");
  for (const char* required : {"problem", "h"})
    if (!kv.count(required)) throw ConfigError(std::string("missing key '") + required + "'");

  auto real = [&](const std::string& key) {
    try {
      std::size_t pos = 0;
      const double x = std::stod(kv.at(key), &pos);
      if (pos != kv.at(key).size()) throw std::invalid_argument(key);
      return x;
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "' is not a number: '" + kv.at(key) + "'");
    }
  };
  auto integer = [&](const std::string& key) {
    const double x = real(key);
    if (x != std::floor(x) || x < 0) throw ConfigError("key '" + key + "' must be a non-negative integer");
    return static_cast<std::int64_t>(x);
  };

  RunConfig cfg;
  cfg.problem = kv.at("problem");
  cfg.h = parse_mesh_size(kv.at("h"));
  if (kv.count("delta")) cfg.delta = real("delta");
  if (kv.count("rho")) cfg.rho = real("rho");
  if (kv.count("epsilon_factor")) cfg.epsilon_factor = real("epsilon_factor");
  if (kv.count("mode")) cfg.mode = parse_mode(kv.at("mode"));
  if (kv.count("pinning")) cfg.pinning = parse_pinning(kv.at("pinning"));
  if (kv.count("max_iterations")) cfg.max_iterations = static_cast<int>(integer("max_iterations"));
  if (kv.count("residual_tolerance")) cfg.residual_tolerance = real("residual_tolerance");
  if (kv.count("seed")) cfg.seed = static_cast<std::uint64_t>(integer("seed"));
  if (kv.count("output_dir")) cfg.output_dir = kv.at("output_dir");

  if (!(cfg.delta >= 0 && cfg.delta < 1)) throw ConfigError("key 'delta' must lie in [0, 1)");
  if (!(cfg.rho > 0 && cfg.rho < 1)) throw ConfigError("key 'rho' must lie in (0, 1)");
  if (!(cfg.epsilon_factor > 0)) throw ConfigError("key 'epsilon_factor' must be positive");
  if (cfg.residual_tolerance && !(*cfg.residual_tolerance >= 0))
    throw ConfigError("key 'residual_tolerance' must be non-negative");
  return cfg;
}

}  // namespace mongecone
