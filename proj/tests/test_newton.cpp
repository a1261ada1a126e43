#include "mongecone/newton.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace mongecone;

namespace {

const ConvexPolygond kUnit = ConvexPolygond::box(0, 1, 0, 1);
const ConvexPolygond kSquare = ConvexPolygond::box(-1, 1, -1, 1);

double vstar(const Point2d& x) {
  return 0.6 * x.x() * x.x() + 0.25 * x.x() * x.y() + 0.45 * x.y() * x.y() - 0.55 * x.x() - 0.4 * x.y() +
         0.15 * x.x() * x.x() * x.x();
}

// Nine points, uniform density on [-1,1]^2 and mu taken from vstar itself.
struct Toy {
  MongeAmpereSystem system;
  MeshFunction exact;  // vstar shifted to vanish at the pin
};

Toy make_toy(Pinning pinning = Pinning::pinned) {
  Lattice lat = build_lattice(kUnit, 0.25);
  const std::vector<Eigen::Vector2i> dirs = {{1, 0}, {0, 1}, {1, 1}, {1, -1}};
  Stencil st = build_stencil(dirs, kSquare);
  const auto cells = partition_cells(lat);
  std::vector<double> areas;
  for (const auto& c : cells) areas.push_back(area(c));
  MeshFunction v(lat.size());
  for (Index i = 0; i < lat.size(); ++i) v[i] = vstar(lat.point(i));
  v.array() -= v[lat.pinned_index()];
  MongeAmpereSystem sys(lat, st, kSquare, Density::constant(1.0), Eigen::VectorXd::Zero(lat.size()), areas,
                        pinning, 0.0);
  const ExtensionCache ext = sys.extend(v);
  Eigen::VectorXd mu(lat.size());
  for (Index i = 0; i < lat.size(); ++i) mu[i] = sys.ma_measure(v, ext, i);
  return {sys.with_rhs(mu), v};
}

MeshFunction flat_guess(const Lattice& lat) {
  MeshFunction v(lat.size());
  for (Index i = 0; i < lat.size(); ++i) v[i] = 0.5 * 0.8 * (lat.point(i) - Point2d(0.5, 0.5)).squaredNorm();
  return v.array() - v[lat.pinned_index()];
}

NewtonConfig toy_config(const MongeAmpereSystem& sys) {
  NewtonConfig cfg = NewtonConfig::experiment();
  cfg.epsilon = sys.default_epsilon();
  cfg.residual_tolerance = 1e-13;
  return cfg;
}

}  // namespace

TEST_CASE("sparse linear solve") {
  Eigen::MatrixXd a(3, 3);
  a << 4, -1, 0, -1, 4, -1, 0, -1, 4;
  const Eigen::VectorXd x(Eigen::Vector3d(1, -2, 3));
  const LinearSolveResult r = solve_linear(a.sparseView(), a * x);
  CHECK((r.solution - x).norm() < 1e-14);
  CHECK(r.relative_residual < 1e-14);

  Eigen::MatrixXd singular(2, 2);
  singular << 1, 1, 1, 1;
  CHECK_THROWS_AS(solve_linear(singular.sparseView(), Eigen::Vector2d(1, 2)), LinearSolveError);
  CHECK_THROWS_AS(solve_linear(singular.sparseView(), Eigen::Vector3d(1, 2, 3)), LinearSolveError);
}

TEST_CASE("config validation") {
  NewtonConfig cfg;
  cfg.epsilon = 1e-3;
  CHECK_NOTHROW(cfg.validate());
  cfg.delta = 1.0;
  CHECK_THROWS(cfg.validate());
  cfg.delta = 0.1;
  cfg.rho = 1.0;
  CHECK_THROWS(cfg.validate());
  cfg.rho = 0.5;
  cfg.epsilon = 0;
  CHECK_THROWS(cfg.validate());
  const NewtonConfig e = NewtonConfig::experiment();
  CHECK(e.delta == 0.0);
  CHECK(e.rho == 0.5);
  CHECK(e.mode == NewtonMode::experiment);
}

TEST_CASE("manufactured toy problem") {
  for (const Pinning pinning : {Pinning::pinned, Pinning::augmented}) {
    const Toy toy = make_toy(pinning);
    const MongeAmpereSystem& sys = toy.system;
    const NewtonConfig cfg = toy_config(sys);
    const NewtonResult res = damped_newton(sys, sys.unknowns_from_mesh(flat_guess(sys.lattice())), cfg);
    const NewtonTrace& tr = res.trace;
    REQUIRE(tr.converged);
    CHECK(tr.steps() <= 25);
    CHECK((sys.mesh_from_unknowns(res.solution) - toy.exact).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(std::abs(sys.source_shift(res.solution)) < 1e-12);

    // Strict decrease and full steps at the end.
    for (std::size_t k = 1; k < tr.iterations.size(); ++k)
      CHECK(tr.iterations[k].residual_norm < tr.iterations[k - 1].residual_norm);
    const auto n = tr.iterations.size();
    REQUIRE(n >= 4);
    for (std::size_t k = n - 4; k < n - 1; ++k) CHECK(tr.iterations[k].i_k == 0);
    CHECK(tr.iterations.back().i_k == -1);
  }
}

TEST_CASE("starting at the solution takes no step") {
  const Toy toy = make_toy();
  const NewtonResult res = damped_newton(toy.system, toy.system.unknowns_from_mesh(toy.exact), toy_config(toy.system));
  CHECK(res.trace.converged);
  CHECK(res.trace.steps() == 0);
  CHECK(res.trace.iterations.size() == 1);
}

TEST_CASE("theory mode") {
  const Toy toy = make_toy();
  NewtonConfig cfg = toy_config(toy.system);
  cfg.mode = NewtonMode::theory;
  cfg.delta = 0.1;

  SUBCASE("inadmissible start is rejected") {
    // Nearly flat: every subdifferential is tiny.
    MeshFunction v = flat_guess(toy.system.lattice()) * 0.01;
    CHECK_THROWS_AS(damped_newton(toy.system, toy.system.unknowns_from_mesh(v), cfg), std::invalid_argument);
  }
  SUBCASE("admissible start stays admissible") {
    MeshFunction v = toy.exact;
    for (Index i = 0; i < v.size(); ++i) v[i] += 0.003 * std::sin(3.0 * static_cast<double>(i));
    const Eigen::VectorXd u0 = toy.system.unknowns_from_mesh(v);
    REQUIRE(is_admissible(toy.system.evaluate(u0, false), cfg.epsilon));
    NewtonConfig keep = cfg;
    keep.keep_iterates = true;
    const NewtonResult res = damped_newton(toy.system, u0, keep);
    CHECK(res.trace.converged);
    for (const auto& rec : res.trace.iterations) {
      CHECK(rec.inadmissible_rows == 0);
      CHECK(is_admissible(toy.system.evaluate(rec.iterate, false), cfg.epsilon));
    }
    for (std::size_t k = 1; k < res.trace.iterations.size(); ++k) {
      const auto& prev = res.trace.iterations[k - 1];
      CHECK(res.trace.iterations[k].residual_norm <=
            (1 - cfg.delta * std::pow(cfg.rho, prev.i_k)) * prev.residual_norm);
    }
  }
}

TEST_CASE("line search rejects a step into empty subdifferentials") {
  const Toy toy = make_toy();
  const MongeAmpereSystem& sys = toy.system;
  NewtonConfig cfg = toy_config(sys);
  cfg.mode = NewtonMode::theory;
  const Eigen::VectorXd u = sys.unknowns_from_mesh(toy.exact);
  const Evaluation cur = sys.evaluate(u, false);
  // A huge step that turns the centre into a spike.
  Eigen::VectorXd d = Eigen::VectorXd::Zero(u.size());
  d[sys.column_of(*sys.lattice().find(Eigen::Vector2i(2, 2)))] = -50.0;
  const LineSearchResult ls = line_search(sys, u, cur, d, cfg);
  REQUIRE_FALSE(ls.trials.empty());
  CHECK_FALSE(ls.trials.front().admissible);
  CHECK(ls.trials.front().violations > 0);
  // The residual at the solution is already ~0, so no trial can decrease it.
  CHECK_FALSE(ls.accepted);
  CHECK(ls.trials.size() == static_cast<std::size_t>(cfg.max_backtracks + 1));
}

TEST_CASE("iteration cap reports failure") {
  const Toy toy = make_toy();
  NewtonConfig cfg = toy_config(toy.system);
  cfg.max_iterations = 1;
  const NewtonResult res = damped_newton(toy.system, toy.system.unknowns_from_mesh(flat_guess(toy.system.lattice())), cfg);
  CHECK_FALSE(res.trace.converged);
  CHECK_FALSE(res.trace.failure.empty());
  CHECK(res.trace.steps() == 1);
}

TEST_CASE("exhausted line search is reported") {
  const Toy toy = make_toy();
  NewtonConfig cfg = toy_config(toy.system);
  cfg.residual_tolerance = 0;
  cfg.max_backtracks = 3;
  // Newton reaches round-off, after which no trial improves on it.
  MeshFunction v = toy.exact;
  v[4] += 1e-6;
  const NewtonResult res = damped_newton(toy.system, toy.system.unknowns_from_mesh(v), cfg);
  REQUIRE_FALSE(res.trace.converged);
  CHECK(res.trace.failure.find("exceeded 3 backtracks") != std::string::npos);
  CHECK(res.trace.failure.find("smallest trial |G|") != std::string::npos);
  CHECK(res.trace.iterations.back().trials.size() == 4);
}

TEST_CASE("pin is preserved") {
  const Toy toy = make_toy();
  NewtonConfig cfg = toy_config(toy.system);
  cfg.keep_iterates = true;
  const NewtonResult res = damped_newton(toy.system, toy.system.unknowns_from_mesh(flat_guess(toy.system.lattice())), cfg);
  for (const auto& rec : res.trace.iterations)
    CHECK(toy.system.mesh_from_unknowns(rec.iterate)[toy.system.pinned_index()] == 0.0);
}

TEST_CASE("trace serialization is deterministic") {
  const Toy toy = make_toy();
  const NewtonConfig cfg = toy_config(toy.system);
  const Eigen::VectorXd u0 = toy.system.unknowns_from_mesh(flat_guess(toy.system.lattice()));
  std::ostringstream a, b;
  damped_newton(toy.system, u0, cfg).trace.write_jsonl(a);
  damped_newton(toy.system, u0, cfg).trace.write_jsonl(b);
  CHECK(a.str() == b.str());

  std::istringstream lines(a.str());
  std::string first, last, line;
  std::getline(lines, first);
  last = first;
  while (std::getline(lines, line)) last = line;
  CHECK(first.rfind("{\"k\":0,\"residual_norm\":", 0) == 0);
  CHECK(first.find("\"step_norm\"") != std::string::npos);
  CHECK(first.find("\"backtracks\"") != std::string::npos);
  CHECK(first.find("\"wall_time_ms\":0.0") != std::string::npos);
  CHECK(last.find("\"i_k\":null") != std::string::npos);
}
