#pragma once

// Problem definitions, initial guesses, solve and convergence drivers,
// verification oracles and the run configuration used by the CLI.

#include "mongecone/geometry2d.hpp"
#include "mongecone/lattice.hpp"
#include "mongecone/ma_measure.hpp"
#include "mongecone/newton.hpp"
#include "mongecone/quadrature.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mongecone {

class ProblemError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ProblemSpec {
  std::string name;
  ConvexPolygond domain;
  ConvexPolygond target;
  Density density;  ///< R on the target
  Density source;   ///< f on the domain; unused when `manufactured` is set
  /// Exact solution and gradient, when known.
  std::function<double(const Point2d&)> exact;
  std::function<Point2d(const Point2d&)> exact_gradient;
  /// When set, mu_i is the discrete measure of this function at x_i instead
  /// of the cell integral of f, so it solves the discrete problem exactly.
  std::function<double(const Point2d&)> manufactured;
  std::vector<Eigen::Vector2i> stencil;
  double h = 1.0 / 64;
  Point2d offset = Point2d::Zero();
  std::optional<Point2d> pin;
  double alpha = 0;
  Pinning pinning = Pinning::pinned;
};

/// Unit square onto the parallelogram spanned by (1,1) and (1,2), exact
/// solution x^2/2 + xy + y^2, R(p) = exp(-|p|^2 / 2), 16-direction stencil.
ProblemSpec builtin_problem_s5();
/// Nine lattice points (h = 1/4), uniform density on [-1,1]^2 and a
/// manufactured convex solution.
ProblemSpec builtin_problem_toy();
/// "s5" or "toy"; throws ProblemError otherwise.
ProblemSpec builtin_problem(const std::string& name);

struct BuiltProblem {
  MongeAmpereSystem system;
  std::vector<ConvexPolygond> cells;
  double source_mass = 0;  ///< sum of mu_i
  double target_mass = 0;  ///< integral of R over the target
};

/// Lattice, stencil, cells and right-hand side. Rejects the problem with a
/// ProblemError when the source and target masses differ by more than 1e-6
/// relative.
BuiltProblem build_problem(const ProblemSpec& spec, const SchemeOptions& options = {});

/// v0(x) = pbar . (x - xbar) + sigma/2 |x - xbar|^2 + const with pbar the
/// target centroid, xbar the domain centroid and sigma small enough for the
/// gradient image to stay inside the target; v0(x1) = alpha.
MeshFunction initial_quadratic(const ProblemSpec& spec, const Lattice& lattice);
/// The slope factor sigma used by initial_quadratic.
double initial_quadratic_curvature(const ProblemSpec& spec);

/// max over lattice points of |v - (u - u(x1) + alpha)|.
double max_nodal_error(const ProblemSpec& spec, const MongeAmpereSystem& system, const MeshFunction& v);

struct SolveSettings {
  NewtonMode mode = NewtonMode::experiment;
  double delta = 0.0;
  double rho = 0.5;
  double epsilon_factor = 0.49;
  int max_iterations = 100;
  std::optional<double> residual_tolerance;  ///< default 1e-11 * target mass
  int max_backtracks = 60;
  bool keep_iterates = false;
  bool record_timing = false;
};

NewtonConfig make_newton_config(const MongeAmpereSystem& system, const SolveSettings& settings);

struct SolveOutcome {
  BuiltProblem problem;
  NewtonResult result;
  MeshFunction solution;
  double max_error = 0;  ///< NaN without an exact solution
};

SolveOutcome solve_problem(const ProblemSpec& spec, const SolveSettings& settings,
                           const SchemeOptions& options = {});

struct ConvergenceRow {
  double h = 0;
  double max_error = 0;
  std::optional<double> rate;
  int iterations = 0;
  double final_residual = 0;
  bool converged = false;
  std::string failure;
};

/// One solve per mesh size; a failing level is recorded and the sweep goes on.
std::vector<ConvergenceRow> run_convergence(const ProblemSpec& spec, std::span<const double> hs,
                                            const SolveSettings& settings);
void write_convergence_csv(std::ostream& os, std::span<const ConvergenceRow> rows);

/// Central differences of the residual, column by column, with the polygon
/// measures integrated on a refined triangulation so that the quadrature
/// error of the scheme does not leak into the derivative. Entries of rows
/// whose Gamma selections change under the perturbation are flagged.
struct FdJacobian {
  Eigen::MatrixXd matrix;
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> flagged;
  Index flagged_count = 0;
};
FdJacobian fd_jacobian_oracle(const MongeAmpereSystem& system, const Eigen::VectorXd& u, double step);

struct JacobianComparison {
  double max_relative_error = 0;
  Index compared = 0;
  Index flagged = 0;
  Index nonzeros = 0;  ///< entries nonzero in either matrix
  double flagged_fraction = 0;
  Index worst_row = -1;
  Index worst_col = -1;
};
/// Relative error |a - f| / max(|f|, floor * max_j |f_rj|) over unflagged
/// entries.
JacobianComparison compare_jacobians(const SparseMatrix& analytic, const FdJacobian& fd,
                                     double floor = 1e-3);

struct McEstimate {
  double estimate = 0;
  double sigma = 0;
};
/// Rejection sampling of the density over the polygon's bounding box.
McEstimate mc_measure_oracle(const ConvexPolygond& poly, const Density& density, std::int64_t samples,
                             std::uint64_t seed);

/// Mass conservation, subdifferential containment and WCDD structure at one
/// mesh function.
struct InvariantReport {
  double total_measure = 0;
  double target_mass = 0;
  double relative_mass_defect = 0;
  double max_containment_violation = 0;  ///< largest distance of a vertex outside the target
  WcddReport wcdd;
};
InvariantReport check_invariants(const MongeAmpereSystem& system, const Eigen::VectorXd& u);

/// Signed distance outside a convex polygon (<= 0 inside).
double distance_outside(const ConvexPolygond& poly, const Point2d& p);

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Flat `key = value` run configuration; '#' starts a comment.
struct RunConfig {
  std::string problem;
  double h = 0;
  double delta = 0.0;
  double rho = 0.5;
  double epsilon_factor = 0.49;
  NewtonMode mode = NewtonMode::experiment;
  Pinning pinning = Pinning::pinned;
  int max_iterations = 100;
  std::optional<double> residual_tolerance;
  std::uint64_t seed = 1;
  std::string output_dir = ".";

  SolveSettings settings() const;
};

/// Required keys: problem, h. Throws ConfigError naming the offending key.
RunConfig parse_config(std::istream& is);
/// "1/64", "0.015625" or "2^-6".
double parse_mesh_size(const std::string& text);
NewtonMode parse_mode(const std::string& text);
Pinning parse_pinning(const std::string& text);

}  // namespace mongecone
