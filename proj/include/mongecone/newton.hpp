#pragma once

// Damped Newton iteration with backtracking restricted to the admissible
// set {G_l > -epsilon}.

#include "mongecone/ma_measure.hpp"

#include <Eigen/Core>

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace mongecone {

class LinearSolveError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LinearSolveResult {
  Eigen::VectorXd solution;
  double relative_residual = 0;  ///< |J d - g| / |g|
};

/// Sparse LU solve of J d = g, with one step of iterative refinement when
/// the first solve misses |J d - g| <= 1e-12 |g|. Throws LinearSolveError
/// when the factorization breaks down.
LinearSolveResult solve_linear(const SparseMatrix& jacobian, const Eigen::VectorXd& rhs);

/// theory: the initial guess must be admissible and every trial must satisfy
/// G_l > -epsilon. experiment: an inadmissible initial guess is accepted
/// with a warning, and until an iterate enters the admissible set trials
/// only need nonempty subdifferentials at every row; from then on the
/// theory test applies.
enum class NewtonMode { theory, experiment };

struct NewtonConfig {
  double delta = 0.1;
  double rho = 0.5;
  double epsilon = 0;
  int max_iterations = 100;
  double residual_tolerance = 0;
  int max_backtracks = 60;
  NewtonMode mode = NewtonMode::theory;
  bool keep_iterates = false;  ///< store iterates and directions in the trace
  bool record_timing = false;  ///< wall_time_ms stays 0 unless set

  void validate() const;
  /// delta = 0, rho = 1/2, experiment mode.
  static NewtonConfig experiment();
};

struct TrialRecord {
  int i = 0;
  double residual_norm = 0;
  bool admissible = false;
  Index violations = 0;  ///< rows failing the membership test
  bool decrease = false;
};

struct IterationRecord {
  int k = 0;
  double residual_norm = 0;
  int i_k = -1;  ///< -1 on the terminal record
  double step_norm = 0;
  int backtracks = 0;
  Index membership_violations = 0;  ///< summed over rejected trials
  double linear_residual = 0;
  double wall_time_ms = 0;
  Index inadmissible_rows = 0;  ///< rows of this iterate with G_l <= -epsilon
  Index gamma_ties = 0;
  std::vector<TrialRecord> trials;
  Eigen::VectorXd iterate;    ///< with keep_iterates
  Eigen::VectorXd direction;  ///< with keep_iterates
};

struct NewtonTrace {
  std::vector<IterationRecord> iterations;
  bool converged = false;
  bool initial_admissible = true;
  std::string failure;
  std::vector<std::string> warnings;

  /// Number of Newton steps taken.
  int steps() const;
  double final_residual() const;
  /// One JSON object per line with k, residual_norm, i_k, step_norm,
  /// backtracks, wall_time_ms.
  void write_jsonl(std::ostream& os) const;
};

struct NewtonResult {
  Eigen::VectorXd solution;  ///< unknown vector of the final iterate
  NewtonTrace trace;
};

/// G_l > -epsilon for every row.
bool is_admissible(const Evaluation& ev, double epsilon);

/// Membership of a trial point given the current iterate, as used by the
/// line search. Returns the number of violating rows.
Index membership_violations(const MongeAmpereSystem& system, const Evaluation& current,
                            const Evaluation& trial, const NewtonConfig& cfg);

struct LineSearchResult {
  bool accepted = false;
  int i_k = -1;
  Eigen::VectorXd next;
  Evaluation next_eval;
  std::vector<TrialRecord> trials;
};

/// Backtracking along u - rho^i d, i = 0, 1, ..., max_backtracks.
LineSearchResult line_search(const MongeAmpereSystem& system, const Eigen::VectorXd& u,
                             const Evaluation& current, const Eigen::VectorXd& direction,
                             const NewtonConfig& cfg);

/// Throws std::invalid_argument in theory mode when u0 is inadmissible.
/// Non-convergence is reported through trace.converged and trace.failure.
NewtonResult damped_newton(const MongeAmpereSystem& system, const Eigen::VectorXd& u0,
                           const NewtonConfig& cfg);

}  // namespace mongecone
