#include "mongecone/newton.hpp"

#include <Eigen/SparseLU>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

namespace mongecone {

LinearSolveResult solve_linear(const SparseMatrix& jacobian, const Eigen::VectorXd& rhs) {
  if (jacobian.rows() != jacobian.cols() || jacobian.rows() != rhs.size())
    throw LinearSolveError("linear system dimensions do not match");
  Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu;
  lu.analyzePattern(jacobian);
  lu.factorize(jacobian);
  if (lu.info() != Eigen::Success)
    throw LinearSolveError("sparse LU factorization failed: " + lu.lastErrorMessage());

  LinearSolveResult out;
  out.solution = lu.solve(rhs);
  const double gnorm = rhs.norm();
  if (gnorm == 0.0) return out;
  Eigen::VectorXd r = rhs - jacobian * out.solution;
  out.relative_residual = r.norm() / gnorm;
  if (out.relative_residual > 1e-12) {
    out.solution += lu.solve(r);
    r = rhs - jacobian * out.solution;
    out.relative_residual = r.norm() / gnorm;
  }
  if (!out.solution.allFinite()) throw LinearSolveError("linear solve produced non-finite values");
  return out;
}

void NewtonConfig::validate() const {
  if (!(delta >= 0 && delta < 1)) throw std::invalid_argument("delta must lie in [0, 1)");
  if (!(rho > 0 && rho < 1)) throw std::invalid_argument("rho must lie in (0, 1)");
  if (!(epsilon > 0)) throw std::invalid_argument("epsilon must be positive");
  if (max_iterations < 0 || max_backtracks < 0)
    throw std::invalid_argument("iteration limits must be non-negative");
}

NewtonConfig NewtonConfig::experiment() {
  NewtonConfig cfg;
  cfg.delta = 0.0;
  cfg.rho = 0.5;
  cfg.mode = NewtonMode::experiment;
  return cfg;
}

int NewtonTrace::steps() const {
  int n = 0;
  for (const auto& rec : iterations) n += rec.i_k >= 0;
  return n;
}

double NewtonTrace::final_residual() const {
  return iterations.empty() ? 0.0 : iterations.back().residual_norm;
}

void NewtonTrace::write_jsonl(std::ostream& os) const {
  for (const auto& rec : iterations) {
    nlohmann::ordered_json j;
    j["k"] = rec.k;
    j["residual_norm"] = rec.residual_norm;
    if (rec.i_k >= 0)
      j["i_k"] = rec.i_k;
    else
      j["i_k"] = nullptr;
    j["step_norm"] = rec.step_norm;
    j["backtracks"] = rec.backtracks;
    j["wall_time_ms"] = rec.wall_time_ms;
    os << j.dump() << '\n';
  }
}

bool is_admissible(const Evaluation& ev, double epsilon) {
  return (ev.residual.array() > -epsilon).all();
}

Index membership_violations(const MongeAmpereSystem& system, const Evaluation& current,
                            const Evaluation& trial, const NewtonConfig& cfg) {
  const bool strict = cfg.mode == NewtonMode::theory || is_admissible(current, cfg.epsilon);
  Index bad = 0;
  for (Index r = 0; r < system.num_equations(); ++r) {
    if (strict)
      bad += !(trial.residual[r] > -cfg.epsilon);
    else
      bad += !(trial.omega[system.row_point(r)] > 0);
  }
  return bad;
}

LineSearchResult line_search(const MongeAmpereSystem& system, const Eigen::VectorXd& u,
                             const Evaluation& current, const Eigen::VectorXd& direction,
                             const NewtonConfig& cfg) {
  LineSearchResult out;
  const double g0 = current.residual.norm();
  double tau = 1.0;
  for (int i = 0; i <= cfg.max_backtracks; ++i, tau *= cfg.rho) {
    Eigen::VectorXd trial = u - tau * direction;
    Evaluation ev = system.evaluate(trial, false);
    TrialRecord rec;
    rec.i = i;
    rec.residual_norm = ev.residual.norm();
    rec.violations = membership_violations(system, current, ev, cfg);
    rec.admissible = rec.violations == 0;
    double bound = (1.0 - cfg.delta * tau) * g0;
    // With delta = 0 the test alone would accept stagnation.
    if (cfg.delta == 0.0) bound = std::min(bound, (1.0 - 1e-16) * g0);
    rec.decrease = rec.residual_norm <= bound;
    out.trials.push_back(rec);
    if (rec.admissible && rec.decrease) {
      out.accepted = true;
      out.i_k = i;
      out.next = std::move(trial);
      out.next_eval = std::move(ev);
      return out;
    }
  }
  return out;
}

NewtonResult damped_newton(const MongeAmpereSystem& system, const Eigen::VectorXd& u0,
                           const NewtonConfig& cfg) {
  cfg.validate();
  using clock = std::chrono::steady_clock;

  NewtonResult result;
  NewtonTrace& trace = result.trace;
  Eigen::VectorXd u = u0;
  Evaluation ev = system.evaluate(u, true);

  Index inadmissible = 0;
  for (Index r = 0; r < ev.residual.size(); ++r) inadmissible += !(ev.residual[r] > -cfg.epsilon);
  trace.initial_admissible = inadmissible == 0;
  if (!trace.initial_admissible) {
    std::ostringstream os;
    os << "initial guess is outside the admissible set: " << inadmissible << " of "
       << ev.residual.size() << " rows have G_l <= -epsilon";
    if (cfg.mode == NewtonMode::theory) throw std::invalid_argument(os.str());
    trace.warnings.push_back(os.str());
  }

  for (int k = 0;; ++k) {
    const auto start = clock::now();
    IterationRecord rec;
    rec.k = k;
    rec.residual_norm = ev.residual.norm();
    rec.gamma_ties = ev.extension.ties;
    for (Index r = 0; r < ev.residual.size(); ++r) rec.inadmissible_rows += !(ev.residual[r] > -cfg.epsilon);
    if (cfg.keep_iterates) rec.iterate = u;

    if (rec.residual_norm <= cfg.residual_tolerance) {
      trace.converged = true;
      trace.iterations.push_back(std::move(rec));
      break;
    }
    if (k >= cfg.max_iterations) {
      trace.failure = "maximum number of iterations reached";
      trace.iterations.push_back(std::move(rec));
      break;
    }
    if (ev.empty_rows > 0) {
      throw std::runtime_error("accepted iterate " + std::to_string(k) + " has " +
                               std::to_string(ev.empty_rows) + " empty subdifferentials");
    }

    LinearSolveResult step;
    try {
      step = solve_linear(ev.jacobian, ev.residual);
    } catch (const LinearSolveError& e) {
      trace.failure = e.what();
      trace.iterations.push_back(std::move(rec));
      break;
    }
    rec.linear_residual = step.relative_residual;
    if (cfg.keep_iterates) rec.direction = step.solution;

    LineSearchResult ls = line_search(system, u, ev, step.solution, cfg);
    rec.trials = ls.trials;
    for (const auto& t : ls.trials)
      if (!t.admissible) rec.membership_violations += t.violations;
    if (!ls.accepted) {
      std::ostringstream os;
      double best = std::numeric_limits<double>::infinity();
      for (const auto& t : ls.trials) best = std::min(best, t.residual_norm);
      os << "line search exceeded " << cfg.max_backtracks << " backtracks at iteration " << k
         << ": |G| = " << rec.residual_norm << ", smallest trial |G| = " << best << ", first trial |G| = "
         << (ls.trials.empty() ? 0.0 : ls.trials.front().residual_norm) << ", membership violations "
         << rec.membership_violations;
      trace.failure = os.str();
      trace.iterations.push_back(std::move(rec));
      break;
    }
    rec.i_k = ls.i_k;
    rec.backtracks = ls.i_k;
    rec.step_norm = std::pow(cfg.rho, ls.i_k) * step.solution.norm();
    u = std::move(ls.next);
    ev = system.evaluate(u, true);
    if (cfg.record_timing)
      rec.wall_time_ms = std::chrono::duration<double, std::milli>(clock::now() - start).count();
    trace.iterations.push_back(std::move(rec));
  }
  result.solution = std::move(u);
  return result;
}

}  // namespace mongecone
