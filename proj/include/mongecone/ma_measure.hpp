#pragma once

// The discrete Monge-Ampere system: slopes along stencil directions,
// subdifferential polygons, their R-measures, the residual map and its
// analytic sparse Jacobian.

#include "mongecone/geometry2d.hpp"
#include "mongecone/lattice.hpp"
#include "mongecone/quadrature.hpp"

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <optional>
#include <vector>

namespace mongecone {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// How the additive constant of the solution is removed.
///  - pinned: v(x1) = alpha is data, one equation per remaining point.
///  - augmented: v(x1) = alpha and an extra unknown c shifting the source,
///    one equation per lattice point: omega_i - mu_i - c * |C_i|.
enum class Pinning { pinned, augmented };

/// The area rule integrates R over the subdifferential polygons; the cell
/// right-hand sides always use the degree 2 rule.
struct SchemeOptions {
  TriangleRule area_rule = TriangleRule::radon7();
  int area_levels = 0;  ///< uniform refinement of each fan triangle, 4^levels pieces
  SegmentRule edge_rule = SegmentRule::gauss_legendre4();
  double tol = kDefaultTolerance;
};

/// lambda[k] = (v(x + h e_k) - v(x)) / h, and the lattice index the
/// neighbor value depends on (the neighbor or its Gamma image).
struct LambdaVector {
  Eigen::VectorXd lambda;
  std::vector<Index> source;
};

/// Q(lambda) = {p : p . e <= lambda_e for all e}, with the facet supported
/// by each direction (absent when the direction is inactive).
struct SubdiffPolygon {
  ConvexPolygond polygon;
  std::vector<std::optional<Segmentd>> facets;
  Index point = -1;
};

struct Evaluation {
  Eigen::VectorXd residual;  ///< one entry per equation
  Eigen::VectorXd omega;     ///< measure at every lattice point
  ExtensionCache extension;
  SparseMatrix jacobian;     ///< filled only when requested
  Index empty_rows = 0;      ///< equations whose subdifferential has zero area
};

class MongeAmpereSystem {
 public:
  MongeAmpereSystem(Lattice lattice, Stencil stencil, ConvexPolygond target, Density density,
                    Eigen::VectorXd rhs, std::vector<double> cell_areas, Pinning pinning, double alpha,
                    SchemeOptions options = {});

  const Lattice& lattice() const { return lattice_; }
  const Stencil& stencil() const { return stencil_; }
  const ConvexPolygond& target() const { return target_; }
  const AsymptoticCone& cone() const { return cone_; }
  const Density& density() const { return density_; }
  const NeighborTable& neighbors() const { return table_; }
  const SchemeOptions& options() const { return options_; }
  const Eigen::VectorXd& rhs() const { return rhs_; }
  const std::vector<double>& cell_areas() const { return cell_areas_; }
  Pinning pinning() const { return pinning_; }
  double alpha() const { return alpha_; }
  Index pinned_index() const { return lattice_.pinned_index(); }
  /// Integral of the density over the target, by refined high-order quadrature.
  double target_mass() const { return target_mass_; }

  Index num_unknowns() const;
  Index num_equations() const { return static_cast<Index>(row_points_.size()); }
  /// Lattice point of equation r.
  Index row_point(Index r) const { return row_points_[r]; }
  /// Unknown column of lattice point i, -1 for the pinned point.
  Index column_of(Index i) const { return columns_[i]; }

  /// Mesh function with v(x1) = alpha and the remaining values from u.
  MeshFunction mesh_from_unknowns(const Eigen::VectorXd& u) const;
  /// Unknown vector for v (its pinned entry is ignored); c is the source
  /// shift in augmented mode.
  Eigen::VectorXd unknowns_from_mesh(const MeshFunction& v, double c = 0) const;
  /// Source shift carried by u (0 in pinned mode).
  double source_shift(const Eigen::VectorXd& u) const;

  /// Same system with another right-hand side.
  MongeAmpereSystem with_rhs(Eigen::VectorXd rhs) const;
  MongeAmpereSystem with_options(SchemeOptions options) const;
  /// R-measure of one polygon under the configured area rule.
  double polygon_measure(const ConvexPolygond& poly) const;

  ExtensionCache extend(const MeshFunction& v) const;
  LambdaVector lambda_vector(const MeshFunction& v, const ExtensionCache& ext, Index x) const;
  SubdiffPolygon subdifferential(const MeshFunction& v, const ExtensionCache& ext, Index x) const;
  SubdiffPolygon subdifferential(const LambdaVector& lambda, Index x) const;
  double ma_measure(const MeshFunction& v, const ExtensionCache& ext, Index x) const;

  /// Residual (and the Jacobian when asked) at the unknown vector u. The
  /// extension and its Gamma selections are computed once and shared by
  /// residual and Jacobian.
  Evaluation evaluate(const Eigen::VectorXd& u, bool with_jacobian) const;
  Eigen::VectorXd residual(const Eigen::VectorXd& u) const { return evaluate(u, false).residual; }
  SparseMatrix jacobian(const Eigen::VectorXd& u) const { return evaluate(u, true).jacobian; }

  /// 0.49 h^2 min_i (mu_i / |C_i|) for the default factor.
  double default_epsilon(double factor = 0.49) const;

 private:
  Lattice lattice_;
  Stencil stencil_;
  ConvexPolygond target_;
  AsymptoticCone cone_;
  Density density_;
  Eigen::VectorXd rhs_;
  std::vector<double> cell_areas_;
  Pinning pinning_;
  double alpha_;
  SchemeOptions options_;
  NeighborTable table_;
  std::vector<Index> row_points_;
  std::vector<Index> columns_;
  std::vector<double> inv_norms_;  // 1 / |e_k|
  std::vector<int> extra_dirs_;    // non-canonical directions, clipped after the box
  int box_dirs_[4];                // +x, -x, +y, -y
  double target_mass_ = 0;
};

/// Row-wise weak diagonal dominance and chaining to strictly dominant rows.
struct WcddReport {
  bool weakly_dominant = false;
  bool chained = false;
  bool passed() const { return weakly_dominant && chained; }
  Eigen::VectorXd slack;          ///< |a_ii| - sum_{j != i} |a_ij|
  Eigen::VectorXd row_scale;      ///< |a_ii| + sum_{j != i} |a_ij|
  std::vector<int> path_length;   ///< graph distance to a strictly dominant row, -1 if none
  Index strict_rows = 0;
  Index worst_row = -1;           ///< most negative relative slack
  double worst_relative_slack = 0;
  int max_path_length = 0;
};

/// Weak dominance holds when slack >= -tol * row_scale; a row is strictly
/// dominant when slack > tol * row_scale.
WcddReport wcdd_diagnostic(const SparseMatrix& matrix, double tol = 1e-12);

}  // namespace mongecone
