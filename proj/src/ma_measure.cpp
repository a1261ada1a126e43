#include "mongecone/ma_measure.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <stdexcept>

namespace mongecone {

MongeAmpereSystem::MongeAmpereSystem(Lattice lattice, Stencil stencil, ConvexPolygond target,
                                     Density density, Eigen::VectorXd rhs,
                                     std::vector<double> cell_areas, Pinning pinning, double alpha,
                                     SchemeOptions options)
    : lattice_(std::move(lattice)),
      stencil_(std::move(stencil)),
      target_(std::move(target)),
      cone_(target_),
      density_(std::move(density)),
      rhs_(std::move(rhs)),
      cell_areas_(std::move(cell_areas)),
      pinning_(pinning),
      alpha_(alpha),
      options_(std::move(options)),
      table_(lattice_, stencil_) {
  const Index n = lattice_.size();
  if (rhs_.size() != n || static_cast<Index>(cell_areas_.size()) != n)
    throw std::invalid_argument("right-hand side and cell areas must have one entry per lattice point");

  columns_.assign(n, -1);
  Index col = 0;
  for (Index i = 0; i < n; ++i) {
    if (i != lattice_.pinned_index()) columns_[i] = col++;
    if (pinning_ == Pinning::augmented || i != lattice_.pinned_index()) row_points_.push_back(i);
  }

  const Eigen::Vector2i canonical[4] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
  for (int c = 0; c < 4; ++c) box_dirs_[c] = stencil_.find(canonical[c]);
  for (int k = 0; k < stencil_.size(); ++k) {
    inv_norms_.push_back(1.0 / stencil_[k].cast<double>().norm());
    if (std::find(std::begin(box_dirs_), std::end(box_dirs_), k) == std::end(box_dirs_))
      extra_dirs_.push_back(k);
  }
  target_mass_ = integrate_polygon_refined(target_, density_, TriangleRule::radon7(), 6);
}

Index MongeAmpereSystem::num_unknowns() const {
  return lattice_.size() - 1 + (pinning_ == Pinning::augmented ? 1 : 0);
}

MeshFunction MongeAmpereSystem::mesh_from_unknowns(const Eigen::VectorXd& u) const {
  MeshFunction v(lattice_.size());
  for (Index i = 0; i < lattice_.size(); ++i) v[i] = columns_[i] < 0 ? alpha_ : u[columns_[i]];
  return v;
}

Eigen::VectorXd MongeAmpereSystem::unknowns_from_mesh(const MeshFunction& v, double c) const {
  Eigen::VectorXd u(num_unknowns());
  for (Index i = 0; i < lattice_.size(); ++i)
    if (columns_[i] >= 0) u[columns_[i]] = v[i];
  if (pinning_ == Pinning::augmented) u[u.size() - 1] = c;
  return u;
}

double MongeAmpereSystem::source_shift(const Eigen::VectorXd& u) const {
  return pinning_ == Pinning::augmented ? u[u.size() - 1] : 0.0;
}

MongeAmpereSystem MongeAmpereSystem::with_rhs(Eigen::VectorXd rhs) const {
  MongeAmpereSystem copy = *this;
  if (rhs.size() != rhs_.size()) throw std::invalid_argument("right-hand side has the wrong size");
  copy.rhs_ = std::move(rhs);
  return copy;
}

MongeAmpereSystem MongeAmpereSystem::with_options(SchemeOptions options) const {
  MongeAmpereSystem copy = *this;
  copy.options_ = std::move(options);
  return copy;
}

double MongeAmpereSystem::polygon_measure(const ConvexPolygond& poly) const {
  if (options_.area_levels > 0)
    return integrate_polygon_refined(poly, density_, options_.area_rule, options_.area_levels);
  return integrate_polygon(poly, density_, options_.area_rule);
}

ExtensionCache MongeAmpereSystem::extend(const MeshFunction& v) const {
  return extend_all(lattice_, cone_, table_, v);
}

LambdaVector MongeAmpereSystem::lambda_vector(const MeshFunction& v, const ExtensionCache& ext,
                                              Index x) const {
  const int nd = stencil_.size();
  LambdaVector out;
  out.lambda.resize(nd);
  out.source.resize(nd);
  const double inv_h = 1.0 / lattice_.h();
  for (int k = 0; k < nd; ++k) {
    out.lambda[k] = (neighbor_value(table_, ext, v, x, k) - v[x]) * inv_h;
    out.source[k] = neighbor_source(table_, ext, x, k);
  }
  return out;
}

SubdiffPolygon MongeAmpereSystem::subdifferential(const LambdaVector& lam, Index x) const {
  SubdiffPolygon out;
  out.point = x;
  out.facets.assign(stencil_.size(), std::nullopt);
  const Eigen::VectorXd& l = lam.lambda;
  // The canonical constraints give the bounding box.
  const double xmin = -l[box_dirs_[1]], xmax = l[box_dirs_[0]];
  const double ymin = -l[box_dirs_[3]], ymax = l[box_dirs_[2]];
  const double tol = options_.tol;
  if (xmax - xmin < -tol * (1 + std::abs(xmax)) || ymax - ymin < -tol * (1 + std::abs(ymax)))
    return out;
  ConvexPolygond q = ConvexPolygond::box(xmin, std::max(xmin, xmax), ymin, std::max(ymin, ymax));
  for (const int k : extra_dirs_) {
    if (q.empty()) break;
    q = clip_halfplane(q, Halfplaned(stencil_[k], l[k]), tol);
  }
  out.polygon = std::move(q);
  if (out.polygon.degenerate()) return out;
  for (int k = 0; k < stencil_.size(); ++k)
    out.facets[k] = facet_segment(out.polygon, Halfplaned(stencil_[k], l[k]), tol);
  return out;
}

SubdiffPolygon MongeAmpereSystem::subdifferential(const MeshFunction& v, const ExtensionCache& ext,
                                                  Index x) const {
  return subdifferential(lambda_vector(v, ext, x), x);
}

double MongeAmpereSystem::ma_measure(const MeshFunction& v, const ExtensionCache& ext, Index x) const {
  return polygon_measure(subdifferential(v, ext, x).polygon);
}

Evaluation MongeAmpereSystem::evaluate(const Eigen::VectorXd& u, bool with_jacobian) const {
  const MeshFunction v = mesh_from_unknowns(u);
  const double c = source_shift(u);
  const double inv_h = 1.0 / lattice_.h();

  Evaluation ev;
  ev.extension = extend(v);
  ev.omega.resize(lattice_.size());
  ev.residual.resize(num_equations());

  std::vector<Eigen::Triplet<double>> triplets;
  if (with_jacobian) triplets.reserve(static_cast<std::size_t>(num_equations()) * (stencil_.size() + 2));
  const Index c_col = num_unknowns() - 1;

  std::vector<Index> point_row(lattice_.size(), -1);
  for (Index r = 0; r < num_equations(); ++r) point_row[row_points_[r]] = r;

  for (Index i = 0; i < lattice_.size(); ++i) {
    const LambdaVector lam = lambda_vector(v, ev.extension, i);
    const SubdiffPolygon sub = subdifferential(lam, i);
    const double omega = polygon_measure(sub.polygon);
    ev.omega[i] = omega;
    const Index r = point_row[i];
    if (r < 0) continue;
    ev.residual[r] = omega - rhs_[i] - c * cell_areas_[i];
    if (!(omega > 0)) ++ev.empty_rows;
    if (!with_jacobian) continue;

    const Index diag_col = columns_[i];
    double diag = 0;
    for (int k = 0; k < stencil_.size(); ++k) {
      if (!sub.facets[k]) continue;
      const double weight =
          integrate_segment(*sub.facets[k], density_, options_.edge_rule) * inv_h * inv_norms_[k];
      if (weight == 0.0) continue;
      diag -= weight;
      const Index src = lam.source[k];
      if (src == i) {
        diag += weight;  // Gamma(x + h e) = x: the two contributions cancel
        continue;
      }
      if (columns_[src] >= 0) triplets.emplace_back(r, columns_[src], weight);
    }
    if (diag_col >= 0) triplets.emplace_back(r, diag_col, diag);
    if (pinning_ == Pinning::augmented) triplets.emplace_back(r, c_col, -cell_areas_[i]);
  }

  if (with_jacobian) {
    ev.jacobian.resize(num_equations(), num_unknowns());
    ev.jacobian.setFromTriplets(triplets.begin(), triplets.end());
    ev.jacobian.makeCompressed();
  }
  return ev;
}

double MongeAmpereSystem::default_epsilon(double factor) const {
  double min_density = std::numeric_limits<double>::infinity();
  for (const Index i : row_points_) min_density = std::min(min_density, rhs_[i] / cell_areas_[i]);
  const double h = lattice_.h();
  return factor * h * h * min_density;
}

WcddReport wcdd_diagnostic(const SparseMatrix& matrix, double tol) {
  const Index n = matrix.rows();
  if (matrix.cols() != n) throw std::invalid_argument("WCDD diagnostic needs a square matrix");
  const Eigen::SparseMatrix<double, Eigen::RowMajor> a = matrix;

  WcddReport rep;
  rep.slack.resize(n);
  rep.row_scale.resize(n);
  rep.path_length.assign(n, -1);
  rep.weakly_dominant = true;

  std::vector<std::vector<Index>> incoming(n);  // j -> rows i with a_ij != 0
  std::deque<Index> queue;
  for (Index i = 0; i < n; ++i) {
    double diag = 0, off = 0;
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(a, i); it; ++it) {
      if (it.col() == i) {
        diag = std::abs(it.value());
      } else if (it.value() != 0.0) {
        off += std::abs(it.value());
        incoming[it.col()].push_back(i);
      }
    }
    rep.slack[i] = diag - off;
    rep.row_scale[i] = diag + off;
    const double rel = rep.row_scale[i] > 0 ? rep.slack[i] / rep.row_scale[i] : 0.0;
    if (rep.worst_row < 0 || rel < rep.worst_relative_slack) {
      rep.worst_row = i;
      rep.worst_relative_slack = rel;
    }
    if (rep.slack[i] < -tol * rep.row_scale[i] || rep.row_scale[i] == 0.0) rep.weakly_dominant = false;
    if (rep.slack[i] > tol * rep.row_scale[i]) {
      rep.path_length[i] = 0;
      queue.push_back(i);
      ++rep.strict_rows;
    }
  }

  // Breadth-first search backwards from the strictly dominant rows.
  while (!queue.empty()) {
    const Index j = queue.front();
    queue.pop_front();
    for (const Index i : incoming[j]) {
      if (rep.path_length[i] >= 0) continue;
      rep.path_length[i] = rep.path_length[j] + 1;
      queue.push_back(i);
    }
  }
  rep.chained = true;
  for (const int d : rep.path_length) {
    rep.chained = rep.chained && d >= 0;
    rep.max_path_length = std::max(rep.max_path_length, d);
  }
  return rep;
}

}  // namespace mongecone
