#pragma once

// Lattice points of a polygonal domain, stencil validation, the partition
// cells carrying the right-hand side, and the extension of mesh functions
// to lattice points outside the domain through the asymptotic cone of the
// target polygon.

#include "mongecone/geometry2d.hpp"

#include <Eigen/Core>

#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mongecone {

using Index = Eigen::Index;

/// Values of a mesh function at every lattice point of the domain, indexed
/// like Lattice::points, the pinned point included.
using MeshFunction = Eigen::VectorXd;

class Lattice {
 public:
  Lattice() = default;

  double h() const { return h_; }
  const Point2d& offset() const { return offset_; }
  const ConvexPolygond& domain() const { return domain_; }

  Index size() const { return static_cast<Index>(coords_.size()); }
  const Eigen::Vector2i& coord(Index i) const { return coords_[i]; }
  Point2d point(Index i) const { return position(coords_[i]); }
  Point2d position(const Eigen::Vector2i& m) const { return offset_ + h_ * m.cast<double>(); }

  bool is_boundary(Index i) const { return boundary_[i] != 0; }
  const std::vector<Index>& boundary_indices() const { return boundary_indices_; }
  Index pinned_index() const { return pinned_; }

  /// Index of the lattice point with integer coordinates m, if it is in the domain.
  std::optional<Index> find(const Eigen::Vector2i& m) const {
    const Eigen::Vector2i r = m - lo_;
    if ((r.array() < 0).any() || r.x() >= extent_.x() || r.y() >= extent_.y()) return std::nullopt;
    const Index id = grid_[static_cast<std::size_t>(r.x()) * extent_.y() + r.y()];
    if (id < 0) return std::nullopt;
    return id;
  }

  /// Index of the lattice point closest to p (smallest index on ties).
  Index nearest(const Point2d& p) const;

 private:
  friend Lattice build_lattice(const ConvexPolygond&, double, const Point2d&,
                               const std::optional<Point2d>&);
  double h_ = 0;
  Point2d offset_ = Point2d::Zero();
  ConvexPolygond domain_;
  std::vector<Eigen::Vector2i> coords_;
  std::vector<char> boundary_;
  std::vector<Index> boundary_indices_;
  Index pinned_ = 0;
  Eigen::Vector2i lo_ = Eigen::Vector2i::Zero();
  Eigen::Vector2i extent_ = Eigen::Vector2i::Zero();
  std::vector<Index> grid_;
};

/// Lattice points offset + h*m strictly inside the domain, ordered
/// lexicographically by (x, y). Offsets are reduced modulo h, so offsets
/// differing by multiples of h give identical lattices. The pinned point is
/// the lattice point nearest to pin_location, by default (h, h) + offset.
/// Throws std::invalid_argument when fewer than two points remain.
Lattice build_lattice(const ConvexPolygond& domain, double h, const Point2d& offset = Point2d::Zero(),
                      const std::optional<Point2d>& pin_location = std::nullopt);

class StencilError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Symmetric set of co-prime integer directions.
class Stencil {
 public:
  const std::vector<Eigen::Vector2i>& directions() const { return directions_; }
  int size() const { return static_cast<int>(directions_.size()); }
  const Eigen::Vector2i& operator[](int k) const { return directions_[k]; }
  int opposite(int k) const { return opposite_[k]; }
  /// Position of e in the stencil, -1 if absent.
  int find(const Eigen::Vector2i& e) const;

 private:
  friend Stencil build_stencil(std::span<const Eigen::Vector2i>, const ConvexPolygond&);
  std::vector<Eigen::Vector2i> directions_;
  std::vector<int> opposite_;
};

/// Symmetrizes the input (each e followed by -e) and validates it against the
/// target polygon. Throws StencilError naming the violated requirement.
Stencil build_stencil(std::span<const Eigen::Vector2i> directions, const ConvexPolygond& target);

/// One convex cell per lattice point: the Euclidean Voronoi cell of the point
/// among all lattice points, clipped to the domain. Away from the boundary
/// this is the square x + [-h/2, h/2]^2; near the boundary the leftover strip
/// is absorbed by the nearest point.
std::vector<ConvexPolygond> partition_cells(const Lattice& lattice);

/// The vertices of the target polygon, seen through its support function.
struct AsymptoticCone {
  std::vector<Point2d> vertices;

  explicit AsymptoticCone(const ConvexPolygond& target) : vertices(target.vertices()) {}
  double support(const Point2d& w) const {
    double s = -std::numeric_limits<double>::infinity();
    for (const auto& a : vertices) s = std::max(s, w.dot(a));
    return s;
  }
};

struct ExtendedValue {
  double value = 0;
  Index gamma = -1;  ///< boundary point achieving the minimum
};

/// Value at lattice coordinates m. Inside the domain this is v itself with
/// gamma = m; outside it is min over boundary points y of
/// support(z - y) + v(y), ties resolved to the smallest index.
ExtendedValue extend_value(const Lattice& lattice, const AsymptoticCone& cone, const MeshFunction& v,
                           const Eigen::Vector2i& m);

/// For each (point, direction) pair, either the lattice index of x + h e or a
/// slot in the list of exterior lattice coordinates reached by the stencil.
class NeighborTable {
 public:
  NeighborTable() = default;
  NeighborTable(const Lattice& lattice, const Stencil& stencil);

  /// Lattice index when >= 0; exterior slot s encoded as -1 - s.
  Index at(Index point, int dir) const { return refs_[point * ndirs_ + dir]; }
  static bool is_exterior(Index ref) { return ref < 0; }
  static Index slot(Index ref) { return -1 - ref; }

  const std::vector<Eigen::Vector2i>& exterior_coords() const { return exterior_; }
  int num_directions() const { return ndirs_; }

 private:
  int ndirs_ = 0;
  std::vector<Index> refs_;
  std::vector<Eigen::Vector2i> exterior_;
};

/// Extended values and Gamma selections for every exterior slot, computed
/// once per mesh function and read-only afterwards.
struct ExtensionCache {
  std::vector<double> value;
  std::vector<Index> gamma;
  Index ties = 0;  ///< slots whose minimum was attained more than once
};

ExtensionCache extend_all(const Lattice& lattice, const AsymptoticCone& cone, const NeighborTable& table,
                          const MeshFunction& v);

/// v(x + h e): a lookup when the neighbor is in the domain, the cached
/// extension otherwise.
inline double neighbor_value(const NeighborTable& table, const ExtensionCache& ext, const MeshFunction& v,
                             Index x, int dir) {
  const Index ref = table.at(x, dir);
  return NeighborTable::is_exterior(ref) ? ext.value[NeighborTable::slot(ref)] : v[ref];
}

/// Lattice index whose value v(x + h e) depends on: the neighbor itself or
/// its Gamma image.
inline Index neighbor_source(const NeighborTable& table, const ExtensionCache& ext, Index x, int dir) {
  const Index ref = table.at(x, dir);
  return NeighborTable::is_exterior(ref) ? ext.gamma[NeighborTable::slot(ref)] : ref;
}

}  // namespace mongecone
