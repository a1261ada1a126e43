#include "mongecone/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

namespace mongecone {

namespace {

std::string format_direction(const Eigen::Vector2i& e) {
  std::ostringstream os;
  os << "(" << e.x() << "," << e.y() << ")";
  return os.str();
}

}  // namespace

Index Lattice::nearest(const Point2d& p) const {
  Index best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < size(); ++i) {
    const double d = (point(i) - p).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

Lattice build_lattice(const ConvexPolygond& domain, double h, const Point2d& offset,
                      const std::optional<Point2d>& pin_location) {
  if (!(h > 0)) throw std::invalid_argument("mesh size h must be positive");
  if (domain.degenerate()) throw std::invalid_argument("domain polygon is empty");

  Lattice lat;
  lat.h_ = h;
  lat.domain_ = domain;
  // Reduce the offset modulo h so integer coordinates do not depend on it.
  lat.offset_ = offset - h * (offset / h).array().floor().matrix();
  for (int c = 0; c < 2; ++c)
    if (lat.offset_[c] >= h * (1 - 1e-12)) lat.offset_[c] = 0;

  Point2d lo = domain[0], hi = domain[0];
  for (const auto& v : domain.vertices()) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  const Eigen::Vector2i mlo = ((lo - lat.offset_) / h).array().floor().cast<int>();
  const Eigen::Vector2i mhi = ((hi - lat.offset_) / h).array().ceil().cast<int>();
  lat.lo_ = mlo;
  lat.extent_ = mhi - mlo + Eigen::Vector2i::Ones();
  lat.grid_.assign(static_cast<std::size_t>(lat.extent_.x()) * lat.extent_.y(), -1);

  // Strict interior with a tolerance relative to h: points on the boundary
  // of the open domain are excluded.
  for (int mx = mlo.x(); mx <= mhi.x(); ++mx) {
    for (int my = mlo.y(); my <= mhi.y(); ++my) {
      const Eigen::Vector2i m(mx, my);
      if (!domain.contains_strictly(lat.position(m), 1e-9 * h)) continue;
      const Eigen::Vector2i r = m - mlo;
      lat.grid_[static_cast<std::size_t>(r.x()) * lat.extent_.y() + r.y()] = lat.size();
      lat.coords_.push_back(m);
    }
  }
  if (lat.size() < 2) throw std::invalid_argument("lattice has fewer than two points in the domain");

  lat.boundary_.assign(lat.coords_.size(), 0);
  const Eigen::Vector2i basis[2] = {Eigen::Vector2i(1, 0), Eigen::Vector2i(0, 1)};
  for (Index i = 0; i < lat.size(); ++i) {
    bool b = false;
    for (const auto& r : basis)
      b = b || !lat.find(lat.coords_[i] + r) || !lat.find(lat.coords_[i] - r);
    lat.boundary_[i] = b;
    if (b) lat.boundary_indices_.push_back(i);
  }

  const Point2d pin = pin_location.value_or(lat.offset_ + Point2d(h, h));
  lat.pinned_ = lat.nearest(pin);
  return lat;
}

int Stencil::find(const Eigen::Vector2i& e) const {
  for (int k = 0; k < size(); ++k)
    if (directions_[k] == e) return k;
  return -1;
}

Stencil build_stencil(std::span<const Eigen::Vector2i> directions, const ConvexPolygond& target) {
  Stencil s;
  auto add = [&](const Eigen::Vector2i& e) {
    if (std::find(s.directions_.begin(), s.directions_.end(), e) == s.directions_.end())
      s.directions_.push_back(e);
  };
  for (const auto& e : directions) {
    if (e.isZero()) throw StencilError("stencil contains the zero direction");
    if (std::gcd(std::abs(e.x()), std::abs(e.y())) != 1)
      throw StencilError("direction " + format_direction(e) + " does not have co-prime coordinates");
    add(e);
    add(-e);
  }
  for (const Eigen::Vector2i& r : {Eigen::Vector2i(1, 0), Eigen::Vector2i(0, 1)})
    if (s.find(r) < 0) throw StencilError("canonical basis vector " + format_direction(r) + " missing");

  const auto& tv = target.vertices();
  if (tv.size() < 3) throw StencilError("target polygon is degenerate");
  for (std::size_t i = 0; i < tv.size(); ++i) {
    const Point2d edge = tv[(i + 1) % tv.size()] - tv[i];
    const Point2d normal(edge.y(), -edge.x());
    const bool found = std::any_of(s.directions_.begin(), s.directions_.end(), [&](const auto& e) {
      const Point2d ed = e.template cast<double>();
      return std::abs(cross2<double>(ed, normal)) <= 1e-9 * ed.norm() * normal.norm() &&
             ed.dot(normal) > 0;
    });
    if (!found) {
      std::ostringstream os;
      os << "no stencil direction is normal to the target edge from (" << tv[i].x() << ","
         << tv[i].y() << ")";
      throw StencilError(os.str());
    }
  }

  s.opposite_.resize(s.directions_.size());
  for (int k = 0; k < s.size(); ++k) s.opposite_[k] = s.find(-s.directions_[k]);
  return s;
}

std::vector<ConvexPolygond> partition_cells(const Lattice& lat) {
  std::vector<ConvexPolygond> cells;
  cells.reserve(lat.size());
  const double h = lat.h();
  for (Index i = 0; i < lat.size(); ++i) {
    const Point2d xi = lat.point(i);
    const Eigen::Vector2i mi = lat.coord(i);
    ConvexPolygond cell = lat.domain();
    for (int k = 1;; ++k) {
      bool any_in_reach = false;
      for (int dx = -k; dx <= k; ++dx) {
        for (int dy = -k; dy <= k; ++dy) {
          if (std::max(std::abs(dx), std::abs(dy)) != k) continue;
          const auto j = lat.find(mi + Eigen::Vector2i(dx, dy));
          if (!j) continue;
          any_in_reach = true;
          const Point2d d = lat.point(*j) - xi;
          cell = clip_halfplane(cell, Halfplaned(d, d.dot(xi + 0.5 * d)));
        }
      }
      double rmax = 0;
      for (const auto& v : cell.vertices()) rmax = std::max(rmax, (v - xi).norm());
      // Points at distance >= (k+1) h have bisectors farther than rmax.
      if ((k + 1) * h > 2 * rmax * (1 + 1e-12)) break;
      if (!any_in_reach && k * h > 2 * rmax) break;
    }
    cells.push_back(std::move(cell));
  }
  return cells;
}

ExtendedValue extend_value(const Lattice& lat, const AsymptoticCone& cone, const MeshFunction& v,
                           const Eigen::Vector2i& m) {
  if (const auto id = lat.find(m)) return {v[*id], *id};
  ExtendedValue best{std::numeric_limits<double>::infinity(), -1};
  const Point2d z = lat.position(m);
  // Same association of terms as extend_all, so both pick the same Gamma.
  for (const Index y : lat.boundary_indices()) {
    const Point2d py = lat.point(y);
    double val = -std::numeric_limits<double>::infinity();
    for (const auto& a : cone.vertices) val = std::max(val, z.dot(a) + (v[y] - py.dot(a)));
    if (val < best.value) best = {val, y};
  }
  return best;
}

NeighborTable::NeighborTable(const Lattice& lat, const Stencil& stencil) : ndirs_(stencil.size()) {
  refs_.resize(static_cast<std::size_t>(lat.size()) * ndirs_);
  std::map<std::pair<int, int>, Index> slots;
  for (Index i = 0; i < lat.size(); ++i) {
    for (int k = 0; k < ndirs_; ++k) {
      const Eigen::Vector2i m = lat.coord(i) + stencil[k];
      if (const auto id = lat.find(m)) {
        refs_[i * ndirs_ + k] = *id;
        continue;
      }
      // Exterior coordinates are shared between points; give each one slot.
      auto [it, inserted] = slots.try_emplace({m.x(), m.y()}, static_cast<Index>(exterior_.size()));
      if (inserted) exterior_.push_back(m);
      refs_[i * ndirs_ + k] = -1 - it->second;
    }
  }
}

ExtensionCache extend_all(const Lattice& lat, const AsymptoticCone& cone, const NeighborTable& table,
                          const MeshFunction& v) {
  const auto& bidx = lat.boundary_indices();
  const std::size_t nb = bidx.size();
  const std::size_t nv = cone.vertices.size();
  // offsets[b * nv + j] = v(y_b) - y_b . a_j, so the candidate value for z is
  // max_j (z . a_j + offsets[b * nv + j]).
  std::vector<double> offsets(nb * nv);
  for (std::size_t b = 0; b < nb; ++b) {
    const Point2d y = lat.point(bidx[b]);
    for (std::size_t j = 0; j < nv; ++j) offsets[b * nv + j] = v[bidx[b]] - y.dot(cone.vertices[j]);
  }

  const auto& ext = table.exterior_coords();
  ExtensionCache cache;
  cache.value.resize(ext.size());
  cache.gamma.resize(ext.size());
  std::vector<double> za(nv);
  for (std::size_t s = 0; s < ext.size(); ++s) {
    const Point2d z = lat.position(ext[s]);
    for (std::size_t j = 0; j < nv; ++j) za[j] = z.dot(cone.vertices[j]);
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    bool tie = false;
    for (std::size_t b = 0; b < nb; ++b) {
      const double* o = &offsets[b * nv];
      double val = za[0] + o[0];
      for (std::size_t j = 1; j < nv; ++j) val = std::max(val, za[j] + o[j]);
      if (val < best) {
        best = val;
        arg = b;
        tie = false;
      } else if (val == best) {
        tie = true;
      }
    }
    cache.value[s] = best;
    cache.gamma[s] = bidx[arg];
    cache.ties += tie;
  }
  return cache;
}

}  // namespace mongecone
