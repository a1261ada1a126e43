#pragma once

// Convex polygon machinery in the plane: halfplane clipping, intersection of
// halfplane families, shoelace area/centroid, fan triangulation and facet
// extraction. Everything is templated on the scalar type; the solver uses
// the double aliases at the bottom of this file.

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace mongecone {

inline constexpr double kDefaultTolerance = 1e-10;

template <typename Scalar>
using Point2 = Eigen::Matrix<Scalar, 2, 1>;

template <typename Scalar>
inline Scalar cross2(const Point2<Scalar>& a, const Point2<Scalar>& b) {
  return a.x() * b.y() - a.y() * b.x();
}

/// The closed halfplane {p : p . normal <= offset}.
template <typename Scalar>
struct Halfplane {
  Point2<Scalar> normal;
  Scalar offset{0};

  Halfplane() = default;
  Halfplane(const Point2<Scalar>& n, Scalar lambda) : normal(n), offset(lambda) {}
  Halfplane(const Eigen::Vector2i& n, Scalar lambda)
      : normal(n.cast<Scalar>()), offset(lambda) {}

  Scalar signed_excess(const Point2<Scalar>& p) const { return p.dot(normal) - offset; }
  Scalar tolerance(Scalar tol) const { return tol * (Scalar(1) + std::abs(offset)); }
};

template <typename Scalar>
struct Segment {
  Point2<Scalar> a;
  Point2<Scalar> b;
  Scalar length() const { return (b - a).norm(); }
};

template <typename Scalar>
struct Triangle {
  std::array<Point2<Scalar>, 3> v;
  Scalar area() const { return cross2<Scalar>(v[1] - v[0], v[2] - v[0]) / Scalar(2); }
};

/// Convex polygon stored as a counterclockwise vertex list. Fewer than three
/// vertices means empty or degenerate (a point or a segment), with area 0.
template <typename Scalar>
class ConvexPolygon {
 public:
  using Point = Point2<Scalar>;

  ConvexPolygon() = default;

  /// Takes vertices in either orientation; clockwise input is reversed and
  /// consecutive duplicates are merged.
  explicit ConvexPolygon(std::vector<Point> vertices, Scalar tol = Scalar(kDefaultTolerance))
      : vertices_(std::move(vertices)) {
    dedup(tol);
    if (signed_area() < Scalar(0)) std::reverse(vertices_.begin(), vertices_.end());
  }

  static ConvexPolygon box(Scalar xmin, Scalar xmax, Scalar ymin, Scalar ymax) {
    ConvexPolygon p;
    if (xmin > xmax || ymin > ymax) return p;
    p.vertices_ = {Point(xmin, ymin), Point(xmax, ymin), Point(xmax, ymax), Point(xmin, ymax)};
    p.dedup(Scalar(kDefaultTolerance));
    return p;
  }

  const std::vector<Point>& vertices() const { return vertices_; }
  std::size_t size() const { return vertices_.size(); }
  bool degenerate() const { return vertices_.size() < 3; }
  bool empty() const { return vertices_.empty(); }
  const Point& operator[](std::size_t i) const { return vertices_[i]; }

  Scalar signed_area() const {
    const std::size_t n = vertices_.size();
    if (n < 3) return Scalar(0);
    Scalar twice = 0;
    for (std::size_t i = 0; i < n; ++i)
      twice += cross2<Scalar>(vertices_[i], vertices_[(i + 1) % n]);
    return twice / Scalar(2);
  }

  /// Largest absolute coordinate, floored at 1; used to scale tolerances.
  Scalar scale() const {
    Scalar s = 1;
    for (const auto& v : vertices_) s = std::max(s, v.cwiseAbs().maxCoeff());
    return s;
  }

  bool contains(const Point& p, Scalar tol = Scalar(kDefaultTolerance)) const {
    const std::size_t n = vertices_.size();
    if (n < 3) return false;
    const Scalar s = scale();
    for (std::size_t i = 0; i < n; ++i) {
      const Point& a = vertices_[i];
      const Point& b = vertices_[(i + 1) % n];
      if (cross2<Scalar>(b - a, p - a) < -tol * s * s) return false;
    }
    return true;
  }

  /// Strict interior test: points within tol of an edge are outside.
  bool contains_strictly(const Point& p, Scalar tol = Scalar(kDefaultTolerance)) const {
    const std::size_t n = vertices_.size();
    if (n < 3) return false;
    for (std::size_t i = 0; i < n; ++i) {
      const Point& a = vertices_[i];
      const Point& b = vertices_[(i + 1) % n];
      const Point edge = b - a;
      if (cross2<Scalar>(edge, p - a) <= tol * edge.norm() * scale()) return false;
    }
    return true;
  }

  void dedup(Scalar tol) {
    if (vertices_.empty()) return;
    const Scalar eps = tol * scale();
    std::vector<Point> out;
    out.reserve(vertices_.size());
    for (const auto& v : vertices_)
      if (out.empty() || (v - out.back()).cwiseAbs().maxCoeff() > eps) out.push_back(v);
    while (out.size() > 1 && (out.front() - out.back()).cwiseAbs().maxCoeff() <= eps)
      out.pop_back();
    vertices_ = std::move(out);
  }

 private:
  std::vector<Point> vertices_;
};

/// poly intersected with the halfplane. Vertices within the halfplane's
/// tolerance band count as inside.
template <typename Scalar>
ConvexPolygon<Scalar> clip_halfplane(const ConvexPolygon<Scalar>& poly, const Halfplane<Scalar>& h,
                                     Scalar tol = Scalar(kDefaultTolerance)) {
  using Point = Point2<Scalar>;
  const auto& in = poly.vertices();
  const std::size_t n = in.size();
  if (n == 0) return {};
  const Scalar band = h.tolerance(tol);

  std::vector<Scalar> excess(n);
  bool all_inside = true;
  bool all_outside = true;
  for (std::size_t i = 0; i < n; ++i) {
    excess[i] = h.signed_excess(in[i]);
    all_inside = all_inside && excess[i] <= band;
    all_outside = all_outside && excess[i] > band;
  }
  if (all_inside) return poly;
  if (all_outside) return {};

  std::vector<Point> out;
  out.reserve(n + 1);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = (i + 1) % n;
    const bool in_i = excess[i] <= band;
    const bool in_j = excess[j] <= band;
    if (in_i) out.push_back(in[i]);
    if (in_i != in_j && n > 1) {
      const Scalar t = excess[i] / (excess[i] - excess[j]);
      out.push_back(in[i] + t * (in[j] - in[i]));
    }
  }
  return ConvexPolygon<Scalar>(std::move(out), tol);
}

/// Intersection of `box` with every constraint, by successive clipping.
/// The box must already contain the intersection.
template <typename Scalar>
ConvexPolygon<Scalar> intersect_halfplanes(std::span<const Halfplane<Scalar>> constraints,
                                           const ConvexPolygon<Scalar>& box,
                                           Scalar tol = Scalar(kDefaultTolerance)) {
  ConvexPolygon<Scalar> q = box;
  for (const auto& h : constraints) {
    if (q.empty()) break;
    q = clip_halfplane(q, h, tol);
  }
  return q;
}

template <typename Scalar>
Scalar area(const ConvexPolygon<Scalar>& poly) {
  return std::max(Scalar(0), poly.signed_area());
}

template <typename Scalar>
Point2<Scalar> centroid(const ConvexPolygon<Scalar>& poly) {
  const auto& v = poly.vertices();
  const std::size_t n = v.size();
  if (n == 0) return Point2<Scalar>::Zero();
  const Scalar a = poly.signed_area();
  if (n < 3 || !(std::abs(a) > Scalar(0))) {
    Point2<Scalar> mean = Point2<Scalar>::Zero();
    for (const auto& p : v) mean += p;
    return mean / Scalar(n);
  }
  // Shift to the first vertex to limit cancellation for small polygons far
  // from the origin.
  const Point2<Scalar> o = v[0];
  Point2<Scalar> c = Point2<Scalar>::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    const Point2<Scalar> p = v[i] - o;
    const Point2<Scalar> q = v[(i + 1) % n] - o;
    c += (p + q) * cross2<Scalar>(p, q);
  }
  return o + c / (Scalar(6) * a);
}

/// Triangles (centroid, v_i, v_{i+1}); empty for degenerate polygons.
template <typename Scalar>
std::vector<Triangle<Scalar>> triangulate_fan(const ConvexPolygon<Scalar>& poly) {
  std::vector<Triangle<Scalar>> tris;
  if (poly.degenerate()) return tris;
  const auto& v = poly.vertices();
  const Point2<Scalar> c = centroid(poly);
  tris.reserve(v.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    tris.push_back({{c, v[i], v[(i + 1) % v.size()]}});
  return tris;
}

/// The maximal run of boundary lying on the line p . normal = offset, or
/// nothing when no edge of poly is active for h.
template <typename Scalar>
std::optional<Segment<Scalar>> facet_segment(const ConvexPolygon<Scalar>& poly,
                                             const Halfplane<Scalar>& h,
                                             Scalar tol = Scalar(kDefaultTolerance)) {
  const auto& v = poly.vertices();
  const std::size_t n = v.size();
  if (n < 2) return std::nullopt;
  const Scalar band = h.tolerance(tol);
  std::vector<char> on(n);
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    on[i] = std::abs(h.signed_excess(v[i])) <= band;
    count += on[i];
  }
  if (count < 2) return std::nullopt;
  if (count == n) {
    // Whole polygon on the line: a degenerate segment. Return its extremes.
    const Point2<Scalar> dir(-h.normal.y(), h.normal.x());
    auto [lo, hi] = std::minmax_element(v.begin(), v.end(), [&](const auto& p, const auto& q) {
      return p.dot(dir) < q.dot(dir);
    });
    return Segment<Scalar>{*lo, *hi};
  }
  // Start of a run: an on-line vertex whose predecessor is off the line.
  for (std::size_t i = 0; i < n; ++i) {
    if (!on[i] || on[(i + n - 1) % n]) continue;
    std::size_t last = i;
    while (on[(last + 1) % n]) last = (last + 1) % n;
    if (last == i) continue;
    return Segment<Scalar>{v[i], v[last]};
  }
  return std::nullopt;
}

using Point2d = Point2<double>;
using ConvexPolygond = ConvexPolygon<double>;
using Halfplaned = Halfplane<double>;
using Segmentd = Segment<double>;
using Triangled = Triangle<double>;

}  // namespace mongecone
