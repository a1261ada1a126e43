#include "mongecone/quadrature.hpp"

#include <cmath>
#include <stdexcept>

namespace mongecone {

TriangleRule TriangleRule::midpoint3() {
  TriangleRule r;
  r.nodes = {{0.5, 0.5, 0.0}, {0.0, 0.5, 0.5}, {0.5, 0.0, 0.5}};
  r.weights = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  r.degree = 2;
  return r;
}

TriangleRule TriangleRule::radon7() {
  const double s15 = std::sqrt(15.0);
  const double a1 = (6.0 - s15) / 21.0;
  const double a2 = (6.0 + s15) / 21.0;
  const double w1 = (155.0 - s15) / 1200.0;
  const double w2 = (155.0 + s15) / 1200.0;
  TriangleRule r;
  r.nodes = {{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0},
             {a1, a1, 1.0 - 2.0 * a1}, {a1, 1.0 - 2.0 * a1, a1}, {1.0 - 2.0 * a1, a1, a1},
             {a2, a2, 1.0 - 2.0 * a2}, {a2, 1.0 - 2.0 * a2, a2}, {1.0 - 2.0 * a2, a2, a2}};
  r.weights = {9.0 / 40.0, w1, w1, w1, w2, w2, w2};
  r.degree = 5;
  return r;
}

TriangleRule TriangleRule::of_degree(int degree) {
  if (degree <= 2) return midpoint3();
  if (degree <= 5) return radon7();
  throw std::invalid_argument("no triangle rule of degree " + std::to_string(degree));
}

SegmentRule SegmentRule::gauss_legendre4() {
  const double inner = std::sqrt(3.0 / 7.0 - 2.0 / 7.0 * std::sqrt(6.0 / 5.0));
  const double outer = std::sqrt(3.0 / 7.0 + 2.0 / 7.0 * std::sqrt(6.0 / 5.0));
  const double w_inner = (18.0 + std::sqrt(30.0)) / 36.0;
  const double w_outer = (18.0 - std::sqrt(30.0)) / 36.0;
  SegmentRule r;
  r.nodes = {-outer, -inner, inner, outer};
  r.weights = {w_outer, w_inner, w_inner, w_outer};
  r.degree = 7;
  return r;
}

Density Density::constant(double value, std::string name) {
  return {[value](const Point2d&) { return value; }, std::move(name)};
}

double integrate_triangle(const Triangled& tri, const Density& density, const TriangleRule& rule) {
  const double a = std::abs(tri.area());
  if (a == 0.0) return 0.0;
  double sum = 0.0;
  for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
    const Eigen::Vector3d& b = rule.nodes[k];
    const Point2d p = b[0] * tri.v[0] + b[1] * tri.v[1] + b[2] * tri.v[2];
    sum += rule.weights[k] * density(p);
  }
  return a * sum;
}

double integrate_polygon(const ConvexPolygond& poly, const Density& density,
                         const TriangleRule& rule) {
  double sum = 0.0;
  for (const auto& tri : triangulate_fan(poly)) sum += integrate_triangle(tri, density, rule);
  return sum;
}

namespace {

double integrate_subdivided(const Triangled& t, const Density& density, const TriangleRule& rule,
                            int levels) {
  if (levels <= 0) return integrate_triangle(t, density, rule);
  const Point2d m01 = 0.5 * (t.v[0] + t.v[1]);
  const Point2d m12 = 0.5 * (t.v[1] + t.v[2]);
  const Point2d m20 = 0.5 * (t.v[2] + t.v[0]);
  return integrate_subdivided({{t.v[0], m01, m20}}, density, rule, levels - 1) +
         integrate_subdivided({{m01, t.v[1], m12}}, density, rule, levels - 1) +
         integrate_subdivided({{m20, m12, t.v[2]}}, density, rule, levels - 1) +
         integrate_subdivided({{m01, m12, m20}}, density, rule, levels - 1);
}

}  // namespace

double integrate_polygon_refined(const ConvexPolygond& poly, const Density& density,
                                 const TriangleRule& rule, int levels) {
  double sum = 0.0;
  for (const auto& tri : triangulate_fan(poly)) sum += integrate_subdivided(tri, density, rule, levels);
  return sum;
}

double integrate_segment(const Segmentd& seg, const Density& density, const SegmentRule& rule) {
  const double len = seg.length();
  if (len == 0.0) return 0.0;
  const Point2d mid = 0.5 * (seg.a + seg.b);
  const Point2d half = 0.5 * (seg.b - seg.a);
  double sum = 0.0;
  for (std::size_t k = 0; k < rule.nodes.size(); ++k)
    sum += rule.weights[k] * density(mid + rule.nodes[k] * half);
  return 0.5 * len * sum;
}

}  // namespace mongecone
