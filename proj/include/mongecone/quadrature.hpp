#pragma once

// Triangle and segment quadrature for densities over convex polygons.

#include "mongecone/geometry2d.hpp"

#include <Eigen/Core>

#include <functional>
#include <string>
#include <vector>

namespace mongecone {

/// Rule on the reference triangle in barycentric coordinates; weights sum to 1.
struct TriangleRule {
  std::vector<Eigen::Vector3d> nodes;
  std::vector<double> weights;
  int degree = 0;

  /// Edge-midpoint rule, 3 points, degree 2.
  static TriangleRule midpoint3();
  /// Radon's 7-point rule, degree 5.
  static TriangleRule radon7();
  static TriangleRule of_degree(int degree);
};

/// Rule on [-1, 1]; weights sum to 2.
struct SegmentRule {
  std::vector<double> nodes;
  std::vector<double> weights;
  int degree = 0;

  /// 4-point Gauss-Legendre, degree 7.
  static SegmentRule gauss_legendre4();
};

struct Density {
  std::function<double(const Point2d&)> eval;
  std::string name;

  double operator()(const Point2d& p) const { return eval(p); }

  static Density constant(double value, std::string name = "constant");
};

double integrate_triangle(const Triangled& tri, const Density& density, const TriangleRule& rule);

/// Fan triangulation from the centroid, rule mapped onto every triangle.
double integrate_polygon(const ConvexPolygond& poly, const Density& density,
                         const TriangleRule& rule);

/// As integrate_polygon with every fan triangle split uniformly into
/// 4^levels subtriangles. Used for reference integrals.
double integrate_polygon_refined(const ConvexPolygond& poly, const Density& density,
                                 const TriangleRule& rule, int levels);

/// Line integral with respect to arc length.
double integrate_segment(const Segmentd& seg, const Density& density, const SegmentRule& rule);

/// Cells are convex polygons, so this is integrate_polygon under its own name.
inline double integrate_cell(const ConvexPolygond& cell, const Density& f, const TriangleRule& rule) {
  return integrate_polygon(cell, f, rule);
}

}  // namespace mongecone
