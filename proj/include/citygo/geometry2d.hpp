#pragma once

// Planar primitives used by contour extraction and extrusion.

#include "citygo/core.hpp"

#include <span>
#include <vector>

namespace citygo::geo2d {

using Polygon = std::vector<Vec2>;

double signed_area(std::span<const Vec2> loop);
double cross(const Vec2& o, const Vec2& a, const Vec2& b);

/// Convex hull, counter-clockwise, without collinear vertices.
Polygon convex_hull(std::span<const Vec2> points);

/// Crossing-number test; points on the boundary (within tol) count as inside.
bool point_in_polygon(const Vec2& p, std::span<const Vec2> loop, double tol = 1e-9);
double distance_to_boundary(const Vec2& p, std::span<const Vec2> loop);

bool is_simple(std::span<const Vec2> loop);

/// Drops repeated and exactly collinear vertices and orients the loop counter-clockwise.
Polygon normalize_loop(Polygon loop);

/// Closed-loop Douglas-Peucker. Falls back to a smaller tolerance when the
/// simplified loop would self-intersect; never returns fewer than 3 vertices.
Polygon simplify_loop(const Polygon& loop, double tolerance);

/// Ear-clipping triangulation of a simple counter-clockwise polygon.
/// Returns index triples into `loop`, counter-clockwise.
std::vector<std::array<int, 3>> triangulate_polygon(std::span<const Vec2> loop);

/// Delaunay triangulation with exact predicates on a snapped integer lattice.
/// Triangles index into `points` and are counter-clockwise. Duplicate points are
/// represented by their first occurrence only.
struct Triangulation {
  std::vector<std::array<int, 3>> triangles;
  /// neighbors[t][i] is the triangle across the edge opposite vertex i, or -1.
  std::vector<std::array<int, 3>> neighbors;
};

Triangulation delaunay(std::span<const Vec2> points);

double circumradius(const Vec2& a, const Vec2& b, const Vec2& c);

}  // namespace citygo::geo2d
