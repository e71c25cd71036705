#pragma once

// Synthetic scene generators: building point clouds built from stacked
// prisms, and a small textured toy city with posed cameras.

#include "citygo/core.hpp"
#include "citygo/geometry2d.hpp"
#include "citygo/render.hpp"

#include <functional>
#include <random>
#include <vector>

namespace citygo::synth {

/// Vertical prism over a footprint polygon.
struct PrismPart {
  geo2d::Polygon footprint;
  double z0 = 0.0;
  double z1 = 1.0;
};

using BuildingShape = std::vector<PrismPart>;

geo2d::Polygon rectangle(double x0, double y0, double x1, double y1);
geo2d::Polygon circle_polygon(const Vec2& center, double radius, int segments);
geo2d::Polygon l_shape(double x0, double y0, double w, double h, double notch_w, double notch_h);

BuildingShape box_building(const Vec3& min, const Vec3& max);
/// Two towers of size `tower` side by side on a shared podium.
BuildingShape twin_towers(double podium_w, double podium_d, double podium_h, double tower_w, double gap,
                          double tower_h);
/// Lower block of footprint area A, upper block of area ratio*A, both square and centered.
BuildingShape ziggurat(double base_side, double ratio, double z_step, double z_top);

struct SurfaceSampling {
  double density = 4.0;  // points per m^2
  bool bottom = false;
  bool roofs = true;
  bool walls = true;
  /// points for which this returns true are discarded (simulated holes)
  std::function<bool(const Point3&)> drop;
};

struct SurfacePoint {
  Point3 position;
  Vec3 normal;
  int part = 0;
};

/// Uniform random samples of the exterior surface of a stack of prisms.
std::vector<SurfacePoint> sample_surface(const BuildingShape& shape, const SurfaceSampling& opts, std::mt19937_64& rng);
std::vector<Point3> positions(const std::vector<SurfacePoint>& pts);

/// Closed triangle mesh of every prism part, outward facing; UVs empty.
TexturedMesh shape_mesh(const BuildingShape& shape);
TexturedMesh box_mesh(const Vec3& min, const Vec3& max);

/// Area of the union footprint at height z.
double footprint_area_at(const BuildingShape& shape, double z);

/// Cube [-2,2]^2 x [0,4] whose proxy texture is a flat wall color while the
/// ground truth shows a dark window on the +x face. Gaussians lie on a
/// 0.1 m lattice over every face but the bottom.
struct DefectCubeScene {
  TexturedMesh proxy;
  std::vector<Gaussian3D> gaussians;
  std::vector<CameraView> views;  // ground truth attached
  Vec3 wall = Vec3(0.6, 0.55, 0.5);
  Vec3 window = Vec3(0.1, 0.1, 0.15);
  Vec3 window_min = Vec3(2.0, -0.86, 1.34);
  Vec3 window_max = Vec3(2.0, 0.86, 2.66);

  bool in_defect(const Point3& p) const;
};

DefectCubeScene defect_cube_scene(int width = 200, int height = 150);

/// Non-building Gaussians: a ground layer and bushes that dominate the
/// views, plus small faint and buried clutter that barely contributes.
struct SurroundScene {
  std::vector<Gaussian3D> gaussians;
  std::vector<CameraView> views;  // ground truth = render of all Gaussians
};

SurroundScene surround_scene(std::uint64_t seed, std::size_t count = 4000, int width = 96, int height = 72);

/// Orbit of cameras looking at `target`.
std::vector<CameraView> orbit_views(const Vec3& target, double distance, double elevation_deg, int count,
                                    double focal, int width, int height, double azimuth0_deg = 0.0);

}  // namespace citygo::synth
