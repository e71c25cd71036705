#pragma once

// Four-building synthetic city: boxes, an L-shaped block and twin towers on
// a textured ground, with procedural facades, an MVS-like point cloud with
// holes, footprints and ground-truth orbit views.

#include "citygo/pipeline.hpp"
#include "citygo/synthetic.hpp"

namespace citygo::synth {

struct ToyCityParams {
  int width = 128;
  int height = 96;
  int views_per_ring = 12;
  std::vector<double> elevations_deg{35.0, 60.0};
  double distance = 60.0;
  double fov_deg = 60.0;
  int supersample = 2;
  double wall_density = 3.0;    // points per m^2
  double ground_density = 1.0;  // points per m^2
  double ground_half = 40.0;
  double noise = 0.02;  // m
  std::uint64_t seed = 1;
};

struct ToyCity {
  SceneBundle bundle;
  std::vector<BuildingShape> shapes;  // index i has footprint id i + 1
  std::vector<TexturedMesh> truth_meshes;  // buildings then ground
};

/// Procedural ground-truth color of a surface point; `building` is the
/// 0-based building index or -1 for the ground.
Vec3 toy_city_color(int building, const Point3& p, const Vec3& normal);

ToyCity toy_city(const ToyCityParams& p = {});

/// Anti-aliased render of the analytic scene.
Raster render_toy_city(const ToyCity& city, const CameraView& view, int supersample = 2);

}  // namespace citygo::synth
