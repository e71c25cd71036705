#pragma once

// Building point cloud completion: slice a building cloud into horizontal
// layers, track dominant footprint contours bottom-up, extrude them into a
// layered proxy and sample fill points for the bottom and for holes in walls.
//
// Layers are indexed bottom-up from 0. A dominant contour covers the layer
// span [start_layer, end_layer).

#include "citygo/core.hpp"
#include "citygo/geometry2d.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace citygo::bpcc {

struct LayerStack {
  int num_layers = 0;
  double z_min = 0.0;
  double z_max = 0.0;
  double layer_height = 0.0;
  /// xy projection of every input point; the index is the point id.
  std::vector<Vec2> xy;
  /// ids of all points at or above layer i (P_i). global_sets[0] holds every point.
  std::vector<std::vector<int>> global_sets;
  /// ids of the points whose z falls inside layer i (D_i).
  std::vector<std::vector<int>> local_sets;

  double z_low(int layer) const { return z_min + layer * layer_height; }
  double z_high(int layer) const { return layer + 1 == num_layers ? z_max : z_min + (layer + 1) * layer_height; }
  int layer_of(double z) const;
};

/// Slices [z_min, z_max] of the cloud (or the given range, e.g. from terrain
/// height) into num_layers uniform layers.
LayerStack build_layer_stack(std::span<const Point3> cloud, int num_layers,
                             std::optional<std::pair<double, double>> z_range = std::nullopt);

/// Result of density clustering. Indices refer to the input span.
struct Clustering {
  std::vector<std::vector<int>> clusters;
  std::vector<int> noise;
};

/// Classic DBSCAN with a uniform grid for range queries. A point is core when
/// at least `min_pts` points (itself included) lie within `eps`. Clusters are
/// ordered by their smallest member index.
Clustering dbscan(std::span<const Vec2> points, double eps, int min_pts);

struct Contour2D {
  geo2d::Polygon vertices;  // counter-clockwise, simple
  double area = 0.0;

  static Contour2D from_loop(geo2d::Polygon loop);
};

struct AlphaShapeResult {
  Contour2D contour;
  int components = 0;
  /// Set when the alpha complex had several components; the largest was kept.
  bool disconnected = false;
};

/// Outer boundary of the alpha complex, taken as the outer face of the graph of
/// Delaunay edges no longer than 2 * alpha, so a ring of wall points encloses
/// its interior. Throws for fewer than 3 points, collinear input, or when no
/// component encloses any area.
AlphaShapeResult alpha_shape_contour(std::span<const Vec2> points, double alpha);

struct DominantContour {
  Contour2D contour;
  int start_layer = 0;
  int end_layer = 0;  // exclusive
  int lineage = 0;
  int parent = -1;  // dominant this one superseded, -1 for seeds
};

/// Cluster tracked through one layer, with the dominant contour representing it.
struct LayerCluster {
  std::vector<int> members;  // point ids
  int dominant = 0;
};

struct LayeredProxy {
  std::vector<DominantContour> dominants;
  double layer_height = 0.0;
  double z_min = 0.0;
  double z_max = 0.0;
  int num_layers = 0;
  std::vector<std::vector<LayerCluster>> layer_clusters;

  double z_low(int layer) const { return z_min + layer * layer_height; }
  double z_top(int end_layer) const { return end_layer >= num_layers ? z_max : z_min + end_layer * layer_height; }
};

struct TrackParams {
  double gamma = 0.6;
  double eps = 1.0;
  int min_pts = 8;
  double alpha = 2.0;
  double simplify_tolerance = 0.1;
};

LayeredProxy track_dominant_contours(const LayerStack& stack, const TrackParams& params);

struct FillParams {
  double beta = 0.3;
  double sample_density = 4.0;  // points per m^2
  double alpha = 2.0;
  /// wall samples closer than this to an existing point are skipped (0 = no filter)
  double coverage_radius = 0.0;
  /// a contour edge's wall in one layer is sampled only when at least this
  /// fraction of its samples is uncovered
  double min_open_fraction = 0.25;
};

struct Completion {
  std::vector<Point3> points;  // input points first, then fill samples
  std::size_t original_count = 0;
  std::size_t bottom_samples = 0;
  std::size_t side_samples = 0;
  /// (layer, dominant) pairs whose walls were sampled
  std::vector<std::pair<int, int>> filled_segments;
};

Completion fill_missing_points(std::span<const Point3> cloud, const LayeredProxy& proxy, const LayerStack& stack,
                               const FillParams& params);

/// One closed prism per dominant contour; UVs are left empty.
TexturedMesh proxy_to_mesh(const LayeredProxy& proxy);

/// Per-face prism index of a mesh returned by proxy_to_mesh.
std::vector<int> prism_of_faces(const LayeredProxy& proxy);

/// Median distance from each point to its nearest neighbor (3D).
double median_nn_distance(std::span<const Point3> cloud);

struct BpccConfig {
  double gamma = 0.6;
  double beta = 0.3;
  int num_layers = 0;  // 0 = ceil(height / target_layer_height), at least min_layers
  double target_layer_height = 3.0;
  int min_layers = 4;
  double eps_factor = 5.0;
  double alpha_factor = 5.0;
  int min_pts = 8;
  double simplify_tolerance = 0.1;
  double sample_density = 0.0;  // 0 = 1 / spacing^2 of the input cloud
  double coverage_factor = 3.0;
  /// terrain height under the building; the lowest point is used when unset
  std::optional<double> ground_z;
};

struct BpccResult {
  LayerStack stack;
  LayeredProxy proxy;
  Completion completion;
  TexturedMesh mesh;
  double spacing = 0.0;
};

/// Full completion for one building with density-adaptive defaults.
BpccResult complete_building(std::span<const Point3> cloud, const BpccConfig& cfg);

}  // namespace citygo::bpcc
