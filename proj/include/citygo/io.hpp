#pragma once

// File formats: binary little-endian PLY (points and Gaussians), 8-bit PNG,
// JSON camera manifests, GeoJSON footprint polygons and the binary hybrid
// scene container.

#include "citygo/core.hpp"
#include "citygo/geometry2d.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace citygo {

struct PointCloud {
  std::vector<Point3> positions;
  std::vector<Vec3> colors;             // empty or one per point, in [0,1]
  std::vector<std::uint32_t> labels;    // empty or one building id per point

  std::size_t size() const { return positions.size(); }
  bool operator==(const PointCloud&) const = default;
};

/// Reads x, y, z (float or double) and the optional uint32 building_id and
/// uchar red/green/blue vertex properties. Errors name the file and, for
/// bad coordinates, the point index.
PointCloud read_ply_points(const std::filesystem::path& path);
void write_ply_points(const std::filesystem::path& path, const PointCloud& cloud);

/// Gaussians as float32 vertex properties (position, scale, rotation wxyz,
/// opacity, color) plus uint32 building_id.
std::vector<Gaussian3D> read_ply_gaussians(const std::filesystem::path& path);
void write_ply_gaussians(const std::filesystem::path& path, const std::vector<Gaussian3D>& gaussians);

/// 8-bit RGB; values are clamped to [0,1] and rounded on export.
Raster read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Raster& image);
/// Quantizes to the 8-bit grid without touching disk.
Raster quantize_rgb8(const Raster& image);

/// {"views": [{"extrinsic": [12 numbers, row-major 3x4 world-to-camera],
/// "fx", "fy", "cx", "cy", "width", "height", "image"}]}. Image paths are
/// resolved against the manifest directory; images are loaded when
/// `load_images` is set.
std::vector<CameraView> read_cameras(const std::filesystem::path& path, bool load_images = true);
/// Writes views; images are written next to the manifest when present and
/// `image_path` is set.
void write_cameras(const std::filesystem::path& path, const std::vector<CameraView>& views);

/// FeatureCollection of Polygon features with an integer "id" property;
/// only the outer ring is used.
std::map<std::uint32_t, geo2d::Polygon> read_footprints(const std::filesystem::path& path);
void write_footprints(const std::filesystem::path& path, const std::map<std::uint32_t, geo2d::Polygon>& footprints);

struct HybridScene {
  std::vector<TexturedMesh> meshes;
  std::vector<std::uint32_t> mesh_building_ids;  // one per mesh
  std::vector<Gaussian3D> residual;               // building-labeled
  std::vector<Gaussian3D> surround;
  double guard = 1.0;
  Vec3 background = Vec3::Zero();

  std::size_t gaussian_count() const { return residual.size() + surround.size(); }
  std::size_t triangle_count() const;
  bool operator==(const HybridScene&) const = default;
};

/// Throws if a residual Gaussian has building id 0 or ids and meshes disagree.
void validate(const HybridScene& scene);

/// Little-endian container: magic, version, then meshes (float32 vertices,
/// int32 faces, float32 UVs, RGB8 textures) and Gaussian arrays (float32).
std::vector<std::uint8_t> serialize_scene(const HybridScene& scene);
HybridScene deserialize_scene(const std::vector<std::uint8_t>& bytes);
void save_scene(const std::filesystem::path& path, const HybridScene& scene);
HybridScene load_scene_file(const std::filesystem::path& path);

/// 64-bit FNV-1a, used for file hashes in reports and tests.
std::uint64_t fnv1a(const std::vector<std::uint8_t>& bytes);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace citygo
