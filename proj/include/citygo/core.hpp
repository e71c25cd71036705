#pragma once

// Shared data model: points, Gaussians, meshes, cameras and rasters.
// All colors are normalized RGB in [0,1]; quantization happens on export only.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace citygo {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;
using Point3 = Vec3;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One splat with a view-independent (degree-0) color.
struct Gaussian3D {
  Vec3 position = Vec3::Zero();
  Vec3 scale = Vec3::Ones();
  Quat rotation = Quat::Identity();
  double opacity = 1.0;
  Vec3 color = Vec3::Constant(0.5);
  std::uint32_t building_id = 0;  // 0 = surround

  bool operator==(const Gaussian3D& o) const {
    return position == o.position && scale == o.scale && rotation.coeffs() == o.rotation.coeffs() &&
           opacity == o.opacity && color == o.color && building_id == o.building_id;
  }
};

/// Throws if scale/rotation/opacity/color invariants do not hold.
void validate(const Gaussian3D& g);

/// R diag(scale^2) R^T.
Mat3 quaternion_to_covariance(const Gaussian3D& g);

/// Row-major raster of 1 or 3 channels.
struct Raster {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> data;

  Raster() = default;
  Raster(int w, int h, int c, double fill = 0.0);

  bool empty() const { return data.empty(); }
  std::size_t index(int x, int y, int c = 0) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  double& at(int x, int y, int c = 0) { return data[index(x, y, c)]; }
  double at(int x, int y, int c = 0) const { return data[index(x, y, c)]; }
  Vec3 rgb(int x, int y) const {
    const std::size_t i = index(x, y);
    return {data[i], data[i + 1], data[i + 2]};
  }
  void set_rgb(int x, int y, const Vec3& v) {
    const std::size_t i = index(x, y);
    data[i] = v[0];
    data[i + 1] = v[1];
    data[i + 2] = v[2];
  }
  bool operator==(const Raster& o) const = default;
};

/// Bilinear lookup on an RGB raster with texel centers at (i+0.5)/w and clamp-to-edge.
Vec3 sample_bilinear(const Raster& tex, const Vec2& uv);

/// Pixel-space bilinear lookup with pixel centers at (x+0.5, y+0.5).
Vec3 sample_pixel_bilinear(const Raster& img, const Vec2& pixel);

struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
};

/// World-to-camera rigid transform: p_cam = rotation * p_world + translation.
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Vec3 camera_center() const { return -rotation.transpose() * translation; }
};

/// Posed pinhole camera. Camera looks along +z, x right, y down.
struct CameraView {
  RigidTransform extrinsics;
  Intrinsics intrinsics;
  int width = 0;
  int height = 0;
  std::optional<Raster> image;
  std::string image_path;

  /// Camera at `eye` looking at `target`; `up` is the world up direction.
  static CameraView look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal, int width,
                            int height);
};

void validate(const CameraView& view);

struct Projection {
  Vec2 pixel = Vec2::Zero();
  double depth = 0.0;  // camera-space z
  bool behind() const { return depth <= 0.0; }
};

Projection project_point(const CameraView& view, const Point3& p);

/// Inverse of project_point for a given camera-space depth.
Point3 unproject(const CameraView& view, const Vec2& pixel, double depth);

/// Triangle mesh with per-corner UVs and an RGB texture atlas.
struct TexturedMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;
  std::vector<std::array<Vec2, 3>> uvs;  // one per face corner; may be empty before atlasing
  Raster texture;

  bool empty() const { return faces.empty(); }
  bool operator==(const TexturedMesh& o) const = default;
};

void validate(const TexturedMesh& mesh);

struct AABB {
  Vec3 min = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 max = Vec3::Constant(-std::numeric_limits<double>::infinity());

  void extend(const Vec3& p) {
    min = min.cwiseMin(p);
    max = max.cwiseMax(p);
  }
  bool valid() const { return (max.array() >= min.array()).all(); }
  Vec3 center() const { return 0.5 * (min + max); }
  Vec3 extent() const { return max - min; }
  std::array<Vec3, 8> corners() const;
};

AABB bounds_of(const std::vector<Vec3>& points);

inline constexpr double kPsnrCap = 99.0;

/// 10 log10(1/MSE) on normalized values; identical rasters give kPsnrCap.
double psnr(const Raster& a, const Raster& b);

/// Same as psnr but restricted to pixels with mask != 0.
double masked_psnr(const Raster& a, const Raster& b, const Raster& mask);

}  // namespace citygo
