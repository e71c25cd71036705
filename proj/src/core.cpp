#include "citygo/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace citygo {

void validate(const Gaussian3D& g) {
  if (!g.position.allFinite()) throw Error("gaussian: non-finite position");
  if (!(g.scale.array() > 0.0).all() || !g.scale.allFinite()) throw Error("gaussian: scale must be positive");
  if (std::abs(g.rotation.norm() - 1.0) > 1e-6) throw Error("gaussian: rotation is not a unit quaternion");
  if (!(g.opacity >= 0.0 && g.opacity <= 1.0)) throw Error("gaussian: opacity outside [0,1]");
  if (!((g.color.array() >= 0.0).all() && (g.color.array() <= 1.0).all()))
    throw Error("gaussian: color outside [0,1]");
}

Mat3 quaternion_to_covariance(const Gaussian3D& g) {
  const Mat3 r = g.rotation.normalized().toRotationMatrix();
  const Vec3 s2 = g.scale.cwiseProduct(g.scale);
  Mat3 cov = r * s2.asDiagonal() * r.transpose();
  // exact symmetry
  return 0.5 * (cov + cov.transpose());
}

Raster::Raster(int w, int h, int c, double fill)
    : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {
  if (w < 0 || h < 0 || (c != 1 && c != 3)) throw Error("raster: invalid dimensions");
}

namespace {

Vec3 bilinear_at(const Raster& img, double x, double y) {
  // x, y are continuous coordinates in texel units where texel i is centered at i
  const int w = img.width;
  const int h = img.height;
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  const int x0 = std::min(static_cast<int>(x), w - 1);
  const int y0 = std::min(static_cast<int>(y), h - 1);
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  return (1 - fx) * (1 - fy) * img.rgb(x0, y0) + fx * (1 - fy) * img.rgb(x1, y0) +
         (1 - fx) * fy * img.rgb(x0, y1) + fx * fy * img.rgb(x1, y1);
}

}  // namespace

Vec3 sample_bilinear(const Raster& tex, const Vec2& uv) {
  return bilinear_at(tex, uv.x() * tex.width - 0.5, uv.y() * tex.height - 0.5);
}

Vec3 sample_pixel_bilinear(const Raster& img, const Vec2& pixel) {
  return bilinear_at(img, pixel.x() - 0.5, pixel.y() - 0.5);
}

CameraView CameraView::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal, int width,
                               int height) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 right = forward.cross(up);
  if (right.norm() < 1e-9) right = forward.cross(Vec3::UnitY());
  right.normalize();
  const Vec3 down = forward.cross(right);
  CameraView v;
  v.extrinsics.rotation.row(0) = right;
  v.extrinsics.rotation.row(1) = down;
  v.extrinsics.rotation.row(2) = forward;
  v.extrinsics.translation = -v.extrinsics.rotation * eye;
  v.intrinsics = {focal, focal, 0.5 * width, 0.5 * height};
  v.width = width;
  v.height = height;
  return v;
}

void validate(const CameraView& view) {
  const auto& k = view.intrinsics;
  if (!(k.fx > 0 && k.fy > 0)) throw Error("camera: focal lengths must be positive");
  if (view.width <= 0 || view.height <= 0) throw Error("camera: empty resolution");
  if (!(k.cx >= 0 && k.cx <= view.width && k.cy >= 0 && k.cy <= view.height))
    throw Error("camera: principal point outside image");
  const Mat3& r = view.extrinsics.rotation;
  if (!(r * r.transpose()).isApprox(Mat3::Identity(), 1e-6) || r.determinant() < 0)
    throw Error("camera: extrinsic rotation is not orthonormal");
  if (view.image && (view.image->width != view.width || view.image->height != view.height))
    throw Error("camera: image size does not match resolution");
}

Projection project_point(const CameraView& view, const Point3& p) {
  const Vec3 c = view.extrinsics.apply(p);
  const auto& k = view.intrinsics;
  Projection out;
  out.depth = c.z();
  if (c.z() == 0.0) {
    out.pixel = Vec2(k.cx, k.cy);
    return out;
  }
  out.pixel = Vec2(k.fx * c.x() / c.z() + k.cx, k.fy * c.y() / c.z() + k.cy);
  return out;
}

Point3 unproject(const CameraView& view, const Vec2& pixel, double depth) {
  const auto& k = view.intrinsics;
  const Vec3 c((pixel.x() - k.cx) / k.fx * depth, (pixel.y() - k.cy) / k.fy * depth, depth);
  return view.extrinsics.rotation.transpose() * (c - view.extrinsics.translation);
}

void validate(const TexturedMesh& mesh) {
  const int n = static_cast<int>(mesh.vertices.size());
  for (std::size_t f = 0; f < mesh.faces.size(); ++f)
    for (int i : mesh.faces[f])
      if (i < 0 || i >= n) throw Error("mesh: face " + std::to_string(f) + " index out of range");
  if (!mesh.uvs.empty()) {
    if (mesh.uvs.size() != mesh.faces.size()) throw Error("mesh: uv count does not match face count");
    for (const auto& tri : mesh.uvs)
      for (const Vec2& uv : tri)
        if (!(uv.x() >= 0 && uv.x() <= 1 && uv.y() >= 0 && uv.y() <= 1))
          throw Error("mesh: uv outside [0,1]^2");
  }
}

std::array<Vec3, 8> AABB::corners() const {
  std::array<Vec3, 8> c;
  for (int i = 0; i < 8; ++i)
    c[i] = Vec3((i & 1) ? max.x() : min.x(), (i & 2) ? max.y() : min.y(), (i & 4) ? max.z() : min.z());
  return c;
}

AABB bounds_of(const std::vector<Vec3>& points) {
  AABB b;
  for (const auto& p : points) b.extend(p);
  return b;
}

namespace {

double psnr_from_mse(double mse) {
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

void check_same_shape(const Raster& a, const Raster& b) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels)
    throw Error("psnr: raster dimensions differ");
}

}  // namespace

double psnr(const Raster& a, const Raster& b) {
  check_same_shape(a, b);
  if (a.data.empty()) throw Error("psnr: empty raster");
  double se = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    se += d * d;
  }
  return psnr_from_mse(se / static_cast<double>(a.data.size()));
}

double masked_psnr(const Raster& a, const Raster& b, const Raster& mask) {
  check_same_shape(a, b);
  if (mask.width != a.width || mask.height != a.height) throw Error("psnr: mask dimensions differ");
  double se = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x) {
      if (mask.at(x, y) == 0.0) continue;
      for (int c = 0; c < a.channels; ++c) {
        const double d = a.at(x, y, c) - b.at(x, y, c);
        se += d * d;
        ++n;
      }
    }
  if (n == 0) throw Error("psnr: empty mask");
  return psnr_from_mse(se / static_cast<double>(n));
}

}  // namespace citygo
