#pragma once

// Software renderer: z-buffered rasterization of textured meshes, projection
// of 3D Gaussians to screen-space splats and the depth-guarded hybrid
// composite in which the mesh acts as the final opaque surface.

#include "citygo/core.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace citygo {

struct RenderSettings {
  Vec3 background = Vec3::Zero();
  /// guard interval d_g: a splat contributes iff depth < d_m + guard
  double guard = 1.0;
  /// stop blending once transmittance drops below this; 0 disables the early-out
  double min_transmittance = 1e-4;
  double cutoff_sigma = 3.0;
  /// splats whose 1-sigma ellipse is smaller than this (px^2) are culled
  double min_footprint = 0.25;
  /// px^2 added to the diagonal of every projected covariance
  double dilation = 0.3;
  double near_plane = 0.05;
  int tile_size = 16;
};

/// Per-pixel output of the mesh pass.
struct MeshGBuffer {
  int width = 0;
  int height = 0;
  std::vector<double> depth;           // camera z, +inf on background
  Raster color;                        // c_m, background color where empty
  std::vector<std::uint32_t> building;  // 0 on background
  std::vector<int> mesh;               // index into the mesh list, -1 on background
  std::vector<int> face;               // face index within that mesh
  std::vector<Vec2> uv;                // interpolated texture coordinate

  MeshGBuffer() = default;
  MeshGBuffer(int w, int h, const Vec3& background);

  std::size_t size() const { return depth.size(); }
  bool covered(std::size_t i) const { return building[i] != 0; }
};

struct MeshRef {
  const TexturedMesh* mesh = nullptr;
  std::uint32_t building_id = 1;
};

/// Nearest triangle wins; the color is bilinearly sampled at the
/// perspective-correct UV. Meshes without UVs or texture render mid gray.
MeshGBuffer rasterize_meshes(std::span<const MeshRef> meshes, const CameraView& view, const RenderSettings& s = {});
MeshGBuffer rasterize_mesh(const TexturedMesh& mesh, const CameraView& view, const RenderSettings& s = {},
                           std::uint32_t building_id = 1);
/// A g-buffer with nothing in it.
MeshGBuffer empty_gbuffer(const CameraView& view, const RenderSettings& s = {});

struct Splat {
  int index = 0;  // source Gaussian
  Vec2 mean = Vec2::Zero();
  Vec3 cov = Vec3::Zero();    // (xx, xy, yy) after dilation
  Vec3 conic = Vec3::Zero();  // inverse covariance (a, b, c)
  double depth = 0.0;
  double opacity = 0.0;
  Vec3 color = Vec3::Zero();
  double radius = 0.0;  // cutoff radius in pixels along the major axis
};

struct SplatList {
  int width = 0;
  int height = 0;
  std::vector<Splat> splats;  // front to back
};

SplatList splat_gaussians(std::span<const Gaussian3D> gaussians, const CameraView& view, const RenderSettings& s = {});

/// Screen-space projection of one Gaussian. The scalar type is templated so
/// the same code yields Jacobians under forward-mode autodiff. `quat` is
/// (w, x, y, z) and need not be normalized.
template <class S>
struct ProjectedGaussian {
  Eigen::Matrix<S, 2, 1> mean;
  Eigen::Matrix<S, 3, 1> cov;  // before dilation
  S depth;
};

template <class S>
ProjectedGaussian<S> project_gaussian(const Eigen::Matrix<S, 3, 1>& position, const Eigen::Matrix<S, 3, 1>& scale,
                                      const Eigen::Matrix<S, 4, 1>& quat, const CameraView& view) {
  const Mat3& W = view.extrinsics.rotation;
  const Eigen::Matrix<S, 3, 1> t = W.template cast<S>() * position + view.extrinsics.translation.template cast<S>();
  const S n = quat.norm();
  const S w = quat[0] / n, x = quat[1] / n, y = quat[2] / n, z = quat[3] / n;
  Eigen::Matrix<S, 3, 3> R;
  R << S(1) - S(2) * (y * y + z * z), S(2) * (x * y - w * z), S(2) * (x * z + w * y),  //
      S(2) * (x * y + w * z), S(1) - S(2) * (x * x + z * z), S(2) * (y * z - w * x),  //
      S(2) * (x * z - w * y), S(2) * (y * z + w * x), S(1) - S(2) * (x * x + y * y);
  Eigen::Matrix<S, 3, 3> M = R;
  for (int c = 0; c < 3; ++c) M.col(c) *= scale[c];
  const Eigen::Matrix<S, 3, 3> sigma = M * M.transpose();
  const double fx = view.intrinsics.fx, fy = view.intrinsics.fy;
  const S iz = S(1) / t[2];
  Eigen::Matrix<S, 2, 3> J;
  J << S(fx) * iz, S(0), -S(fx) * t[0] * iz * iz,  //
      S(0), S(fy) * iz, -S(fy) * t[1] * iz * iz;
  const Eigen::Matrix<S, 2, 3> T = J * W.template cast<S>();
  const Eigen::Matrix<S, 2, 2> c2 = T * sigma * T.transpose();
  ProjectedGaussian<S> out;
  out.mean << S(fx) * t[0] * iz + S(view.intrinsics.cx), S(fy) * t[1] * iz + S(view.intrinsics.cy);
  out.cov << c2(0, 0), c2(0, 1), c2(1, 1);
  out.depth = t[2];
  return out;
}

struct CompositeResult {
  Raster color;
  /// transmittance left after the splat pass (T_m where the mesh covers)
  std::vector<double> transmittance;
  /// sum of T_k alpha_k over contributing splats
  std::vector<double> weight;
  std::vector<int> contributors;
};

/// Throws if the splat list is not sorted front to back.
CompositeResult composite_hybrid(const MeshGBuffer& gbuffer, const SplatList& splats, const RenderSettings& s = {});

Raster render_gaussians_only(std::span<const Gaussian3D> gaussians, const CameraView& view,
                             const RenderSettings& s = {});

/// Calls f(pixel index, splat position in the list, T_k * alpha_k) for every
/// contribution of the composite, in a fixed order. With `use_mesh` false the
/// depth guard and the mesh are ignored.
void visit_contributions(const MeshGBuffer& gbuffer, const SplatList& splats, const RenderSettings& s, bool use_mesh,
                         const std::function<void(std::size_t, int, double)>& f);

struct SplatGrad {
  Vec2 mean = Vec2::Zero();
  Vec3 conic = Vec3::Zero();
  double opacity = 0.0;
  Vec3 color = Vec3::Zero();
};

struct CompositeGrad {
  std::vector<SplatGrad> splats;  // aligned with SplatList::splats
  /// dL/dc_m per pixel (zero where the mesh does not cover)
  Raster mesh_color;
};

/// Backward pass of composite_hybrid given dL/dC per pixel.
CompositeGrad composite_backward(const MeshGBuffer& gbuffer, const SplatList& splats, const RenderSettings& s,
                                 const Raster& dl_dcolor);

struct GaussianGrad {
  Vec3 position = Vec3::Zero();
  Vec3 scale = Vec3::Zero();
  Eigen::Vector4d rotation = Eigen::Vector4d::Zero();  // (w, x, y, z)
  double opacity = 0.0;
  Vec3 color = Vec3::Zero();
  /// |dL/d mean2d|, used for densification
  double screen = 0.0;
};

/// Chains splat gradients through the projection into Gaussian parameters and
/// adds them to `out` (sized like `gaussians`).
void accumulate_gaussian_grads(std::span<const Gaussian3D> gaussians, const CameraView& view, const SplatList& splats,
                               const CompositeGrad& grad, std::vector<GaussianGrad>& out);

/// Averages factor x factor blocks; width and height must be divisible.
Raster box_downsample(const Raster& img, int factor);

}  // namespace citygo
