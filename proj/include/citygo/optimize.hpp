#pragma once

// Gradient-based refinement: UV texture finetuning through the hybrid
// renderer and optimization of residual and surrounding Gaussians.

#include "citygo/core.hpp"
#include "citygo/render.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace citygo {

/// Square, normalized convolution kernel.
struct SmoothingKernel {
  int size = 1;
  std::vector<double> weights{1.0};  // row-major size x size

  static SmoothingKernel identity();
  static SmoothingKernel box(int size);
  static SmoothingKernel gaussian(int size, double sigma);

  int radius() const { return size / 2; }
  double at(int dx, int dy) const { return weights[(dy + radius()) * size + dx + radius()]; }
  void validate() const;
};

/// Convolution with clamp-to-edge borders.
Raster smooth_texture(const Raster& tex, const SmoothingKernel& k);
/// Adjoint of smooth_texture, for gradients w.r.t. the unsmoothed texture.
Raster smooth_texture_adjoint(const Raster& grad, const SmoothingKernel& k);

/// Bilinear sample of the smoothed texture without smoothing all of it.
/// `taps` (optional) receives (texel index, d value / d texel) pairs.
Vec3 sample_smoothed(const Raster& tex, const SmoothingKernel& k, const Vec2& uv,
                     std::vector<std::pair<int, double>>* taps = nullptr);

struct OptimConfig {
  int gaussian_iterations = 5000;
  int texture_iterations = 2000;  // counted in view steps
  double base_lr = 0.05;          // opacity; other rates are multiples of it
  double color_lr_scale = 0.05;
  double scale_lr_scale = 0.1;
  double rotation_lr_scale = 0.02;
  /// position rate = fraction * base_lr * scene extent
  double position_lr_fraction = 0.01;
  /// exponential decay of the position rate to this ratio at the last iteration
  double position_lr_final_ratio = 0.01;
  double scene_extent = 0.0;  // 0 = diagonal of the Gaussian bounds
  double texture_lr = 0.02;
  double texture_lr_final = 0.002;
  int densify_interval = 500;
  /// densification stops at this fraction of gaussian_iterations
  double densify_stop_fraction = 0.25;
  double densify_grad_threshold = 0.3;  // mean |dL/d mean2d| in 1/px scaled by pixel count
  double percent_dense = 0.01;
  double prune_opacity = 0.005;
  std::size_t max_gaussians = 200000;
  SmoothingKernel kernel = SmoothingKernel::gaussian(3, 0.8);
  double ssim_weight = 0.2;
  double depth_weight = 1.0;
  /// the depth term fades linearly to zero at this fraction of the iterations
  double depth_decay_fraction = 0.3;
  std::uint64_t seed = 0;

  int densify_stop() const { return static_cast<int>(densify_stop_fraction * gaussian_iterations); }
  void validate() const;
};

struct UvFinetuneResult {
  std::vector<Raster> textures;  // unsmoothed, one per mesh
  std::vector<double> epoch_loss;
  std::size_t texels_updated = 0;
};

/// Optimizes the textures of `meshes` against the ground truth of `views`
/// with the Gaussians held fixed. Throws if no view sees any mesh.
UvFinetuneResult finetune_uv(std::span<const MeshRef> meshes, std::span<const CameraView> views,
                             std::span<const Gaussian3D> gaussians, const OptimConfig& cfg,
                             const RenderSettings& rs = {});

struct GaussianOptResult {
  std::vector<Gaussian3D> gaussians;
  std::vector<double> loss;  // per iteration
  std::vector<std::size_t> count;  // Gaussian count per iteration
  std::size_t densified = 0;
  std::size_t pruned = 0;
};

/// Renders the Gaussians over the meshes (Gaussians alone when `meshes` is
/// empty). Building Gaussians (id != 0) get the behind-mesh depth hinge.
GaussianOptResult optimize_gaussians(std::vector<Gaussian3D> gaussians, std::span<const MeshRef> meshes,
                                     std::span<const CameraView> views, const OptimConfig& cfg,
                                     const RenderSettings& rs = {});

/// Depth hinge sum of w * max(0, d - d_m - d_g)^2 over splats whose mean
/// pixel is covered by the mesh; adds d/d position to `grads` when given.
double depth_hinge(std::span<const Gaussian3D> gaussians, const CameraView& view, const MeshGBuffer& g,
                   const RenderSettings& rs, double weight, std::vector<GaussianGrad>* grads = nullptr);

struct GradientEntry {
  std::string name;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradientReport {
  std::vector<GradientEntry> entries;
  double max_rel_error = 0.0;
  double loss = 0.0;
};

struct GradientScene {
  std::vector<TexturedMesh> meshes;
  std::vector<Gaussian3D> gaussians;
  CameraView view;  // with ground truth
  RenderSettings settings;
  SmoothingKernel kernel = SmoothingKernel::identity();
};

/// Analytic gradients of the L1 loss of the hybrid render against central
/// differences of an independent forward path (full-texture smoothing and
/// the mesh rasterizer).
GradientReport check_gradients(const GradientScene& scene, double h = 1e-4);

}  // namespace citygo
