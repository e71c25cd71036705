#pragma once

// Texture atlas construction for proxy meshes, the virtual camera rig around
// a building and texture baking by back-projection of rig images.

#include "citygo/core.hpp"
#include "citygo/render.hpp"

#include <span>
#include <vector>

namespace citygo {

struct AtlasParams {
  double texels_per_meter = 40.0;
  int min_resolution = 1024;
  int max_resolution = 4096;
  int gutter = 4;  // texels between charts
  double coplanar_tolerance = 1e-6;
};

struct ChartRect {
  int x = 0, y = 0;  // texel offset
  int w = 0, h = 0;
};

struct UVAtlas {
  int resolution = 0;
  /// texels per meter actually used; identical for every chart
  double texel_density = 0.0;
  int gutter = 0;
  std::vector<int> chart_of_face;
  std::vector<ChartRect> charts;
  std::vector<std::array<Vec2, 3>> uvs;
  int degenerate_faces = 0;
};

/// Smallest power of two in [min, max] resolving the largest bbox extent at
/// the requested density, clamped to the range.
int atlas_resolution(const AABB& box, const AtlasParams& p = {});

/// Coplanar edge-connected faces share a chart; charts are shelf packed
/// with a uniform texel density scaled down only if they would not fit.
UVAtlas generate_uv_atlas(const TexturedMesh& mesh, const AtlasParams& p = {});

/// Copies the atlas UVs into the mesh and allocates a square texture.
void apply_atlas(TexturedMesh& mesh, const UVAtlas& atlas, const Vec3& fill = Vec3::Constant(0.5));

/// Per-texel chart membership (-1 for gutter and free space).
std::vector<int> chart_texel_mask(const TexturedMesh& mesh, const UVAtlas& atlas);

struct RigParams {
  std::vector<double> elevations_deg{20.0, 45.0, 70.0};
  int azimuths = 8;
  int top_views = 4;
  int width = 160;
  int height = 120;
  double fov_deg = 60.0;  // horizontal
  /// fraction of the smaller image side the bbox may span
  double fill = 0.8;
};

/// Ring views then top views, all looking at the bbox center.
std::vector<CameraView> build_view_rig(const AABB& box, const RigParams& p = {});

struct BakeStats {
  std::size_t chart_texels = 0;
  std::size_t covered_texels = 0;
  std::size_t contributions = 0;
  /// texel/view pairs in frame and front facing but hidden by other surfaces
  std::size_t occluded = 0;
  /// accepted contributions whose surface point lies behind the z-buffer; always 0
  std::size_t depth_violations = 0;
};

struct BakeResult {
  Raster texture;
  std::vector<std::uint8_t> covered;  // per texel, seen by at least one view
  BakeStats stats;
};

/// `images[i]` must be rendered from `rig[i]`. Other surfaces occluding the
/// mesh are passed in `occluders`. Unseen chart texels are inpainted and
/// charts are dilated into the gutter.
BakeResult bake_texture(const TexturedMesh& mesh, const UVAtlas& atlas, std::span<const CameraView> rig,
                        std::span<const Raster> images, std::span<const MeshRef> occluders = {});

}  // namespace citygo
