#pragma once

// End-to-end reconstruction of a hybrid scene from a scene bundle, plus the
// segmentation, block partitioning, evaluation and rendering around it.

#include "citygo/config.hpp"
#include "citygo/io.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace citygo {

struct SceneBundle {
  PointCloud points;  // labels optional, 0 = surround
  std::vector<CameraView> views;
  std::map<std::uint32_t, geo2d::Polygon> footprints;
  AABB bounds;  // of the points
};

/// Throws if a labeled point names a missing footprint or a view has no image.
void validate(const SceneBundle& bundle, bool require_images = true);

/// Manifest: {"points": "...ply", "cameras": "...json", "footprints": "...geojson"},
/// paths relative to the manifest. "footprints" may be omitted.
SceneBundle load_scene(const std::filesystem::path& manifest, bool load_images = true);
/// Writes manifest.json, points.ply, cameras.json (+ images/), footprints.geojson into `dir`.
void save_bundle(const std::filesystem::path& dir, const SceneBundle& bundle);

/// Smallest footprint id whose polygon contains xy (boundary included), 0 if none.
std::uint32_t footprint_label(const Vec2& xy, const std::map<std::uint32_t, geo2d::Polygon>& footprints);

struct BuildingPart {
  std::uint32_t id = 0;
  std::vector<Point3> points;
  std::vector<Gaussian3D> gaussians;  // building_id set to id
};

struct Segmentation {
  std::vector<BuildingPart> buildings;  // one per footprint, ascending id
  std::vector<Point3> surround_points;
  std::vector<Gaussian3D> surround_gaussians;  // building_id 0
};

Segmentation segment_scene(const SceneBundle& bundle, std::span<const Gaussian3D> gaussians);

struct Block {
  int index = 0;
  Vec2 core_min, core_max;
  Vec2 min, max;  // expanded
  bool contains(const Vec2& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
  bool core_contains(const Vec2& p) const {
    return (p.array() >= core_min.array()).all() && (p.array() <= core_max.array()).all();
  }
};

/// Regular xy grid of about `target` blocks, each expanded by `overlap` of
/// its extent on every side.
std::vector<Block> partition_blocks(const AABB& bounds, int target, double overlap = 0.2);
/// Index of the block owning xy: the lowest-index core containing it, else the nearest core.
int block_owner(std::span<const Block> blocks, const Vec2& xy);
/// Keeps each Gaussian of block b only when b owns its position.
std::vector<Gaussian3D> merge_blocks(std::span<const Block> blocks, const std::vector<std::vector<Gaussian3D>>& per_block);

/// One Gaussian per point: isotropic scale from the nearest neighbours,
/// the point color (mid gray when absent) and the configured opacity.
std::vector<Gaussian3D> initialize_gaussians(const PointCloud& points, const PipelineConfig& cfg);

/// Initialization plus Gaussians-only optimization over the training views,
/// per block when more than one is configured.
std::vector<Gaussian3D> fit_initial_gaussians(const SceneBundle& bundle, std::span<const CameraView> train,
                                              const PipelineConfig& cfg);

/// Indices of held-out and training views.
void split_views(std::size_t count, int holdout_every, std::vector<int>& train, std::vector<int>& holdout);

RenderSettings scene_settings(const HybridScene& scene, const RenderSettings& base = {});
Raster render_scene(const HybridScene& scene, const CameraView& view, const RenderSettings& base = {});
/// Mean PSNR over views that carry images.
double mean_psnr(const HybridScene& scene, std::span<const CameraView> views, const RenderSettings& base = {});

struct StageTiming {
  std::string name;
  double seconds = 0.0;
};

struct BuildingReport {
  std::uint32_t id = 0;
  std::size_t points = 0;
  std::size_t completion_samples = 0;
  std::size_t triangles = 0;
  int atlas_resolution = 0;
  std::size_t gaussians = 0;
  std::size_t residual = 0;
  bool skipped = false;  // too few points for a proxy
};

struct PipelineReport {
  std::vector<StageTiming> stages;
  std::vector<BuildingReport> buildings;
  std::vector<int> train_views, holdout_views;
  std::size_t initial_gaussians = 0;
  std::size_t surround_candidates = 0;
  std::size_t residual_gaussians = 0;
  std::size_t surround_gaussians = 0;
  std::size_t triangles = 0;
  std::size_t densified = 0;  // by the final optimization
  std::size_t pruned = 0;
  double holdout_psnr = 0.0;
  double train_psnr = 0.0;
  bool has_baseline = false;
  std::size_t baseline_gaussians = 0;
  double baseline_holdout_psnr = 0.0;
  std::string failed_stage;
  std::string error;
};

std::string report_json(const PipelineReport& report);

struct PipelineResult {
  HybridScene scene;
  PipelineReport report;
  std::vector<Gaussian3D> baseline;  // empty unless enabled
};

/// Error raised by a pipeline stage; what() starts with "stage <name>: ".
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& message)
      : Error("stage " + stage + ": " + message), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

/// Buildings with fewer points than this get no proxy; their Gaussians join the surround.
inline constexpr std::size_t kMinBuildingPoints = 50;

/// On failure the completed artifacts and a report are written to
/// `artifact_dir` when given, then a StageError is thrown.
PipelineResult run_pipeline(const SceneBundle& bundle, const PipelineConfig& cfg,
                            const std::optional<std::filesystem::path>& artifact_dir = {});

struct RenderStats {
  std::size_t frames = 0;
  double mean_ms = 0.0;
  double median_ms = 0.0;
  std::size_t triangles = 0;
  std::size_t gaussians = 0;
  std::optional<double> count_ratio;  // gaussians / baseline
  std::vector<std::filesystem::path> files;
};

/// Renders every camera of `cameras` (images not required) to out_dir/frame_NNNN.png.
RenderStats render_command(const std::filesystem::path& scene_file, const std::filesystem::path& cameras,
                           const std::filesystem::path& out_dir, std::optional<std::size_t> baseline_gaussians = {});
std::string render_stats_json(const RenderStats& stats);

}  // namespace citygo
