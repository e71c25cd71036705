#include "citygo/pipeline.hpp"

#include "citygo/downsample.hpp"
#include "citygo/residual.hpp"
#include "spatial_grid.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace citygo {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---------------------------------------------------------------- bundle

void validate(const SceneBundle& b, bool require_images) {
  if (b.points.size() == 0) throw Error("bundle: empty point cloud");
  for (std::size_t i = 0; i < b.points.labels.size(); ++i) {
    const std::uint32_t id = b.points.labels[i];
    if (id != 0 && !b.footprints.count(id))
      throw Error("bundle: point " + std::to_string(i) + " is labeled " + std::to_string(id) + " but no footprint has that id");
  }
  for (std::size_t i = 0; i < b.views.size(); ++i) {
    validate(b.views[i]);
    if (require_images && !b.views[i].image) throw Error("bundle: view " + std::to_string(i) + " has no image");
  }
}

SceneBundle load_scene(const fs::path& manifest, bool load_images) {
  const std::string file = manifest.string();
  json j;
  {
    std::ifstream in(manifest);
    if (!in) throw Error(file + ": cannot open");
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw Error(file + ": " + e.what());
    }
  }
  const fs::path dir = manifest.parent_path();
  auto path_of = [&](const char* key) {
    if (!j.contains(key) || !j[key].is_string()) throw Error(file + ": missing '" + key + "' entry");
    return dir / j[key].get<std::string>();
  };
  SceneBundle b;
  b.points = read_ply_points(path_of("points"));
  b.views = read_cameras(path_of("cameras"), load_images);
  if (j.contains("footprints")) b.footprints = read_footprints(path_of("footprints"));
  b.bounds = bounds_of(b.points.positions);
  try {
    validate(b, load_images);
  } catch (const Error& e) {
    throw Error(file + ": " + e.what());
  }
  return b;
}

void save_bundle(const fs::path& dir, const SceneBundle& b) {
  fs::create_directories(dir);
  write_ply_points(dir / "points.ply", b.points);
  std::vector<CameraView> views = b.views;
  for (std::size_t i = 0; i < views.size(); ++i) {
    if (views[i].image && views[i].image_path.empty()) {
      char name[32];
      std::snprintf(name, sizeof name, "images/view_%03zu.png", i);
      views[i].image_path = name;
    }
  }
  write_cameras(dir / "cameras.json", views);
  json j = {{"points", "points.ply"}, {"cameras", "cameras.json"}};
  if (!b.footprints.empty()) {
    write_footprints(dir / "footprints.geojson", b.footprints);
    j["footprints"] = "footprints.geojson";
  }
  std::ofstream out(dir / "manifest.json");
  out << j.dump(1) << '\n';
  if (!out) throw Error((dir / "manifest.json").string() + ": write failed");
}

// ---------------------------------------------------------------- segmentation

std::uint32_t footprint_label(const Vec2& xy, const std::map<std::uint32_t, geo2d::Polygon>& footprints) {
  for (const auto& [id, ring] : footprints)
    if (geo2d::point_in_polygon(xy, ring)) return id;
  return 0;
}

Segmentation segment_scene(const SceneBundle& bundle, std::span<const Gaussian3D> gaussians) {
  Segmentation s;
  std::map<std::uint32_t, std::size_t> slot;
  for (const auto& [id, ring] : bundle.footprints) {
    slot[id] = s.buildings.size();
    s.buildings.push_back({id, {}, {}});
  }
  for (const Point3& p : bundle.points.positions) {
    const std::uint32_t id = footprint_label(p.head<2>(), bundle.footprints);
    if (id)
      s.buildings[slot[id]].points.push_back(p);
    else
      s.surround_points.push_back(p);
  }
  for (Gaussian3D g : gaussians) {
    g.building_id = footprint_label(g.position.head<2>(), bundle.footprints);
    if (g.building_id)
      s.buildings[slot[g.building_id]].gaussians.push_back(g);
    else
      s.surround_gaussians.push_back(g);
  }
  return s;
}

// ---------------------------------------------------------------- blocks

std::vector<Block> partition_blocks(const AABB& bounds, int target, double overlap) {
  if (target <= 0) throw Error("blocks: target block count must be positive");
  if (!bounds.valid()) throw Error("blocks: invalid bounds");
  const Vec2 lo = bounds.min.head<2>(), ext = bounds.extent().head<2>();
  if (!(ext.x() > 0 && ext.y() > 0)) throw Error("blocks: degenerate bounds");
  int nx = std::max(1, static_cast<int>(std::lround(std::sqrt(target * ext.x() / ext.y()))));
  nx = std::min(nx, target);
  const int ny = (target + nx - 1) / nx;
  std::vector<Block> out;
  const Vec2 step(ext.x() / nx, ext.y() / ny);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      Block b;
      b.index = static_cast<int>(out.size());
      b.core_min = lo + Vec2(i * step.x(), j * step.y());
      b.core_max = i + 1 == nx && j + 1 == ny ? Vec2(bounds.max.head<2>())
                   : i + 1 == nx             ? Vec2(bounds.max.x(), lo.y() + (j + 1) * step.y())
                   : j + 1 == ny             ? Vec2(lo.x() + (i + 1) * step.x(), bounds.max.y())
                                             : Vec2(lo + Vec2((i + 1) * step.x(), (j + 1) * step.y()));
      const Vec2 pad = overlap * (b.core_max - b.core_min);
      b.min = b.core_min - pad;
      b.max = b.core_max + pad;
      out.push_back(b);
    }
  return out;
}

int block_owner(std::span<const Block> blocks, const Vec2& xy) {
  if (blocks.empty()) throw Error("blocks: empty partition");
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (const Block& b : blocks) {
    if (b.core_contains(xy)) return b.index;
    const Vec2 d = (b.core_min - xy).cwiseMax(xy - b.core_max).cwiseMax(Vec2::Zero());
    if (d.squaredNorm() < best_d) {
      best_d = d.squaredNorm();
      best = b.index;
    }
  }
  return best;
}

std::vector<Gaussian3D> merge_blocks(std::span<const Block> blocks, const std::vector<std::vector<Gaussian3D>>& per_block) {
  if (per_block.size() != blocks.size()) throw Error("blocks: one Gaussian set per block required");
  std::vector<Gaussian3D> out;
  for (std::size_t b = 0; b < blocks.size(); ++b)
    for (const Gaussian3D& g : per_block[b])
      if (block_owner(blocks, g.position.head<2>()) == blocks[b].index) out.push_back(g);
  return out;
}

// ---------------------------------------------------------------- initial fit

std::vector<Gaussian3D> initialize_gaussians(const PointCloud& points, const PipelineConfig& cfg) {
  const std::size_t n = points.size();
  std::vector<Gaussian3D> out(n);
  if (n == 0) return out;
  const double spacing = n > 1 ? bpcc::median_nn_distance(points.positions) : 1.0;
  const double base = std::max(spacing, 1e-3);
  const AABB box = bounds_of(points.positions);
  const double diag = std::max(box.extent().norm(), base);
  detail::PointGrid<3> grid(std::span<const Point3>(points.positions), 2 * base);
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(cfg.init_neighbors), n - 1);
  std::vector<double> d2;
  for (std::size_t i = 0; i < n; ++i) {
    double mean = base;
    if (k > 0) {
      for (double r = 2 * base;; r *= 2) {
        d2.clear();
        grid.for_each_within(points.positions[i], r, [&](int j, double dd) {
          if (static_cast<std::size_t>(j) != i) d2.push_back(dd);
        });
        if (d2.size() >= k || r > 2 * diag) break;
      }
      if (!d2.empty()) {
        const std::size_t m = std::min(k, d2.size());
        std::partial_sort(d2.begin(), d2.begin() + static_cast<std::ptrdiff_t>(m), d2.end());
        mean = 0;
        for (std::size_t q = 0; q < m; ++q) mean += std::sqrt(d2[q]);
        mean /= static_cast<double>(m);
      }
    }
    Gaussian3D& g = out[i];
    g.position = points.positions[i];
    g.scale = Vec3::Constant(std::max(cfg.init_scale_factor * mean, 1e-4));
    g.opacity = cfg.init_opacity;
    g.color = points.colors.empty() ? Vec3::Constant(0.5) : Vec3(points.colors[i].cwiseMax(0.0).cwiseMin(1.0));
  }
  return out;
}

std::vector<Gaussian3D> fit_initial_gaussians(const SceneBundle& bundle, std::span<const CameraView> train,
                                              const PipelineConfig& cfg) {
  std::vector<Gaussian3D> gs = initialize_gaussians(bundle.points, cfg);
  OptimConfig oc = cfg.optim;
  oc.gaussian_iterations = cfg.init_iterations;
  oc.depth_weight = 0.0;
  if (cfg.blocks == 1) return optimize_gaussians(std::move(gs), {}, train, oc, cfg.render).gaussians;

  const std::vector<Block> blocks = partition_blocks(bundle.bounds, cfg.blocks, cfg.block_overlap);
  std::vector<std::vector<Gaussian3D>> per_block(blocks.size());
  for (const Block& b : blocks) {
    std::vector<Gaussian3D> subset;
    for (const Gaussian3D& g : gs)
      if (b.contains(g.position.head<2>())) subset.push_back(g);
    // views looking at the block center
    const Vec2 c2 = 0.5 * (b.core_min + b.core_max);
    const Point3 center(c2.x(), c2.y(), bundle.bounds.center().z());
    std::vector<CameraView> views;
    for (const CameraView& v : train) {
      const Projection p = project_point(v, center);
      if (!p.behind() && p.pixel.x() >= 0 && p.pixel.y() >= 0 && p.pixel.x() < v.width && p.pixel.y() < v.height)
        views.push_back(v);
    }
    if (views.empty()) views.assign(train.begin(), train.end());
    per_block[static_cast<std::size_t>(b.index)] = optimize_gaussians(std::move(subset), {}, views, oc, cfg.render).gaussians;
  }
  return merge_blocks(blocks, per_block);
}

void split_views(std::size_t count, int holdout_every, std::vector<int>& train, std::vector<int>& holdout) {
  train.clear();
  holdout.clear();
  for (std::size_t i = 0; i < count; ++i)
    (static_cast<int>(i % holdout_every) == holdout_every - 1 ? holdout : train).push_back(static_cast<int>(i));
}

// ---------------------------------------------------------------- rendering

RenderSettings scene_settings(const HybridScene& scene, const RenderSettings& base) {
  RenderSettings s = base;
  s.guard = scene.guard;
  s.background = scene.background;
  return s;
}

namespace {

std::vector<MeshRef> mesh_refs(const std::vector<TexturedMesh>& meshes, const std::vector<std::uint32_t>& ids) {
  std::vector<MeshRef> refs;
  for (std::size_t i = 0; i < meshes.size(); ++i) refs.push_back({&meshes[i], ids[i]});
  return refs;
}

std::vector<Gaussian3D> all_gaussians(const HybridScene& scene) {
  std::vector<Gaussian3D> all = scene.residual;
  all.insert(all.end(), scene.surround.begin(), scene.surround.end());
  return all;
}

}  // namespace

Raster render_scene(const HybridScene& scene, const CameraView& view, const RenderSettings& base) {
  const RenderSettings s = scene_settings(scene, base);
  const std::vector<MeshRef> refs = mesh_refs(scene.meshes, scene.mesh_building_ids);
  const MeshGBuffer g = refs.empty() ? empty_gbuffer(view, s) : rasterize_meshes(refs, view, s);
  const std::vector<Gaussian3D> all = all_gaussians(scene);
  return composite_hybrid(g, splat_gaussians(all, view, s), s).color;
}

double mean_psnr(const HybridScene& scene, std::span<const CameraView> views, const RenderSettings& base) {
  double sum = 0;
  int n = 0;
  for (const CameraView& v : views) {
    if (!v.image) continue;
    sum += psnr(render_scene(scene, v, base), *v.image);
    ++n;
  }
  if (n == 0) throw Error("psnr: no view with an image");
  return sum / n;
}

// ---------------------------------------------------------------- report

std::string report_json(const PipelineReport& r) {
  json j;
  j["stages"] = json::array();
  double total = 0;
  for (const auto& s : r.stages) {
    j["stages"].push_back({{"name", s.name}, {"seconds", s.seconds}});
    total += s.seconds;
  }
  j["total_seconds"] = total;
  j["buildings"] = json::array();
  for (const auto& b : r.buildings)
    j["buildings"].push_back({{"id", b.id},
                              {"points", b.points},
                              {"completion_samples", b.completion_samples},
                              {"triangles", b.triangles},
                              {"atlas_resolution", b.atlas_resolution},
                              {"gaussians", b.gaussians},
                              {"residual", b.residual},
                              {"skipped", b.skipped}});
  j["train_views"] = r.train_views;
  j["holdout_views"] = r.holdout_views;
  j["counts"] = {{"initial_gaussians", r.initial_gaussians},
                 {"surround_candidates", r.surround_candidates},
                 {"residual_gaussians", r.residual_gaussians},
                 {"surround_gaussians", r.surround_gaussians},
                 {"active_gaussians", r.residual_gaussians + r.surround_gaussians},
                 {"triangles", r.triangles},
                 {"densified", r.densified},
                 {"pruned", r.pruned}};
  j["holdout_psnr"] = r.holdout_psnr;
  j["train_psnr"] = r.train_psnr;
  if (r.has_baseline) {
    j["baseline"] = {{"gaussians", r.baseline_gaussians},
                     {"holdout_psnr", r.baseline_holdout_psnr},
                     {"count_ratio", r.baseline_gaussians
                                         ? static_cast<double>(r.residual_gaussians + r.surround_gaussians) /
                                               static_cast<double>(r.baseline_gaussians)
                                         : 0.0}};
  }
  if (!r.failed_stage.empty()) j["failed"] = {{"stage", r.failed_stage}, {"error", r.error}};
  return j.dump(1);
}

// ---------------------------------------------------------------- pipeline

PipelineResult run_pipeline(const SceneBundle& bundle, const PipelineConfig& cfg_in,
                            const std::optional<fs::path>& artifact_dir) {
  using clock = std::chrono::steady_clock;
  PipelineConfig cfg = cfg_in;
  PipelineResult out;
  PipelineReport& rep = out.report;
  HybridScene& scene = out.scene;
  std::vector<Gaussian3D> initial;
  bool have_initial = false;

  auto dump = [&]() {
    if (!artifact_dir) return;
    try {
      fs::create_directories(*artifact_dir);
      if (have_initial) write_ply_gaussians(*artifact_dir / "initial_gaussians.ply", initial);
      if (!scene.meshes.empty() || scene.gaussian_count()) save_scene(*artifact_dir / "partial_scene.cgs", scene);
      std::ofstream(*artifact_dir / "report.json") << report_json(rep) << '\n';
    } catch (const std::exception&) {
      // the stage error is what gets reported
    }
  };
  auto stage = [&](const std::string& name, auto&& fn) {
    const auto t0 = clock::now();
    try {
      fn();
    } catch (const std::exception& e) {
      rep.failed_stage = name;
      rep.error = e.what();
      dump();
      throw StageError(name, e.what());
    }
    const double sec = std::chrono::duration<double>(clock::now() - t0).count();
    for (auto& s : rep.stages)
      if (s.name == name) {
        s.seconds += sec;
        return;
      }
    rep.stages.push_back({name, sec});
  };

  std::vector<CameraView> train, holdout;
  stage("input", [&] {
    cfg.finalize();
    validate(bundle, true);
    split_views(bundle.views.size(), cfg.holdout_every, rep.train_views, rep.holdout_views);
    for (int i : rep.train_views) train.push_back(bundle.views[static_cast<std::size_t>(i)]);
    for (int i : rep.holdout_views) holdout.push_back(bundle.views[static_cast<std::size_t>(i)]);
    if (train.empty()) throw Error("no training views");
    scene.guard = cfg.render.guard;
    scene.background = cfg.render.background;
  });
  const RenderSettings& rs = cfg.render;

  stage("init", [&] {
    initial = fit_initial_gaussians(bundle, train, cfg);
    for (Gaussian3D& g : initial) g.building_id = 0;
    have_initial = true;
    rep.initial_gaussians = initial.size();
  });

  Segmentation seg;
  stage("segment", [&] { seg = segment_scene(bundle, initial); });

  std::vector<Gaussian3D> building_gaussians;
  std::vector<Gaussian3D> candidates = seg.surround_gaussians;
  std::optional<double> ground_z = cfg.bpcc.ground_z;
  if (!ground_z && !seg.surround_points.empty()) {
    double z = std::numeric_limits<double>::infinity();
    for (const Point3& p : seg.surround_points) z = std::min(z, p.z());
    ground_z = z;
  }

  for (BuildingPart& part : seg.buildings) {
    BuildingReport br;
    br.id = part.id;
    br.points = part.points.size();
    br.gaussians = part.gaussians.size();
    const std::string tag = "building " + std::to_string(part.id) + ": ";
    if (part.points.size() < kMinBuildingPoints) {
      br.skipped = true;
      for (Gaussian3D g : part.gaussians) {
        g.building_id = 0;
        candidates.push_back(g);
      }
      rep.buildings.push_back(br);
      continue;
    }
    TexturedMesh mesh;
    UVAtlas atlas;
    stage("bpcc", [&] {
      try {
        bpcc::BpccConfig bc = cfg.bpcc;
        bc.ground_z = ground_z;
        bpcc::BpccResult r = bpcc::complete_building(part.points, bc);
        br.completion_samples = r.completion.bottom_samples + r.completion.side_samples;
        mesh = std::move(r.mesh);
        if (mesh.empty()) throw Error("empty proxy mesh");
      } catch (const Error& e) {
        throw Error(tag + e.what());
      }
    });
    stage("atlas", [&] {
      try {
        atlas = generate_uv_atlas(mesh, cfg.atlas);
        apply_atlas(mesh, atlas);
        br.atlas_resolution = atlas.resolution;
        br.triangles = mesh.faces.size();
      } catch (const Error& e) {
        throw Error(tag + e.what());
      }
    });
    stage("bake", [&] {
      try {
        const std::vector<CameraView> rig = build_view_rig(bounds_of(mesh.vertices), cfg.rig);
        std::vector<Raster> images;
        for (const CameraView& v : rig) images.push_back(render_gaussians_only(part.gaussians, v, rs));
        mesh.texture = bake_texture(mesh, atlas, rig, images).texture;
      } catch (const Error& e) {
        throw Error(tag + e.what());
      }
    });
    scene.meshes.push_back(std::move(mesh));
    scene.mesh_building_ids.push_back(part.id);
    building_gaussians.insert(building_gaussians.end(), part.gaussians.begin(), part.gaussians.end());
    rep.buildings.push_back(br);
  }

  std::vector<MeshRef> refs = mesh_refs(scene.meshes, scene.mesh_building_ids);
  stage("residual", [&] {
    if (refs.empty() || building_gaussians.empty()) return;
    GaussianScoreTable table(building_gaussians.size());
    for (std::size_t v = 0; v < train.size(); ++v) {
      const MeshGBuffer g = rasterize_meshes(refs, train[v], rs);
      const ColorResidualMap crm = build_crm(train[v], g, static_cast<int>(v));
      score_gaussians(building_gaussians, train[v], crm, rs, table);
    }
    scene.residual = gather<Gaussian3D>(building_gaussians, select_residuals(table, cfg.residual_threshold));
    for (const Gaussian3D& g : scene.residual)
      for (auto& br : rep.buildings)
        if (br.id == g.building_id) ++br.residual;
  });

  stage("downsample", [&] {
    rep.surround_candidates = candidates.size();
    if (candidates.empty()) return;
    const ImportanceTable table = accumulate_importance(candidates, train, rs);
    scene.surround = gather<Gaussian3D>(candidates, sample_surrounding(table, cfg.surround_fraction, cfg.seed));
  });

  stage("finetune", [&] {
    if (refs.empty() || cfg.optim.texture_iterations == 0) return;
    const std::vector<Gaussian3D> fixed = all_gaussians(scene);
    const UvFinetuneResult r = finetune_uv(refs, train, fixed, cfg.optim, rs);
    for (std::size_t i = 0; i < scene.meshes.size(); ++i)
      scene.meshes[i].texture = smooth_texture(r.textures[i], cfg.optim.kernel);
  });

  stage("optimize", [&] {
    const GaussianOptResult r = optimize_gaussians(all_gaussians(scene), refs, train, cfg.optim, rs);
    rep.densified = r.densified;
    rep.pruned = r.pruned;
    scene.residual.clear();
    scene.surround.clear();
    for (const Gaussian3D& g : r.gaussians) (g.building_id ? scene.residual : scene.surround).push_back(g);
    validate(scene);
  });
  rep.residual_gaussians = scene.residual.size();
  rep.surround_gaussians = scene.surround.size();
  rep.triangles = scene.triangle_count();

  stage("evaluate", [&] {
    rep.train_psnr = mean_psnr(scene, train, rs);
    if (!holdout.empty()) rep.holdout_psnr = mean_psnr(scene, holdout, rs);
  });

  if (cfg.baseline) {
    stage("baseline", [&] {
      out.baseline = optimize_gaussians(initial, {}, train, cfg.optim, rs).gaussians;
      rep.has_baseline = true;
      rep.baseline_gaussians = out.baseline.size();
      HybridScene b;
      b.surround = out.baseline;
      b.guard = scene.guard;
      b.background = scene.background;
      if (!holdout.empty()) rep.baseline_holdout_psnr = mean_psnr(b, holdout, rs);
    });
  }
  return out;
}

// ---------------------------------------------------------------- render command

RenderStats render_command(const fs::path& scene_file, const fs::path& cameras, const fs::path& out_dir,
                           std::optional<std::size_t> baseline_gaussians) {
  using clock = std::chrono::steady_clock;
  const HybridScene scene = load_scene_file(scene_file);
  const std::vector<CameraView> views = read_cameras(cameras, false);
  RenderStats st;
  st.triangles = scene.triangle_count();
  st.gaussians = scene.gaussian_count();
  if (baseline_gaussians) {
    if (*baseline_gaussians == 0) throw Error("render: baseline Gaussian count must be positive");
    st.count_ratio = static_cast<double>(st.gaussians) / static_cast<double>(*baseline_gaussians);
  }
  std::vector<double> ms;
  for (std::size_t i = 0; i < views.size(); ++i) {
    const auto t0 = clock::now();
    const Raster img = render_scene(scene, views[i]);
    ms.push_back(std::chrono::duration<double, std::milli>(clock::now() - t0).count());
    char name[32];
    std::snprintf(name, sizeof name, "frame_%04zu.png", i);
    write_png(out_dir / name, img);
    st.files.push_back(out_dir / name);
  }
  st.frames = views.size();
  if (!ms.empty()) {
    st.mean_ms = std::accumulate(ms.begin(), ms.end(), 0.0) / static_cast<double>(ms.size());
    std::sort(ms.begin(), ms.end());
    const std::size_t h = ms.size() / 2;
    st.median_ms = ms.size() % 2 ? ms[h] : 0.5 * (ms[h - 1] + ms[h]);
  }
  return st;
}

std::string render_stats_json(const RenderStats& s) {
  json j = {{"frames", s.frames},
            {"mean_frame_ms", s.mean_ms},
            {"median_frame_ms", s.median_ms},
            {"triangles", s.triangles},
            {"active_gaussians", s.gaussians}};
  if (s.count_ratio) j["count_ratio_vs_baseline"] = *s.count_ratio;
  return j.dump(1);
}

}  // namespace citygo
