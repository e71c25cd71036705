#include "citygo/downsample.hpp"
#include "citygo/pipeline.hpp"
#include "citygo/residual.hpp"
#include "citygo/toycity.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <map>

using namespace citygo;
namespace fs = std::filesystem;

namespace {

struct ConfigFlags {
  std::string file;
  std::vector<std::string> sets;
  std::map<std::string, std::string> keyed;

  void attach(CLI::App* app) {
    app->add_option("--config", file, "key = value config file");
    app->add_option("--set", sets, "key=value override, repeatable");
    for (const ConfigKey& k : config_keys()) app->add_option("--" + k.name, keyed[k.name], k.help);
  }

  PipelineConfig build() const {
    PipelineConfig cfg;
    if (!file.empty()) load_config_file(cfg, file);
    for (const auto& [k, v] : keyed)
      if (!v.empty()) set_config_value(cfg, k, v);
    for (const std::string& s : sets) apply_override(cfg, s);
    cfg.finalize();
    return cfg;
  }
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << text << '\n';
  if (!out) throw Error(path.string() + ": write failed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid mesh and Gaussian reconstruction of urban scenes"};
  app.require_subcommand(1);

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "write the synthetic toy city as a scene bundle");
  std::string synth_out;
  synth::ToyCityParams city;
  synth_cmd->add_option("--out", synth_out, "output directory")->required();
  synth_cmd->add_option("--seed", city.seed, "point sampling seed");
  synth_cmd->add_option("--width", city.width, "image width");
  synth_cmd->add_option("--height", city.height, "image height");
  synth_cmd->add_option("--views-per-ring", city.views_per_ring, "cameras per orbit ring");

  // pipeline run
  auto* pipe_cmd = app.add_subcommand("pipeline", "end-to-end reconstruction");
  pipe_cmd->require_subcommand(1);
  auto* run_cmd = pipe_cmd->add_subcommand("run", "run every stage on a scene bundle");
  std::string manifest, run_out;
  ConfigFlags run_flags;
  run_cmd->add_option("--manifest", manifest, "scene bundle manifest")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--out", run_out, "output directory")->required();
  run_flags.attach(run_cmd);

  // render
  auto* render_cmd = app.add_subcommand("render", "render a scene file along a camera path");
  std::string render_scene_file, render_cams, render_out, render_baseline;
  std::size_t baseline_count = 0;
  render_cmd->add_option("--scene", render_scene_file, "scene file")->required();
  render_cmd->add_option("--cameras", render_cams, "camera path (camera manifest)")->required();
  render_cmd->add_option("--out", render_out, "frame directory")->required();
  auto* bc = render_cmd->add_option("--baseline-count", baseline_count, "Gaussian count of a Gaussians-only baseline");
  render_cmd->add_option("--baseline", render_baseline, "Gaussians-only baseline PLY")->excludes(bc);

  // bpcc
  auto* bpcc_cmd = app.add_subcommand("bpcc", "complete one building point cloud and extrude its proxy");
  std::string bpcc_in, bpcc_out;
  long long bpcc_id = -1;
  ConfigFlags bpcc_flags;
  bpcc_cmd->add_option("--points", bpcc_in, "point PLY")->required()->check(CLI::ExistingFile);
  bpcc_cmd->add_option("--building", bpcc_id, "only points with this building_id");
  bpcc_cmd->add_option("--out", bpcc_out, "output directory")->required();
  bpcc_flags.attach(bpcc_cmd);

  // downsample
  auto* down_cmd = app.add_subcommand("downsample", "importance-sample surrounding Gaussians");
  std::string down_in, down_cams, down_out;
  double fraction = 0.1;
  std::uint64_t down_seed = 0;
  down_cmd->add_option("--gaussians", down_in, "Gaussian PLY")->required()->check(CLI::ExistingFile);
  down_cmd->add_option("--cameras", down_cams, "training cameras")->required()->check(CLI::ExistingFile);
  down_cmd->add_option("--fraction", fraction, "kept fraction");
  down_cmd->add_option("--seed", down_seed, "sampling seed");
  down_cmd->add_option("--out", down_out, "output PLY")->required();

  // score
  auto* score_cmd = app.add_subcommand("score", "select residual Gaussians against a scene's meshes");
  std::string score_scene, score_in, score_cams, score_out;
  double threshold = 0.2;
  score_cmd->add_option("--scene", score_scene, "scene file with the proxy meshes")->required();
  score_cmd->add_option("--gaussians", score_in, "building Gaussian PLY")->required()->check(CLI::ExistingFile);
  score_cmd->add_option("--cameras", score_cams, "cameras with ground-truth images")->required()->check(CLI::ExistingFile);
  score_cmd->add_option("--threshold", threshold, "selection threshold");
  score_cmd->add_option("--out", score_out, "selected Gaussian PLY")->required();

  // metrics
  auto* metrics_cmd = app.add_subcommand("metrics", "PSNR of a scene file against posed images");
  std::string metrics_scene, metrics_cams;
  metrics_cmd->add_option("--scene", metrics_scene, "scene file")->required();
  metrics_cmd->add_option("--cameras", metrics_cams, "cameras with images")->required()->check(CLI::ExistingFile);

  // config
  auto* config_cmd = app.add_subcommand("config", "print the default configuration");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth_cmd) {
      const synth::ToyCity c = synth::toy_city(city);
      save_bundle(synth_out, c.bundle);
      std::cout << "wrote " << (fs::path(synth_out) / "manifest.json").string() << ": " << c.bundle.points.size()
                << " points, " << c.bundle.views.size() << " views, " << c.bundle.footprints.size() << " footprints\n";
    } else if (*run_cmd) {
      const PipelineConfig cfg = run_flags.build();
      const SceneBundle bundle = load_scene(manifest);
      const fs::path out = run_out;
      const PipelineResult r = run_pipeline(bundle, cfg, out / "failed");
      save_scene(out / "scene.cgs", r.scene);
      if (!r.baseline.empty()) write_ply_gaussians(out / "baseline.ply", r.baseline);
      write_text(out / "report.json", report_json(r.report));
      write_text(out / "config.txt", dump_config(cfg));
      std::cout << report_json(r.report) << '\n';
    } else if (*render_cmd) {
      std::optional<std::size_t> base;
      if (!render_baseline.empty()) base = read_ply_gaussians(render_baseline).size();
      if (bc->count()) base = baseline_count;
      const RenderStats st = render_command(render_scene_file, render_cams, render_out, base);
      write_text(fs::path(render_out) / "stats.json", render_stats_json(st));
      std::cout << render_stats_json(st) << '\n';
    } else if (*bpcc_cmd) {
      const PipelineConfig cfg = bpcc_flags.build();
      const PointCloud cloud = read_ply_points(bpcc_in);
      std::vector<Point3> pts;
      for (std::size_t i = 0; i < cloud.size(); ++i)
        if (bpcc_id < 0 || (!cloud.labels.empty() && cloud.labels[i] == static_cast<std::uint32_t>(bpcc_id)))
          pts.push_back(cloud.positions[i]);
      const bpcc::BpccResult r = bpcc::complete_building(pts, cfg.bpcc);
      PointCloud done;
      done.positions = r.completion.points;
      const fs::path out = bpcc_out;
      fs::create_directories(out);
      write_ply_points(out / "completed.ply", done);
      HybridScene proxy;
      proxy.meshes.push_back(r.mesh);
      proxy.mesh_building_ids.push_back(bpcc_id > 0 ? static_cast<std::uint32_t>(bpcc_id) : 1);
      save_scene(out / "proxy.cgs", proxy);
      nlohmann::json j = {{"input_points", pts.size()},
                          {"bottom_samples", r.completion.bottom_samples},
                          {"side_samples", r.completion.side_samples},
                          {"dominant_contours", r.proxy.dominants.size()},
                          {"layers", r.proxy.num_layers},
                          {"triangles", r.mesh.faces.size()}};
      write_text(out / "bpcc.json", j.dump(1));
      std::cout << j.dump(1) << '\n';
    } else if (*down_cmd) {
      const std::vector<Gaussian3D> gs = read_ply_gaussians(down_in);
      const std::vector<CameraView> views = read_cameras(down_cams, false);
      const ImportanceTable t = accumulate_importance(gs, views);
      const auto kept = gather<Gaussian3D>(gs, sample_surrounding(t, fraction, down_seed));
      write_ply_gaussians(down_out, kept);
      std::cout << "kept " << kept.size() << " of " << gs.size() << " Gaussians\n";
    } else if (*score_cmd) {
      const HybridScene scene = load_scene_file(score_scene);
      const std::vector<Gaussian3D> gs = read_ply_gaussians(score_in);
      const std::vector<CameraView> views = read_cameras(score_cams, true);
      std::vector<MeshRef> refs;
      for (std::size_t i = 0; i < scene.meshes.size(); ++i) refs.push_back({&scene.meshes[i], scene.mesh_building_ids[i]});
      const RenderSettings rs = scene_settings(scene);
      GaussianScoreTable table(gs.size());
      for (std::size_t v = 0; v < views.size(); ++v) {
        if (!views[v].image) throw Error("score: view " + std::to_string(v) + " has no image");
        const MeshGBuffer g = refs.empty() ? empty_gbuffer(views[v], rs) : rasterize_meshes(refs, views[v], rs);
        score_gaussians(gs, views[v], build_crm(views[v], g, static_cast<int>(v)), rs, table);
      }
      const auto kept = gather<Gaussian3D>(gs, select_residuals(table, threshold));
      write_ply_gaussians(score_out, kept);
      std::cout << "selected " << kept.size() << " of " << gs.size() << " Gaussians\n";
    } else if (*metrics_cmd) {
      const HybridScene scene = load_scene_file(metrics_scene);
      const std::vector<CameraView> views = read_cameras(metrics_cams, true);
      nlohmann::json j;
      j["views"] = nlohmann::json::array();
      double sum = 0;
      int n = 0;
      for (const CameraView& v : views) {
        if (!v.image) continue;
        const double p = psnr(render_scene(scene, v), *v.image);
        j["views"].push_back(p);
        sum += p;
        ++n;
      }
      if (n == 0) throw Error("metrics: no view with an image");
      j["mean_psnr"] = sum / n;
      j["triangles"] = scene.triangle_count();
      j["active_gaussians"] = scene.gaussian_count();
      std::cout << j.dump(1) << '\n';
    } else if (*config_cmd) {
      std::cout << dump_config(PipelineConfig{});
    }
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
