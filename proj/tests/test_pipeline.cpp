#include "doctest.h"

#include "citygo/pipeline.hpp"
#include "citygo/toycity.hpp"

#include <fstream>
#include <random>
#include <set>

using namespace citygo;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "citygo_test_pipeline" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

PipelineConfig tiny_config() {
  PipelineConfig c;
  c.init_iterations = 6;
  c.optim.gaussian_iterations = 8;
  c.optim.texture_iterations = 4;
  c.optim.densify_interval = 4;
  c.atlas = {4.0, 64, 256};
  c.rig.width = 40;
  c.rig.height = 30;
  c.rig.azimuths = 4;
  c.rig.top_views = 1;
  return c;
}

synth::ToyCityParams small_city() {
  synth::ToyCityParams p;
  p.width = 48;
  p.height = 36;
  p.views_per_ring = 4;
  p.wall_density = 1.0;
  p.ground_density = 0.25;
  p.supersample = 1;
  return p;
}

// flat colored ground grid seen by a few cameras; no footprints
SceneBundle ground_bundle() {
  SceneBundle b;
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 12; ++x) {
      b.points.positions.emplace_back(x - 5.5, y - 5.5, 0.0);
      b.points.colors.emplace_back(0.2 + 0.05 * x, 0.5, 0.2 + 0.05 * y);
    }
  b.bounds = bounds_of(b.points.positions);
  PipelineConfig cfg;
  const auto init = initialize_gaussians(b.points, cfg);
  for (int i = 0; i < 4; ++i) {
    CameraView v = CameraView::look_at(Vec3(12 * std::cos(i * 1.5), 12 * std::sin(i * 1.5), 10), Vec3::Zero(),
                                       Vec3::UnitZ(), 30, 32, 24);
    v.image = render_gaussians_only(init, v);
    b.views.push_back(v);
  }
  return b;
}

}  // namespace

TEST_CASE("config keys carry the method defaults") {
  PipelineConfig c;
  CHECK(get_config_value(c, "bpcc.gamma") == "0.59999999999999998");
  CHECK(std::stod(get_config_value(c, "bpcc.beta")) == 0.3);
  CHECK(std::stod(get_config_value(c, "render.guard")) == 1.0);
  CHECK(std::stod(get_config_value(c, "residual.threshold")) == 0.2);
  CHECK(std::stod(get_config_value(c, "surround.fraction")) == 0.1);
  CHECK(std::stod(get_config_value(c, "blocks.overlap")) == 0.2);
  CHECK(std::stod(get_config_value(c, "optim.position_lr_fraction")) == 0.01);
  CHECK(get_config_value(c, "optim.densify_interval") == "500");
  CHECK(std::stod(get_config_value(c, "optim.densify_stop_fraction")) == 0.25);
  CHECK_NOTHROW(c.finalize());
}

TEST_CASE("config overrides and files") {
  PipelineConfig c;
  apply_override(c, "residual.threshold = 0.35");
  apply_override(c, "render.background=0.1, 0.2,0.3");
  apply_override(c, "pipeline.baseline=off");
  apply_override(c, "bpcc.ground_z=1.5");
  CHECK(c.residual_threshold == 0.35);
  CHECK(c.render.background == Vec3(0.1, 0.2, 0.3));
  CHECK_FALSE(c.baseline);
  CHECK(*c.bpcc.ground_z == 1.5);
  apply_override(c, "bpcc.ground_z=auto");
  CHECK_FALSE(c.bpcc.ground_z.has_value());
  CHECK_THROWS_AS(apply_override(c, "no.such.key=1"), Error);
  CHECK_THROWS_AS(apply_override(c, "optim.densify_interval=2.5"), Error);
  CHECK_THROWS_AS(apply_override(c, "seed"), Error);
  CHECK_THROWS_AS(apply_override(c, "render.background=1,2"), Error);

  const fs::path dir = scratch("config");
  {
    std::ofstream f(dir / "a.cfg");
    f << "# desk run\nseed = 7\n\noptim.gaussian_iterations = 100  # short\n";
  }
  PipelineConfig d;
  load_config_file(d, dir / "a.cfg");
  CHECK(d.seed == 7);
  CHECK(d.optim.gaussian_iterations == 100);
  {
    std::ofstream f(dir / "b.cfg");
    f << "seed = 1\nbogus = 2\n";
  }
  try {
    load_config_file(d, dir / "b.cfg");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("b.cfg:2") != std::string::npos);
  }

  SUBCASE("dump round trip") {
    std::ofstream(dir / "dump.cfg") << dump_config(c);
    PipelineConfig e;
    load_config_file(e, dir / "dump.cfg");
    CHECK(dump_config(e) == dump_config(c));
  }
  SUBCASE("finalize validates") {
    PipelineConfig e;
    e.surround_fraction = 0;
    CHECK_THROWS_AS(e.finalize(), Error);
    e = PipelineConfig{};
    e.blocks = 0;
    CHECK_THROWS_AS(e.finalize(), Error);
  }
}

TEST_CASE("footprint labels") {
  std::map<std::uint32_t, geo2d::Polygon> fp;
  fp[7] = synth::rectangle(0, 0, 4, 4);
  fp[5] = synth::rectangle(10, 0, 14, 4);
  fp[2] = synth::rectangle(6, 0, 10, 4);
  CHECK(footprint_label(Vec2(1, 1), fp) == 7);
  CHECK(footprint_label(Vec2(20, 1), fp) == 0);
  CHECK(footprint_label(Vec2(10, 2), fp) == 2);
}

TEST_CASE("segmentation is exhaustive and disjoint") {
  SceneBundle b;
  b.footprints[3] = synth::rectangle(0, 0, 5, 5);
  b.footprints[9] = synth::rectangle(5, 0, 10, 5);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-2, 12);
  std::vector<Gaussian3D> gs;
  for (int i = 0; i < 500; ++i) {
    b.points.positions.emplace_back(u(rng), u(rng), 1.0);
    Gaussian3D g;
    g.position = Vec3(u(rng), u(rng), 2.0);
    g.building_id = 77;
    gs.push_back(g);
  }
  const Segmentation s = segment_scene(b, gs);
  REQUIRE(s.buildings.size() == 2);
  CHECK(s.buildings[0].id == 3);
  std::size_t pts = s.surround_points.size(), gau = s.surround_gaussians.size();
  for (const auto& part : s.buildings) {
    pts += part.points.size();
    gau += part.gaussians.size();
    for (const auto& p : part.points) CHECK(footprint_label(p.head<2>(), b.footprints) == part.id);
    for (const auto& g : part.gaussians) CHECK(g.building_id == part.id);
  }
  for (const auto& g : s.surround_gaussians) CHECK(g.building_id == 0);
  CHECK(pts == 500);
  CHECK(gau == 500);
}

TEST_CASE("block partition") {
  AABB box;
  box.extend(Vec3(0, 0, 0));
  box.extend(Vec3(100, 100, 10));
  const auto blocks = partition_blocks(box, 4);
  REQUIRE(blocks.size() == 4);
  for (const Block& b : blocks) {
    CHECK((b.core_max - b.core_min).isApprox(Vec2(50, 50)));
    CHECK((b.max - b.min).isApprox(Vec2(70, 70)));
  }
  CHECK(blocks[0].min.isApprox(Vec2(-10, -10)));
  const auto one = partition_blocks(box, 1);
  REQUIRE(one.size() == 1);
  CHECK(one[0].core_min == Vec2(0, 0));
  CHECK(one[0].core_max == Vec2(100, 100));
  CHECK_THROWS_AS(partition_blocks(box, 0), Error);
  AABB flat;
  flat.extend(Vec3(0, 0, 0));
  flat.extend(Vec3(10, 0, 0));
  CHECK_THROWS_AS(partition_blocks(flat, 2), Error);

  SUBCASE("shared boundary goes to the lower index") {
    CHECK(block_owner(blocks, Vec2(50, 20)) == 0);
    CHECK(block_owner(blocks, Vec2(50, 50)) == 0);
    CHECK(block_owner(blocks, Vec2(70, 50)) == 1);
    CHECK(block_owner(blocks, Vec2(120, 120)) == 3);
  }
  SUBCASE("merge keeps every Gaussian exactly once") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-5, 105);
    std::vector<Gaussian3D> gs(2000);
    for (std::size_t i = 0; i < gs.size(); ++i) {
      gs[i].position = Vec3(u(rng), u(rng), 0);
      if (i % 50 == 0) gs[i].position.x() = 50.0;  // on a core edge
      gs[i].opacity = 0.1 + 0.8 * static_cast<double>(i) / gs.size();  // distinct tag
    }
    std::vector<std::vector<Gaussian3D>> per(blocks.size());
    for (const Block& b : blocks)
      for (const auto& g : gs)
        if (b.contains(g.position.head<2>())) per[static_cast<std::size_t>(b.index)].push_back(g);
    const auto merged = merge_blocks(blocks, per);
    CHECK(merged.size() == gs.size());
    std::set<double> tags;
    for (const auto& g : merged) tags.insert(g.opacity);
    CHECK(tags.size() == gs.size());
  }
}

TEST_CASE("initial Gaussians from points") {
  PointCloud c;
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x) c.positions.emplace_back(x, y, 0);
  PipelineConfig cfg;
  const auto gs = initialize_gaussians(c, cfg);
  REQUIRE(gs.size() == 100);
  // interior point: three nearest neighbours all at distance 1
  CHECK(gs[55].scale.isApprox(Vec3::Constant(0.5)));
  CHECK(gs[55].color == Vec3::Constant(0.5));
  CHECK(gs[55].opacity == cfg.init_opacity);
  CHECK(gs[55].position == c.positions[55]);
}

TEST_CASE("view split") {
  std::vector<int> train, hold;
  split_views(24, 8, train, hold);
  CHECK(hold == std::vector<int>{7, 15, 23});
  CHECK(train.size() == 21);
  for (int h : hold) CHECK(std::find(train.begin(), train.end(), h) == train.end());
}

TEST_CASE("bundle loading") {
  const fs::path dir = scratch("bundle");
  SUBCASE("three points and one camera") {
    PointCloud c;
    c.positions = {{0, 0, 0}, {1, 0, 0}, {0, 1, 2}};
    write_ply_points(dir / "p.ply", c);
    CameraView v = CameraView::look_at(Vec3(5, 5, 5), Vec3::Zero(), Vec3::UnitZ(), 20, 16, 12);
    v.image = Raster(16, 12, 3, 0.5);
    v.image_path = "img.png";
    write_cameras(dir / "c.json", {v});
    std::ofstream(dir / "m.json") << R"({"points": "p.ply", "cameras": "c.json"})";
    const SceneBundle b = load_scene(dir / "m.json");
    CHECK(b.points.size() == 3);
    CHECK(b.views.size() == 1);
    CHECK(b.bounds.max == Vec3(1, 1, 2));
  }
  SUBCASE("round trip") {
    synth::ToyCityParams p = small_city();
    p.views_per_ring = 2;
    SceneBundle b = synth::toy_city(p).bundle;
    for (auto& v : b.views) v.image = quantize_rgb8(*v.image);
    for (auto& c : b.points.colors) c = (c * 255.0).array().round() / 255.0;
    save_bundle(dir, b);
    const SceneBundle back = load_scene(dir / "manifest.json");
    CHECK(back.points == b.points);
    CHECK(back.footprints == b.footprints);
    REQUIRE(back.views.size() == b.views.size());
    for (std::size_t i = 0; i < b.views.size(); ++i) {
      CHECK(*back.views[i].image == *b.views[i].image);
      CHECK((back.views[i].extrinsics.rotation - b.views[i].extrinsics.rotation).norm() < 1e-12);
    }
  }
  SUBCASE("label without footprint") {
    PointCloud c;
    c.positions = {{0, 0, 0}, {1, 0, 0}};
    c.labels = {0, 4};
    write_ply_points(dir / "p.ply", c);
    write_cameras(dir / "c.json", {});
    std::ofstream(dir / "m.json") << R"({"points": "p.ply", "cameras": "c.json"})";
    try {
      load_scene(dir / "m.json");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("point 1") != std::string::npos);
    }
  }
  SUBCASE("missing file") {
    std::ofstream(dir / "m.json") << R"({"points": "absent.ply", "cameras": "c.json"})";
    CHECK_THROWS_AS(load_scene(dir / "m.json"), Error);
  }
}

TEST_CASE("zero buildings degenerate to a Gaussian scene") {
  const SceneBundle b = ground_bundle();
  PipelineConfig cfg = tiny_config();
  cfg.holdout_every = 4;
  const PipelineResult r = run_pipeline(b, cfg);
  CHECK(r.scene.meshes.empty());
  CHECK(r.scene.residual.empty());
  CHECK(r.scene.surround.size() > 0);
  CHECK(r.scene.surround.size() <= 144);
  CHECK(r.report.holdout_views == std::vector<int>{3});
  CHECK(r.report.initial_gaussians == 144);
  CHECK(r.report.has_baseline);
  CHECK(r.baseline.size() > 0);
}

TEST_CASE("stage errors name the stage") {
  SceneBundle b = ground_bundle();
  PipelineConfig cfg = tiny_config();
  SUBCASE("bad config") {
    cfg.surround_fraction = 2;
    try {
      run_pipeline(b, cfg);
      FAIL("expected an error");
    } catch (const StageError& e) {
      CHECK(e.stage() == "input");
      CHECK(std::string(e.what()).rfind("stage input: ", 0) == 0);
    }
  }
  SUBCASE("missing image dumps a report") {
    b.views[1].image.reset();
    const fs::path dir = scratch("failed");
    CHECK_THROWS_AS(run_pipeline(b, cfg, dir), StageError);
    CHECK(fs::exists(dir / "report.json"));
  }
}

TEST_CASE("small toy city runs end to end and deterministically") {
  const synth::ToyCity city = synth::toy_city(small_city());
  CHECK(city.bundle.footprints.size() == 4);
  PipelineConfig cfg = tiny_config();
  cfg.baseline = false;
  const PipelineResult a = run_pipeline(city.bundle, cfg);
  const PipelineResult b = run_pipeline(city.bundle, cfg);
  CHECK(a.scene.meshes.size() == 4);
  CHECK(a.scene.triangle_count() > 0);
  CHECK(serialize_scene(a.scene) == serialize_scene(b.scene));
  for (const Gaussian3D& g : a.scene.residual) CHECK(g.building_id != 0);
  for (const Gaussian3D& g : a.scene.surround) CHECK(g.building_id == 0);
  CHECK(a.report.holdout_views == std::vector<int>{7});
  const std::string js = report_json(a.report);
  CHECK(js.find("\"holdout_psnr\"") != std::string::npos);
  CHECK(js.find("\"bpcc\"") != std::string::npos);
}

TEST_CASE("render command") {
  const fs::path dir = scratch("render");
  HybridScene s;
  s.background = Vec3(0.2, 0.4, 0.6);
  save_scene(dir / "empty.cgs", s);
  std::vector<CameraView> path{CameraView::look_at(Vec3(5, 0, 5), Vec3::Zero(), Vec3::UnitZ(), 20, 16, 12)};
  write_cameras(dir / "path.json", path);
  const RenderStats st = render_command(dir / "empty.cgs", dir / "path.json", dir / "frames", std::size_t{10});
  CHECK(st.frames == 1);
  REQUIRE(st.files.size() == 1);
  CHECK(fs::exists(st.files[0]));
  Raster expected(16, 12, 3);
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 16; ++x) expected.set_rgb(x, y, s.background);
  CHECK(read_png(st.files[0]) == quantize_rgb8(expected));
  CHECK(*st.count_ratio == 0.0);
  CHECK(render_stats_json(st).find("median_frame_ms") != std::string::npos);
  CHECK_THROWS_AS(render_command(dir / "absent.cgs", dir / "path.json", dir / "frames"), Error);
}
