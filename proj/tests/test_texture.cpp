#include "doctest.h"

#include "citygo/synthetic.hpp"
#include "citygo/texture.hpp"

#include <algorithm>
#include <cmath>
#include <map>

using namespace citygo;

namespace {

bool rects_overlap(const ChartRect& a, const ChartRect& b, int gap) {
  return a.x < b.x + b.w + gap && b.x < a.x + a.w + gap && a.y < b.y + b.h + gap && b.y < a.y + a.h + gap;
}

double uv_area(const std::array<Vec2, 3>& t) {
  return 0.5 * std::abs((t[1] - t[0]).x() * (t[2] - t[0]).y() - (t[1] - t[0]).y() * (t[2] - t[0]).x());
}

double face_area(const TexturedMesh& m, int f) {
  const auto& t = m.faces[f];
  return 0.5 * (m.vertices[t[1]] - m.vertices[t[0]]).cross(m.vertices[t[2]] - m.vertices[t[0]]).norm();
}

Vec3 face_normal(const TexturedMesh& m, int f) {
  const auto& t = m.faces[f];
  return (m.vertices[t[1]] - m.vertices[t[0]]).cross(m.vertices[t[2]] - m.vertices[t[0]]).normalized();
}

// Fills each chart rectangle with a color derived from the chart index.
void paint_charts(TexturedMesh& m, const UVAtlas& atlas) {
  for (std::size_t c = 0; c < atlas.charts.size(); ++c) {
    const ChartRect& r = atlas.charts[c];
    const Vec3 col(0.1 + 0.13 * (c % 6), 0.2 + 0.1 * ((c / 6) % 7), 0.9 - 0.12 * (c % 5));
    for (int y = r.y; y < r.y + r.h; ++y)
      for (int x = r.x; x < r.x + r.w; ++x) m.texture.set_rgb(x, y, col);
  }
}

std::vector<Raster> render_rig(std::span<const MeshRef> refs, std::span<const CameraView> rig) {
  std::vector<Raster> out;
  for (const CameraView& v : rig) out.push_back(rasterize_meshes(refs, v).color);
  return out;
}

}  // namespace

TEST_CASE("atlas: unit cube gets six non-overlapping charts") {
  const TexturedMesh cube = synth::box_mesh(Vec3::Zero(), Vec3::Ones());
  REQUIRE(cube.faces.size() == 12);
  const UVAtlas atlas = generate_uv_atlas(cube);
  CHECK(atlas.charts.size() == 6);
  CHECK(atlas.resolution == 1024);
  for (std::size_t a = 0; a < atlas.charts.size(); ++a)
    for (std::size_t b = a + 1; b < atlas.charts.size(); ++b) CHECK_FALSE(rects_overlap(atlas.charts[a], atlas.charts[b], 0));
  for (int c : atlas.chart_of_face) CHECK(c >= 0);
  for (const auto& tri : atlas.uvs)
    for (const Vec2& uv : tri) CHECK(((uv.array() >= 0).all() && (uv.array() <= 1).all()));
  // every texel belongs to at most one chart, and opposite faces of the cube share none
  const std::vector<int> mask = chart_texel_mask(cube, atlas);
  std::map<int, int> counts;
  for (int c : mask)
    if (c >= 0) ++counts[c];
  CHECK(counts.size() == 6);
}

TEST_CASE("atlas: charts keep the gutter and a uniform texel density") {
  const TexturedMesh m = synth::shape_mesh(synth::twin_towers(30, 16, 8.5, 8, 6, 24));
  const UVAtlas atlas = generate_uv_atlas(m);
  for (std::size_t a = 0; a < atlas.charts.size(); ++a)
    for (std::size_t b = a + 1; b < atlas.charts.size(); ++b)
      CHECK_FALSE(rects_overlap(atlas.charts[a], atlas.charts[b], atlas.gutter - 1));
  double lo = 1e300, hi = 0;
  for (std::size_t f = 0; f < m.faces.size(); ++f) {
    const double ratio = uv_area(atlas.uvs[f]) / face_area(m, static_cast<int>(f));
    lo = std::min(lo, ratio);
    hi = std::max(hi, ratio);
  }
  CHECK(hi / lo < 2.0);
  CHECK(hi / lo == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(atlas.texel_density == doctest::Approx(std::sqrt(hi) * atlas.resolution).epsilon(1e-6));
}

TEST_CASE("atlas: resolution follows the bbox density rule") {
  AABB small{Vec3::Zero(), Vec3(10, 10, 10)};
  AABB mid{Vec3::Zero(), Vec3(30, 20, 12)};    // 1200 texels needed
  AABB huge{Vec3::Zero(), Vec3(40, 40, 400)};  // 16000 texels needed
  CHECK(atlas_resolution(small) == 1024);
  CHECK(atlas_resolution(mid) == 2048);
  CHECK(atlas_resolution(huge) == 4096);
  // too much surface for the clamped atlas scales the density down uniformly
  const TexturedMesh tower = synth::box_mesh(Vec3::Zero(), Vec3(40, 40, 400));
  const UVAtlas atlas = generate_uv_atlas(tower);
  CHECK(atlas.resolution == 4096);
  CHECK(atlas.texel_density < 40.0);
  CHECK(atlas.texel_density > 4.0);
}

TEST_CASE("atlas: zero-area faces get a one-texel chart") {
  TexturedMesh m = synth::box_mesh(Vec3::Zero(), Vec3::Ones());
  m.faces.push_back({0, 0, 1});
  const UVAtlas atlas = generate_uv_atlas(m);
  CHECK(atlas.degenerate_faces == 1);
  const ChartRect& r = atlas.charts[atlas.chart_of_face.back()];
  CHECK(r.w == 1);
  CHECK(r.h == 1);
}

TEST_CASE("rig: 28 views framing the box") {
  for (const AABB& box : {AABB{Vec3::Zero(), Vec3::Ones()}, AABB{Vec3(-1, -1, 0), Vec3(1, 1, 10)},
                          AABB{Vec3(5, 3, 0), Vec3(25, 8, 4)}}) {
    const std::vector<CameraView> rig = build_view_rig(box);
    REQUIRE(rig.size() == 28);
    std::map<long, int> azimuth_count;
    for (std::size_t i = 0; i < rig.size(); ++i) {
      const CameraView& v = rig[i];
      validate(v);
      const Vec3 eye = v.extrinsics.camera_center();
      const Vec3 d = eye - box.center();
      const double elev = std::asin(d.z() / d.norm()) * 180 / M_PI;
      CHECK(elev >= 20 - 1e-9);
      CHECK(elev <= 90 + 1e-9);
      if (i < 24) {
        CHECK(elev == doctest::Approx(i < 8 ? 20 : i < 16 ? 45 : 70));
        const double az = std::fmod(std::atan2(d.y(), d.x()) * 180 / M_PI + 360, 360);
        ++azimuth_count[std::lround(az) % 360];
      }
      CHECK((project_point(v, box.center()).pixel - Vec2(0.5 * v.width, 0.5 * v.height)).norm() < 1e-9);
      for (const Vec3& c : box.corners()) {
        const Projection p = project_point(v, c);
        CHECK(p.depth > 0);
        CHECK(p.pixel.x() >= 0);
        CHECK(p.pixel.x() <= v.width);
        CHECK(p.pixel.y() >= 0);
        CHECK(p.pixel.y() <= v.height);
      }
    }
    CHECK(azimuth_count.size() == 8);
    for (auto [az, n] : azimuth_count) {
      CHECK(az % 45 == 0);
      CHECK(n == 3);
    }
  }
}

TEST_CASE("bake: constant red views give red texels") {
  TexturedMesh cube = synth::box_mesh(Vec3::Zero(), Vec3::Constant(2));
  const UVAtlas atlas = generate_uv_atlas(cube);
  const std::vector<CameraView> rig = build_view_rig(bounds_of(cube.vertices));
  std::vector<Raster> images;
  for (const CameraView& v : rig) {
    Raster r(v.width, v.height, 3);
    for (int y = 0; y < v.height; ++y)
      for (int x = 0; x < v.width; ++x) r.set_rgb(x, y, Vec3(1, 0, 0));
    images.push_back(r);
  }
  const BakeResult b = bake_texture(cube, atlas, rig, images);
  CHECK(b.stats.covered_texels > 0);
  for (int y = 0; y < atlas.resolution; ++y)
    for (int x = 0; x < atlas.resolution; ++x)
      if (b.covered[static_cast<std::size_t>(y) * atlas.resolution + x])
        CHECK((b.texture.rgb(x, y) - Vec3(1, 0, 0)).norm() < 1e-12);
  // the unseen bottom face is inpainted from the rest
  const std::vector<int> mask = chart_texel_mask(cube, atlas);
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i] >= 0) CHECK((b.texture.rgb(i % atlas.resolution, i / atlas.resolution) - Vec3(1, 0, 0)).norm() < 1e-12);

  images.pop_back();
  CHECK_THROWS_AS(bake_texture(cube, atlas, rig, images), Error);
}

TEST_CASE("bake: a face seen by a single view takes that view's color") {
  TexturedMesh cube = synth::box_mesh(Vec3::Zero(), Vec3::Constant(2));
  const UVAtlas atlas = generate_uv_atlas(cube);
  const CameraView view = CameraView::look_at(Vec3(6, 1, 1), Vec3(1, 1, 1), Vec3::UnitZ(), 100, 96, 96);
  Raster img(96, 96, 3);
  for (int y = 0; y < 96; ++y)
    for (int x = 0; x < 96; ++x) img.set_rgb(x, y, Vec3(0.2, 0.6, 0.4));
  const std::vector<CameraView> rig{view};
  const std::vector<Raster> images{img};
  const BakeResult b = bake_texture(cube, atlas, rig, images);
  const std::vector<int> mask = chart_texel_mask(cube, atlas);
  int face_chart = -1;
  for (std::size_t f = 0; f < cube.faces.size(); ++f)
    if (face_normal(cube, static_cast<int>(f)).x() > 0.99) face_chart = atlas.chart_of_face[f];
  std::size_t on_face = 0, covered_on_face = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] == face_chart) {
      ++on_face;
      covered_on_face += b.covered[i];
    } else {
      CHECK_FALSE(b.covered[i]);
    }
    if (b.covered[i]) CHECK((b.texture.rgb(i % atlas.resolution, i / atlas.resolution) - Vec3(0.2, 0.6, 0.4)).norm() < 1e-12);
  }
  CHECK(covered_on_face == on_face);
}

TEST_CASE("bake: neighbors occluding a wall are excluded by the visibility test") {
  TexturedMesh target = synth::box_mesh(Vec3(0, 0, 0), Vec3(4, 4, 4));
  const UVAtlas atlas = generate_uv_atlas(target);
  apply_atlas(target, atlas);
  paint_charts(target, atlas);
  // a tall blue slab in front of the +x wall
  TexturedMesh blocker = synth::box_mesh(Vec3(5.5, -3, 0), Vec3(6.5, 7, 9));
  blocker.uvs.clear();
  const std::vector<CameraView> rig = build_view_rig(bounds_of(target.vertices), RigParams{{20, 45, 70}, 8, 4, 200, 150, 60, 0.8});
  const std::vector<MeshRef> both{{&target, 1}, {&blocker, 2}};
  const std::vector<Raster> images = render_rig(both, rig);
  const std::vector<MeshRef> occ{{&blocker, 2}};
  const BakeResult with = bake_texture(target, atlas, rig, images, occ);
  const BakeResult without = bake_texture(target, atlas, rig, images);
  CHECK(with.stats.occluded > 0);
  CHECK(with.stats.depth_violations == 0);
  const std::vector<int> mask = chart_texel_mask(target, atlas);
  int wall = -1;
  for (std::size_t f = 0; f < target.faces.size(); ++f)
    if (face_normal(target, static_cast<int>(f)).x() > 0.99) wall = atlas.chart_of_face[f];
  const Vec3 truth = target.texture.rgb(atlas.charts[wall].x + 1, atlas.charts[wall].y + 1);
  std::size_t seen = 0;
  double worst_with = 0, worst_without = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] != wall || !with.covered[i]) continue;
    ++seen;
    const int x = i % atlas.resolution, y = i / atlas.resolution;
    worst_with = std::max(worst_with, (with.texture.rgb(x, y) - truth).cwiseAbs().maxCoeff());
    worst_without = std::max(worst_without, (without.texture.rgb(x, y) - truth).cwiseAbs().maxCoeff());
  }
  CHECK(seen > 0);
  CHECK(worst_with <= 1.0 / 255);
  CHECK(worst_without > 1.0 / 255);
}

TEST_CASE("bake: baking renders of a textured proxy reproduces its texture") {
  TexturedMesh cube = synth::box_mesh(Vec3::Zero(), Vec3::Constant(2));
  const UVAtlas atlas = generate_uv_atlas(cube);
  apply_atlas(cube, atlas);
  const int res = atlas.resolution;
  for (int y = 0; y < res; ++y)
    for (int x = 0; x < res; ++x) cube.texture.set_rgb(x, y, Vec3(double(x) / res, double(y) / res, 0.5));
  RigParams rp;
  rp.width = 320;
  rp.height = 240;
  const std::vector<CameraView> rig = build_view_rig(bounds_of(cube.vertices), rp);
  const std::vector<MeshRef> refs{{&cube, 1}};
  const BakeResult b = bake_texture(cube, atlas, rig, render_rig(refs, rig));
  double worst = 0;
  for (int y = 0; y < res; ++y)
    for (int x = 0; x < res; ++x)
      if (b.covered[static_cast<std::size_t>(y) * res + x])
        worst = std::max(worst, (b.texture.rgb(x, y) - cube.texture.rgb(x, y)).cwiseAbs().maxCoeff());
  CHECK(worst <= 2.0 / 255);
}

TEST_CASE("bake: the rig covers every upward and lateral texel of a convex proxy") {
  const TexturedMesh m = synth::shape_mesh({synth::PrismPart{synth::circle_polygon(Vec2(3, 2), 5, 12), 0, 7}});
  const UVAtlas atlas = generate_uv_atlas(m);
  const std::vector<CameraView> rig = build_view_rig(bounds_of(m.vertices));
  std::vector<Raster> images;
  for (const CameraView& v : rig) images.emplace_back(v.width, v.height, 3, 0.3);
  const BakeResult b = bake_texture(m, atlas, rig, images);
  std::vector<std::uint8_t> downward(atlas.charts.size(), 0);
  for (std::size_t f = 0; f < m.faces.size(); ++f)
    if (face_normal(m, static_cast<int>(f)).z() < -0.99) downward[atlas.chart_of_face[f]] = 1;
  const std::vector<int> mask = chart_texel_mask(m, atlas);
  std::size_t total = 0, covered = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] < 0 || downward[mask[i]]) continue;
    ++total;
    covered += b.covered[i];
  }
  CHECK(total > 0);
  CHECK(double(covered) / total >= 0.999);
}
