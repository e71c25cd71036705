#include "doctest.h"

#include "citygo/downsample.hpp"
#include "citygo/residual.hpp"
#include "citygo/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace citygo;

namespace {

CameraView axis_camera(int w, int h, double f) {
  CameraView v;
  v.intrinsics = {f, f, 0.5 * w, 0.5 * h};
  v.width = w;
  v.height = h;
  return v;
}

Gaussian3D blob(const Vec3& p, double scale, double opacity) {
  Gaussian3D g;
  g.position = p;
  g.scale = Vec3::Constant(scale);
  g.opacity = opacity;
  return g;
}

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    for (std::size_t t = i; t <= j; ++t) r[idx[t]] = 0.5 * (i + j);
    i = j + 1;
  }
  return r;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const std::vector<double> ra = ranks(a), rb = ranks(b);
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / ra.size();
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / rb.size();
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

ImportanceTable table_of(std::vector<double> importance) {
  ImportanceTable t;
  t.importance = std::move(importance);
  normalize_importance(t);
  return t;
}

}  // namespace

TEST_CASE("importance: opaque blob, occlusion and additivity") {
  RenderSettings s;
  s.min_transmittance = 0.0;
  const CameraView view = axis_camera(10, 10, 10.0);
  // huge and opaque: alpha == 1 - tiny on all 100 pixels
  std::vector<Gaussian3D> gs{blob(Vec3(0, 0, 5), 1e4, 1.0)};
  ImportanceTable t = accumulate_importance(gs, std::span(&view, 1), s);
  CHECK(t.importance[0] == doctest::Approx(100.0).epsilon(1e-6));
  CHECK(t.probability[0] == doctest::Approx(1.0));

  gs.push_back(blob(Vec3(0, 0, 8), 0.5, 0.9));
  t = accumulate_importance(gs, std::span(&view, 1), {});
  CHECK(t.importance[1] == 0.0);

  std::vector<Gaussian3D> two{blob(Vec3(0.3, 0, 5), 0.4, 0.6), blob(Vec3(-0.2, 0.1, 6), 0.5, 0.7)};
  const CameraView views[2] = {axis_camera(10, 10, 10.0),
                               CameraView::look_at(Vec3(3, 1, -2), Vec3(0, 0, 5), Vec3::UnitY(), 12.0, 12, 10)};
  const ImportanceTable both = accumulate_importance(two, views);
  const ImportanceTable a = accumulate_importance(two, std::span(views, 1));
  const ImportanceTable b = accumulate_importance(two, std::span(views + 1, 1));
  for (int k = 0; k < 2; ++k) CHECK(both.importance[k] == doctest::Approx(a.importance[k] + b.importance[k]));
  CHECK(both.probability[0] + both.probability[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("sample: uniform importances") {
  const ImportanceTable t = table_of(std::vector<double>(1000, 1.0));
  std::vector<int> hits(1000, 0);
  const int seeds = 5000;
  for (int seed = 0; seed < seeds; ++seed) {
    const std::vector<std::size_t> pick = sample_surrounding(t, 0.1, seed);
    REQUIRE(pick.size() == 100);
    REQUIRE(std::adjacent_find(pick.begin(), pick.end()) == pick.end());
    for (std::size_t k : pick) ++hits[k];
  }
  double lo = 1, hi = 0;
  for (int h : hits) {
    lo = std::min(lo, double(h) / seeds);
    hi = std::max(hi, double(h) / seeds);
  }
  CHECK(lo >= 0.08);
  CHECK(hi <= 0.12);
  CHECK(sample_surrounding(t, 0.1, 42) == sample_surrounding(t, 0.1, 42));
  CHECK(sample_surrounding(t, 0.1, 42) != sample_surrounding(t, 0.1, 43));
}

TEST_CASE("sample: inclusion follows importance") {
  std::mt19937_64 rng(9);
  std::exponential_distribution<double> e(1.0);
  std::vector<double> imp(1000);
  for (double& v : imp) v = e(rng);
  const ImportanceTable t = table_of(imp);
  std::vector<double> freq(1000, 0.0);
  for (int seed = 0; seed < 500; ++seed)
    for (std::size_t k : sample_surrounding(t, 0.1, seed)) freq[k] += 1;
  CHECK(spearman(freq, t.probability) > 0.95);
}

TEST_CASE("sample: zero importance and edge fractions") {
  std::vector<double> imp(50, 1.0);
  imp[7] = 0.0;
  const ImportanceTable t = table_of(imp);
  for (int seed = 0; seed < 200; ++seed) {
    const auto pick = sample_surrounding(t, 0.5, seed);
    CHECK(!std::binary_search(pick.begin(), pick.end(), std::size_t(7)));
  }
  const auto all = sample_surrounding(t, 1.0, 3);
  CHECK(all.size() == 49);
  CHECK(!std::binary_search(all.begin(), all.end(), std::size_t(7)));

  // a dominant item is taken with certainty
  std::vector<double> skew(100, 1.0);
  skew[0] = 1e6;
  for (int seed = 0; seed < 50; ++seed) CHECK(sample_surrounding(table_of(skew), 0.1, seed).front() == 0);

  CHECK_THROWS_AS(sample_surrounding(table_of(std::vector<double>(10, 0.0)), 0.5, 0), Error);
  CHECK_THROWS_AS(sample_surrounding(t, 0.0, 0), Error);
  CHECK_THROWS_AS(sample_surrounding(t, 1.5, 0), Error);
  CHECK(sample_uniform(1000, 0.1, 5).size() == 100);
}

TEST_CASE("sample: importance beats uniform on the surround scene") {
  const synth::SurroundScene scene = synth::surround_scene(1, 2000);
  const ImportanceTable t = accumulate_importance(scene.gaussians, scene.views);
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto score = [&](const std::vector<std::size_t>& pick) {
      const std::vector<Gaussian3D> sub = gather(std::span<const Gaussian3D>(scene.gaussians), pick);
      double p = 0;
      for (const CameraView& v : scene.views) p += psnr(render_gaussians_only(sub, v), *v.image);
      return p / scene.views.size();
    };
    wins += score(sample_surrounding(t, 0.1, seed)) > score(sample_uniform(scene.gaussians.size(), 0.1, seed));
  }
  CHECK(wins == 5);
}
