#include "doctest.h"

#include "citygo/core.hpp"

#include <Eigen/Eigenvalues>

#include <random>

using namespace citygo;

TEST_CASE("covariance of isotropic and axis-aligned gaussians") {
  Gaussian3D g;
  CHECK(quaternion_to_covariance(g).isApprox(Mat3::Identity(), 1e-15));
  g.scale = Vec3(2, 1, 1);
  Mat3 expected = Vec3(4, 1, 1).asDiagonal();
  CHECK(quaternion_to_covariance(g).isApprox(expected, 1e-15));
}

TEST_CASE("covariance under 90 degree rotation about z swaps x and y extents") {
  Gaussian3D g;
  g.scale = Vec3(1, 2, 3);
  g.rotation = Quat(Eigen::AngleAxisd(M_PI / 2, Vec3::UnitZ()));
  // oracle: compose the rotation matrix explicitly
  Mat3 rz;
  rz << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  const Mat3 oracle = rz * Vec3(1, 4, 9).asDiagonal() * rz.transpose();
  const Mat3 cov = quaternion_to_covariance(g);
  CHECK((cov - oracle).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((cov - Mat3(Vec3(4, 1, 9).asDiagonal())).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("covariance eigenvalues recover squared scales for random gaussians") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.05, 5.0);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    Gaussian3D g;
    g.scale = Vec3(u(rng), u(rng), u(rng));
    g.rotation = Quat(n(rng), n(rng), n(rng), n(rng)).normalized();
    const Mat3 cov = quaternion_to_covariance(g);
    REQUIRE(cov.isApprox(cov.transpose(), 0.0));
    Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
    Vec3 ev = es.eigenvalues();
    Vec3 s2 = g.scale.cwiseProduct(g.scale);
    std::sort(s2.data(), s2.data() + 3);
    CHECK((ev - s2).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("gaussian validation rejects broken invariants") {
  Gaussian3D g;
  CHECK_NOTHROW(validate(g));
  g.scale = Vec3(1, 0, 1);
  CHECK_THROWS_AS(validate(g), Error);
  g = {};
  g.opacity = 1.5;
  CHECK_THROWS_AS(validate(g), Error);
  g = {};
  g.rotation.coeffs() << 0, 0, 0, 2;
  CHECK_THROWS_AS(validate(g), Error);
}

namespace {
CameraView identity_camera() {
  CameraView v;
  v.intrinsics = {100, 100, 50, 50};
  v.width = 100;
  v.height = 100;
  return v;
}
}  // namespace

TEST_CASE("pinhole projection examples") {
  const CameraView v = identity_camera();
  auto p = project_point(v, {0, 0, 1});
  CHECK(p.pixel.isApprox(Vec2(50, 50)));
  CHECK(p.depth == 1.0);
  p = project_point(v, {1, 0, 1});
  CHECK(p.pixel.isApprox(Vec2(150, 50)));
  CHECK(p.depth == 1.0);
  p = project_point(v, {0, 0, -1});
  CHECK(p.depth == -1.0);
  CHECK(p.behind());
}

TEST_CASE("project then unproject reproduces the point") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  for (int i = 0; i < 200; ++i) {
    const CameraView v = CameraView::look_at({u(rng), u(rng), 30.0 + u(rng)}, {u(rng), u(rng), 0}, Vec3::UnitZ(), 120,
                                             160, 120);
    REQUIRE_NOTHROW(validate(v));
    const Point3 p(u(rng), u(rng), u(rng));
    const auto pr = project_point(v, p);
    if (std::abs(pr.depth) < 1e-3) continue;
    CHECK((unproject(v, pr.pixel, pr.depth) - p).norm() < 1e-9);
  }
}

TEST_CASE("look_at puts the target on the principal point") {
  const CameraView v = CameraView::look_at({10, -20, 15}, {1, 2, 3}, Vec3::UnitZ(), 80, 64, 48);
  const auto pr = project_point(v, {1, 2, 3});
  CHECK(pr.pixel.isApprox(Vec2(32, 24), 1e-12));
  CHECK(pr.depth > 0);
  // world up maps to image up (negative y)
  CHECK(project_point(v, {1, 2, 4}).pixel.y() < 24);
}

TEST_CASE("psnr examples") {
  Raster a(8, 8, 3, 0.0), b(8, 8, 3, 1.0), c(8, 8, 3, 0.5);
  CHECK(psnr(a, a) == kPsnrCap);
  CHECK(psnr(a, b) == doctest::Approx(0.0));
  CHECK(psnr(a, c) == doctest::Approx(6.0206).epsilon(1e-4));
  CHECK_THROWS_AS(psnr(a, Raster(4, 8, 3)), Error);
}

TEST_CASE("psnr is symmetric and decreases with noise amplitude") {
  std::mt19937_64 rng(11);
  Raster base(32, 32, 3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& v : base.data) v = u(rng);
  std::vector<double> noise(base.data.size());
  std::uniform_real_distribution<double> un(-1.0, 1.0);
  for (auto& v : noise) v = un(rng);
  double prev = kPsnrCap + 1;
  for (double amp : {0.01, 0.02, 0.05, 0.1, 0.2}) {
    Raster noisy = base;
    for (std::size_t i = 0; i < noisy.data.size(); ++i) noisy.data[i] += amp * noise[i];
    const double p = psnr(base, noisy);
    CHECK(p == psnr(noisy, base));
    CHECK(p < prev);
    prev = p;
  }
}

TEST_CASE("bilinear sampling hits texel centers exactly") {
  Raster t(4, 2, 3);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 4; ++x) t.set_rgb(x, y, Vec3(x, y, 1.0));
  CHECK(sample_bilinear(t, {(2 + 0.5) / 4.0, 0.5 / 2.0}).isApprox(Vec3(2, 0, 1)));
  CHECK(sample_bilinear(t, {0.5, 0.5}).isApprox(Vec3(1.5, 0.5, 1)));
  // clamp to edge
  CHECK(sample_bilinear(t, {0.0, 0.0}).isApprox(Vec3(0, 0, 1)));
}
