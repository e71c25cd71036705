#include "doctest.h"

#include "citygo/loss.hpp"

#include <cmath>
#include <random>

using namespace citygo;

namespace {

Raster random_raster(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  Raster r(w, h, 3);
  for (double& v : r.data) v = u(rng);
  return r;
}

// Direct 2D window sums, one pixel at a time.
double ssim_brute(const Raster& a, const Raster& b) {
  const int w = a.width, h = a.height;
  double total = 0;
  for (int c = 0; c < a.channels; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double z = 0, mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
        for (int dy = -5; dy <= 5; ++dy)
          for (int dx = -5; dx <= 5; ++dx) {
            const int sx = x + dx, sy = y + dy;
            if (sx < 0 || sy < 0 || sx >= w || sy >= h) continue;
            const double g = std::exp(-(dx * dx + dy * dy) / (2 * 1.5 * 1.5));
            const double p = a.at(sx, sy, c), q = b.at(sx, sy, c);
            z += g;
            mx += g * p;
            my += g * q;
            xx += g * p * p;
            yy += g * q * q;
            xy += g * p * q;
          }
        mx /= z;
        my /= z;
        const double vx = xx / z - mx * mx, vy = yy / z - my * my, cxy = xy / z - mx * my;
        total += (2 * mx * my + 1e-4) * (2 * cxy + 9e-4) / ((mx * mx + my * my + 1e-4) * (vx + vy + 9e-4));
      }
  return total / (w * h * a.channels);
}

template <class F>
void check_fd(F&& loss, Raster render, const Raster& grad, double tol) {
  const double h = 1e-6;
  for (std::size_t i = 0; i < render.data.size(); i += 7) {
    const double v = render.data[i];
    render.data[i] = v + h;
    const double lp = loss(render);
    render.data[i] = v - h;
    const double lm = loss(render);
    render.data[i] = v;
    CHECK(grad.data[i] == doctest::Approx((lp - lm) / (2 * h)).epsilon(tol).scale(1e-6));
  }
}

}  // namespace

TEST_CASE("l1: value and subgradient") {
  Raster a(2, 1, 3), b(2, 1, 3);
  a.data = {0.5, 0.5, 0.5, 0.2, 0.2, 0.2};
  b.data = {0.1, 0.5, 0.9, 0.2, 0.3, 0.0};
  Raster g;
  CHECK(l1_loss(a, b, &g) == doctest::Approx((0.4 + 0 + 0.4 + 0 + 0.1 + 0.2) / 6));
  CHECK(g.data[0] == doctest::Approx(1.0 / 6));
  CHECK(g.data[1] == 0.0);
  CHECK(g.data[2] == doctest::Approx(-1.0 / 6));
  CHECK_THROWS_AS(l1_loss(a, Raster(1, 1, 3)), Error);
}

TEST_CASE("ssim: identity, symmetry and direct window oracle") {
  const Raster a = random_raster(17, 13, 1), b = random_raster(17, 13, 2);
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(dssim_loss(a, a) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
  CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-12));
  CHECK(ssim(a, b) == doctest::Approx(ssim_brute(a, b)).epsilon(1e-10));
  CHECK(ssim(a, b) < 0.5);
}

TEST_CASE("losses: gradients match central differences") {
  const Raster r = random_raster(14, 12, 3), t = random_raster(14, 12, 4);
  Raster g;
  l1_loss(r, t, &g);
  check_fd([&](const Raster& x) { return l1_loss(x, t); }, r, g, 1e-6);
  dssim_loss(r, t, &g);
  check_fd([&](const Raster& x) { return dssim_loss(x, t); }, r, g, 1e-5);
  const double v = photometric_loss(r, t, 0.2, &g);
  CHECK(v == doctest::Approx(0.8 * l1_loss(r, t) + 0.2 * dssim_loss(r, t)));
  check_fd([&](const Raster& x) { return photometric_loss(x, t, 0.2); }, r, g, 1e-5);
}
