#include "citygo/loss.hpp"

#include <array>
#include <cmath>

namespace citygo {

namespace {

void check_pair(const Raster& a, const Raster& b) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels || a.empty())
    throw Error("loss: raster dimensions differ");
}

constexpr int kRadius = 5;
constexpr double kL1DeadZone = 1e-12;

std::array<double, 2 * kRadius + 1> window() {
  std::array<double, 2 * kRadius + 1> w{};
  double s = 0;
  for (int i = -kRadius; i <= kRadius; ++i) s += w[i + kRadius] = std::exp(-0.5 * i * i / (1.5 * 1.5));
  for (double& v : w) v /= s;
  return w;
}

// Separable Gaussian filter of one channel, zero outside the image; the
// caller divides by the filtered ones image to normalize at borders.
std::vector<double> blur(const std::vector<double>& in, int w, int h) {
  static const auto win = window();
  std::vector<double> tmp(in.size(), 0.0), out(in.size(), 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0;
      for (int k = -kRadius; k <= kRadius; ++k) {
        const int xx = x + k;
        if (xx >= 0 && xx < w) s += win[k + kRadius] * in[static_cast<std::size_t>(y) * w + xx];
      }
      tmp[static_cast<std::size_t>(y) * w + x] = s;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0;
      for (int k = -kRadius; k <= kRadius; ++k) {
        const int yy = y + k;
        if (yy >= 0 && yy < h) s += win[k + kRadius] * tmp[static_cast<std::size_t>(yy) * w + x];
      }
      out[static_cast<std::size_t>(y) * w + x] = s;
    }
  return out;
}

struct SsimTerms {
  double value = 0;
  Raster grad;
};

SsimTerms ssim_impl(const Raster& a, const Raster& b, bool want_grad) {
  check_pair(a, b);
  const int w = a.width, h = a.height, nc = a.channels;
  const std::size_t n = static_cast<std::size_t>(w) * h;
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const std::vector<double> z = blur(std::vector<double>(n, 1.0), w, h);
  auto filt = [&](const std::vector<double>& v) {
    std::vector<double> r = blur(v, w, h);
    for (std::size_t i = 0; i < n; ++i) r[i] /= z[i];
    return r;
  };
  // adjoint of filt
  auto filt_t = [&](std::vector<double> v) {
    for (std::size_t i = 0; i < n; ++i) v[i] /= z[i];
    return blur(v, w, h);
  };
  SsimTerms out;
  if (want_grad) out.grad = Raster(w, h, nc);
  const double scale = 1.0 / static_cast<double>(n * nc);
  for (int c = 0; c < nc; ++c) {
    std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = a.data[i * nc + c];
      y[i] = b.data[i * nc + c];
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = filt(x), my = filt(y), exx = filt(xx), eyy = filt(yy), exy = filt(xy);
    std::vector<double> dmx(n), dsxx(n), dsxy(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double sxx = exx[i] - mx[i] * mx[i];
      const double syy = eyy[i] - my[i] * my[i];
      const double sxy = exy[i] - mx[i] * my[i];
      const double l_num = 2 * mx[i] * my[i] + c1, l_den = mx[i] * mx[i] + my[i] * my[i] + c1;
      const double s_num = 2 * sxy + c2, s_den = sxx + syy + c2;
      const double s = (l_num * s_num) / (l_den * s_den);
      out.value += s * scale;
      if (!want_grad) continue;
      const double ds_dmx = (2 * my[i] * s_num) / (l_den * s_den) - s * 2 * mx[i] / l_den;
      const double ds_dsxx = -s / s_den;
      const double ds_dsxy = 2 * l_num / (l_den * s_den);
      // sxx and sxy depend on mx through their mean terms
      dmx[i] = (ds_dmx - 2 * ds_dsxx * mx[i] - ds_dsxy * my[i]) * scale;
      dsxx[i] = ds_dsxx * scale;
      dsxy[i] = ds_dsxy * scale;
    }
    if (!want_grad) continue;
    const auto g_mx = filt_t(dmx), g_sxx = filt_t(dsxx), g_sxy = filt_t(dsxy);
    for (std::size_t i = 0; i < n; ++i) out.grad.data[i * nc + c] = g_mx[i] + 2 * x[i] * g_sxx[i] + y[i] * g_sxy[i];
  }
  return out;
}

}  // namespace

double l1_loss(const Raster& render, const Raster& target, Raster* grad) {
  check_pair(render, target);
  const double inv = 1.0 / static_cast<double>(render.data.size());
  if (grad) *grad = Raster(render.width, render.height, render.channels);
  double s = 0;
  for (std::size_t i = 0; i < render.data.size(); ++i) {
    const double d = render.data[i] - target.data[i];
    s += std::abs(d);
    // roundoff-level differences get no subgradient
    if (grad) grad->data[i] = d > kL1DeadZone ? inv : d < -kL1DeadZone ? -inv : 0.0;
  }
  return s * inv;
}

double ssim(const Raster& a, const Raster& b) { return ssim_impl(a, b, false).value; }

double dssim_loss(const Raster& render, const Raster& target, Raster* grad) {
  SsimTerms t = ssim_impl(render, target, grad != nullptr);
  if (grad) {
    for (double& v : t.grad.data) v = -v;
    *grad = std::move(t.grad);
  }
  return 1.0 - t.value;
}

double photometric_loss(const Raster& render, const Raster& target, double ssim_weight, Raster* grad) {
  if (ssim_weight == 0.0) return l1_loss(render, target, grad);
  Raster g1, g2;
  const double l1 = l1_loss(render, target, grad ? &g1 : nullptr);
  const double ds = dssim_loss(render, target, grad ? &g2 : nullptr);
  if (grad) {
    *grad = std::move(g1);
    for (std::size_t i = 0; i < grad->data.size(); ++i)
      grad->data[i] = (1 - ssim_weight) * grad->data[i] + ssim_weight * g2.data[i];
  }
  return (1 - ssim_weight) * l1 + ssim_weight * ds;
}

}  // namespace citygo
