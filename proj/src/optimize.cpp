#include "citygo/optimize.hpp"

#include "citygo/loss.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace citygo {

SmoothingKernel SmoothingKernel::identity() { return {}; }

SmoothingKernel SmoothingKernel::box(int size) {
  if (size < 1 || size % 2 == 0) throw Error("kernel: size must be odd and positive");
  SmoothingKernel k;
  k.size = size;
  k.weights.assign(static_cast<std::size_t>(size) * size, 1.0 / (size * size));
  return k;
}

SmoothingKernel SmoothingKernel::gaussian(int size, double sigma) {
  if (size < 1 || size % 2 == 0) throw Error("kernel: size must be odd and positive");
  if (!(sigma > 0)) throw Error("kernel: sigma must be positive");
  SmoothingKernel k;
  k.size = size;
  k.weights.resize(static_cast<std::size_t>(size) * size);
  const int r = size / 2;
  double sum = 0;
  for (int y = -r; y <= r; ++y)
    for (int x = -r; x <= r; ++x) sum += k.weights[(y + r) * size + x + r] = std::exp(-0.5 * (x * x + y * y) / (sigma * sigma));
  for (double& w : k.weights) w /= sum;
  return k;
}

void SmoothingKernel::validate() const {
  if (size < 1 || size % 2 == 0 || weights.size() != static_cast<std::size_t>(size) * size)
    throw Error("kernel: malformed");
  const double s = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (std::abs(s - 1.0) > 1e-9) throw Error("kernel: weights must sum to 1");
}

Raster smooth_texture(const Raster& tex, const SmoothingKernel& k) {
  k.validate();
  Raster out(tex.width, tex.height, tex.channels);
  const int r = k.radius();
  for (int y = 0; y < tex.height; ++y)
    for (int x = 0; x < tex.width; ++x)
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          const double w = k.at(dx, dy);
          const int sx = std::clamp(x + dx, 0, tex.width - 1), sy = std::clamp(y + dy, 0, tex.height - 1);
          for (int c = 0; c < tex.channels; ++c) out.at(x, y, c) += w * tex.at(sx, sy, c);
        }
  return out;
}

Raster smooth_texture_adjoint(const Raster& grad, const SmoothingKernel& k) {
  k.validate();
  Raster out(grad.width, grad.height, grad.channels);
  const int r = k.radius();
  for (int y = 0; y < grad.height; ++y)
    for (int x = 0; x < grad.width; ++x)
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          const double w = k.at(dx, dy);
          const int sx = std::clamp(x + dx, 0, grad.width - 1), sy = std::clamp(y + dy, 0, grad.height - 1);
          for (int c = 0; c < grad.channels; ++c) out.at(sx, sy, c) += w * grad.at(x, y, c);
        }
  return out;
}

Vec3 sample_smoothed(const Raster& tex, const SmoothingKernel& k, const Vec2& uv,
                     std::vector<std::pair<int, double>>* taps) {
  const int w = tex.width, h = tex.height;
  // same lattice and clamping as sample_bilinear
  const double x = std::clamp(uv.x() * w - 0.5, 0.0, static_cast<double>(w - 1));
  const double y = std::clamp(uv.y() * h - 0.5, 0.0, static_cast<double>(h - 1));
  const int x0 = std::min(static_cast<int>(x), w - 1), y0 = std::min(static_cast<int>(y), h - 1);
  const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
  const double fx = x - x0, fy = y - y0;
  const int bx[4] = {x0, x1, x0, x1}, by[4] = {y0, y0, y1, y1};
  const double bw[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
  const int r = k.radius();
  Vec3 out = Vec3::Zero();
  if (taps) taps->clear();
  for (int i = 0; i < 4; ++i) {
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx) {
        const double wt = bw[i] * k.at(dx, dy);
        const int sx = std::clamp(bx[i] + dx, 0, w - 1), sy = std::clamp(by[i] + dy, 0, h - 1);
        out += wt * tex.rgb(sx, sy);
        if (taps) taps->emplace_back(sy * w + sx, wt);
      }
  }
  return out;
}

void OptimConfig::validate() const {
  if (gaussian_iterations < 0 || texture_iterations < 0) throw Error("optim: negative iteration count");
  if (!(base_lr > 0 && color_lr_scale > 0 && scale_lr_scale > 0 && rotation_lr_scale > 0 && position_lr_fraction > 0 &&
        texture_lr > 0 && texture_lr_final > 0 && position_lr_final_ratio > 0))
    throw Error("optim: learning rates must be positive");
  if (densify_interval <= 0) throw Error("optim: densify interval must be positive");
  if (densify_stop() > gaussian_iterations) throw Error("optim: densification stops after the last iteration");
  kernel.validate();
}

namespace {

struct Adam {
  double b1 = 0.9, b2 = 0.999, eps = 1e-15;

  // returns the step to subtract
  double step(double& m, double& v, double g, int t, double lr) const {
    // roundoff noise at a stationary point would otherwise be amplified to full steps
    if (std::abs(g) < 1e-12) g = 0.0;
    if (g == 0.0 && m == 0.0) return 0.0;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    return lr * mh / (std::sqrt(vh) + eps);
  }
};

std::vector<MeshGBuffer> geometry_buffers(std::span<const MeshRef> meshes, std::span<const CameraView> views,
                                          const RenderSettings& rs) {
  std::vector<MeshGBuffer> out;
  out.reserve(views.size());
  for (const CameraView& v : views) out.push_back(meshes.empty() ? empty_gbuffer(v, rs) : rasterize_meshes(meshes, v, rs));
  return out;
}

void fill_colors(MeshGBuffer& g, std::span<const Raster> textures, const SmoothingKernel& k) {
  for (int y = 0; y < g.height; ++y)
    for (int x = 0; x < g.width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * g.width + x;
      if (!g.covered(i)) continue;
      g.color.set_rgb(x, y, sample_smoothed(textures[g.mesh[i]], k, g.uv[i]));
    }
}

const Raster& ground_truth(const CameraView& v) {
  if (!v.image) throw Error("optim: view without ground truth");
  if (v.image->width != v.width || v.image->height != v.height) throw Error("optim: ground truth size mismatch");
  return *v.image;
}

std::vector<std::size_t> shuffled(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng() % i]);
  return p;
}

// Texel gradient entries of one view, reduced per texel in ascending order.
std::vector<std::pair<int, Vec3>> texel_grads(const MeshGBuffer& g, const Raster& mesh_grad, int mesh,
                                              const Raster& tex, const SmoothingKernel& k) {
  std::vector<std::pair<int, Vec3>> entries;
  std::vector<std::pair<int, double>> taps;
  for (int y = 0; y < g.height; ++y)
    for (int x = 0; x < g.width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * g.width + x;
      if (!g.covered(i) || g.mesh[i] != mesh) continue;
      const Vec3 dc = mesh_grad.rgb(x, y);
      if (dc.isZero(0.0)) continue;
      sample_smoothed(tex, k, g.uv[i], &taps);
      for (auto [t, w] : taps) entries.emplace_back(t, w * dc);
    }
  std::stable_sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::pair<int, Vec3>> out;
  for (const auto& e : entries) {
    if (!out.empty() && out.back().first == e.first) out.back().second += e.second;
    else out.push_back(e);
  }
  return out;
}

}  // namespace

UvFinetuneResult finetune_uv(std::span<const MeshRef> meshes, std::span<const CameraView> views,
                             std::span<const Gaussian3D> gaussians, const OptimConfig& cfg, const RenderSettings& rs) {
  cfg.validate();
  UvFinetuneResult out;
  for (const MeshRef& m : meshes) {
    if (m.mesh->uvs.size() != m.mesh->faces.size() || m.mesh->texture.empty())
      throw Error("finetune: mesh without atlas");
    out.textures.push_back(m.mesh->texture);
  }
  std::vector<MeshGBuffer> gbuf = geometry_buffers(meshes, views, rs);
  std::vector<std::size_t> usable;
  for (std::size_t v = 0; v < views.size(); ++v) {
    ground_truth(views[v]);
    bool any = false;
    for (std::size_t i = 0; i < gbuf[v].size() && !any; ++i) any = gbuf[v].covered(i);
    if (any) usable.push_back(v);
  }
  if (meshes.empty() || usable.empty()) throw Error("finetune: no view covers the mesh");
  std::vector<SplatList> splats;
  for (const CameraView& v : views) splats.push_back(splat_gaussians(gaussians, v, rs));

  std::vector<std::vector<double>> m1(meshes.size()), m2(meshes.size());
  std::vector<std::vector<int>> steps(meshes.size());
  for (std::size_t m = 0; m < meshes.size(); ++m) {
    m1[m].assign(out.textures[m].data.size(), 0.0);
    m2[m].assign(out.textures[m].data.size(), 0.0);
    steps[m].assign(out.textures[m].data.size() / 3, 0);
  }
  std::vector<std::uint8_t> touched_any;
  std::size_t touched = 0;
  const Adam adam;
  std::mt19937_64 rng(cfg.seed ^ 0x5eedULL);
  const int total = cfg.texture_iterations;
  std::vector<std::size_t> order;
  double epoch_sum = 0;
  std::size_t epoch_n = 0;
  for (int it = 0; it < total; ++it) {
    if (it % usable.size() == 0) {
      if (epoch_n) out.epoch_loss.push_back(epoch_sum / epoch_n);
      epoch_sum = 0;
      epoch_n = 0;
      order = shuffled(usable.size(), rng);
    }
    const std::size_t v = usable[order[it % usable.size()]];
    MeshGBuffer& g = gbuf[v];
    fill_colors(g, out.textures, cfg.kernel);
    const CompositeResult r = composite_hybrid(g, splats[v], rs);
    Raster dl;
    epoch_sum += photometric_loss(r.color, ground_truth(views[v]), cfg.ssim_weight, &dl);
    ++epoch_n;
    const CompositeGrad cg = composite_backward(g, splats[v], rs, dl);
    const double frac = total > 1 ? static_cast<double>(it) / (total - 1) : 0.0;
    const double lr = cfg.texture_lr * std::pow(cfg.texture_lr_final / cfg.texture_lr, frac);
    for (std::size_t m = 0; m < meshes.size(); ++m) {
      Raster& tex = out.textures[m];
      for (const auto& [t, gr] : texel_grads(g, cg.mesh_color, static_cast<int>(m), tex, cfg.kernel)) {
        const int n = ++steps[m][t];
        if (n == 1) ++touched;
        for (int c = 0; c < 3; ++c) {
          const std::size_t j = static_cast<std::size_t>(t) * 3 + c;
          tex.data[j] = std::clamp(tex.data[j] - adam.step(m1[m][j], m2[m][j], gr[c], n, lr), 0.0, 1.0);
        }
      }
    }
  }
  if (epoch_n == usable.size()) out.epoch_loss.push_back(epoch_sum / epoch_n);
  out.texels_updated = touched;
  return out;
}

double depth_hinge(std::span<const Gaussian3D> gaussians, const CameraView& view, const MeshGBuffer& g,
                   const RenderSettings& rs, double weight, std::vector<GaussianGrad>* grads) {
  double loss = 0;
  const Vec3 zrow = view.extrinsics.rotation.row(2).transpose();
  for (std::size_t k = 0; k < gaussians.size(); ++k) {
    const Gaussian3D& gs = gaussians[k];
    if (gs.building_id == 0) continue;
    const Projection p = project_point(view, gs.position);
    if (p.depth <= rs.near_plane) continue;
    const int x = static_cast<int>(std::floor(p.pixel.x())), y = static_cast<int>(std::floor(p.pixel.y()));
    if (x < 0 || y < 0 || x >= g.width || y >= g.height) continue;
    const std::size_t i = static_cast<std::size_t>(y) * g.width + x;
    if (!g.covered(i)) continue;
    const double excess = p.depth - g.depth[i] - rs.guard;
    if (excess <= 0) continue;
    loss += weight * excess * excess;
    if (grads) (*grads)[k].position += 2 * weight * excess * zrow;
  }
  return loss;
}

namespace {

struct GaussianState {
  std::vector<std::array<double, 14>> m, v;
  std::vector<int> t;

  void resize(std::size_t n) {
    m.resize(n, std::array<double, 14>{});
    v.resize(n, std::array<double, 14>{});
    t.resize(n, 0);
  }
};

double logit(double a) {
  a = std::clamp(a, 1e-6, 1 - 1e-6);
  return std::log(a / (1 - a));
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

GaussianOptResult optimize_gaussians(std::vector<Gaussian3D> gs, std::span<const MeshRef> meshes,
                                     std::span<const CameraView> views, const OptimConfig& cfg, const RenderSettings& rs) {
  cfg.validate();
  GaussianOptResult out;
  if (views.empty() || cfg.gaussian_iterations == 0 || gs.empty()) {
    out.gaussians = std::move(gs);
    return out;
  }
  for (const CameraView& v : views) ground_truth(v);
  const std::vector<MeshGBuffer> gbuf = geometry_buffers(meshes, views, rs);
  double extent = cfg.scene_extent;
  if (extent <= 0) {
    AABB box;
    for (const auto& g : gs) box.extend(g.position);
    extent = std::max(box.extent().norm(), 1.0);
  }
  const double pos_lr0 = cfg.position_lr_fraction * cfg.base_lr * extent;
  const int total = cfg.gaussian_iterations;
  GaussianState st;
  st.resize(gs.size());
  // opacity is optimized through a logit; keep it outside the Gaussian to avoid round trips
  std::vector<double> opacity_logit(gs.size());
  for (std::size_t k = 0; k < gs.size(); ++k) opacity_logit[k] = logit(gs[k].opacity);
  std::vector<double> grad_accum(gs.size(), 0.0);
  std::vector<int> grad_count(gs.size(), 0);
  const Adam adam;
  std::mt19937_64 rng(cfg.seed ^ 0x6a55ULL);
  std::vector<std::size_t> order;
  for (int it = 0; it < total; ++it) {
    if (it % views.size() == 0) order = shuffled(views.size(), rng);
    const std::size_t vi = order[it % views.size()];
    const CameraView& view = views[vi];
    const SplatList splats = splat_gaussians(gs, view, rs);
    const CompositeResult r = composite_hybrid(gbuf[vi], splats, rs);
    Raster dl;
    double loss = photometric_loss(r.color, ground_truth(view), cfg.ssim_weight, &dl);
    const CompositeGrad cg = composite_backward(gbuf[vi], splats, rs, dl);
    std::vector<GaussianGrad> grads(gs.size());
    accumulate_gaussian_grads(gs, view, splats, cg, grads);
    const double dw = cfg.depth_weight * std::max(0.0, 1.0 - it / (cfg.depth_decay_fraction * total));
    if (!meshes.empty() && dw > 0) loss += depth_hinge(gs, view, gbuf[vi], rs, dw, &grads);
    out.loss.push_back(loss);

    const double frac = total > 1 ? static_cast<double>(it) / (total - 1) : 0.0;
    const double lr_pos = pos_lr0 * std::pow(cfg.position_lr_final_ratio, frac);
    const double lr_col = cfg.base_lr * cfg.color_lr_scale, lr_op = cfg.base_lr;
    const double lr_sc = cfg.base_lr * cfg.scale_lr_scale, lr_rot = cfg.base_lr * cfg.rotation_lr_scale;
    const double pixels = static_cast<double>(view.width) * view.height;
    for (const Splat& sp : splats.splats) {
      grad_accum[sp.index] += grads[sp.index].screen * pixels;
      ++grad_count[sp.index];
    }
    for (std::size_t k = 0; k < gs.size(); ++k) {
      const GaussianGrad& gr = grads[k];
      Gaussian3D& g = gs[k];
      auto& m = st.m[k];
      auto& v = st.v[k];
      const int t = ++st.t[k];
      for (int d = 0; d < 3; ++d) g.position[d] -= adam.step(m[d], v[d], gr.position[d], t, lr_pos);
      for (int d = 0; d < 3; ++d) {
        const double ls = std::log(g.scale[d]) - adam.step(m[3 + d], v[3 + d], gr.scale[d] * g.scale[d], t, lr_sc);
        g.scale[d] = std::exp(std::clamp(ls, -20.0, 10.0));
      }
      Eigen::Vector4d q(g.rotation.w(), g.rotation.x(), g.rotation.y(), g.rotation.z());
      for (int d = 0; d < 4; ++d) q[d] -= adam.step(m[6 + d], v[6 + d], gr.rotation[d], t, lr_rot);
      if (q.norm() > 1e-12) g.rotation = Quat(q[0], q[1], q[2], q[3]).normalized();
      const double a = g.opacity;
      opacity_logit[k] -= adam.step(m[10], v[10], gr.opacity * a * (1 - a), t, lr_op);
      if (gr.opacity != 0.0 || m[10] != 0.0) g.opacity = sigmoid(opacity_logit[k]);
      for (int d = 0; d < 3; ++d)
        g.color[d] = std::clamp(g.color[d] - adam.step(m[11 + d], v[11 + d], gr.color[d], t, lr_col), 0.0, 1.0);
    }

    const int step = it + 1;
    if (step % cfg.densify_interval == 0 && step <= cfg.densify_stop()) {
      std::vector<Gaussian3D> next;
      std::vector<double> next_logit;
      GaussianState ns;
      std::normal_distribution<double> nd(0.0, 1.0);
      auto keep = [&](std::size_t k, const Gaussian3D& g, bool fresh) {
        next.push_back(g);
        next_logit.push_back(fresh ? logit(g.opacity) : opacity_logit[k]);
        ns.m.push_back(fresh ? std::array<double, 14>{} : st.m[k]);
        ns.v.push_back(fresh ? std::array<double, 14>{} : st.v[k]);
        ns.t.push_back(fresh ? 0 : st.t[k]);
      };
      for (std::size_t k = 0; k < gs.size(); ++k) {
        const Gaussian3D& g = gs[k];
        if (g.opacity < cfg.prune_opacity) {
          ++out.pruned;
          continue;
        }
        const double avg = grad_count[k] ? grad_accum[k] / grad_count[k] : 0.0;
        const bool grow = avg > cfg.densify_grad_threshold && next.size() + (gs.size() - k) < cfg.max_gaussians;
        if (!grow) {
          keep(k, g, false);
          continue;
        }
        ++out.densified;
        if (g.scale.maxCoeff() <= cfg.percent_dense * extent) {
          keep(k, g, false);
          keep(k, g, true);
        } else {
          const Mat3 R = g.rotation.toRotationMatrix();
          for (int c = 0; c < 2; ++c) {
            Gaussian3D child = g;
            const Vec3 z(nd(rng), nd(rng), nd(rng));
            child.position = g.position + R * g.scale.cwiseProduct(z);
            child.scale = g.scale / 1.6;
            keep(k, child, true);
          }
        }
      }
      gs = std::move(next);
      opacity_logit = std::move(next_logit);
      st = std::move(ns);
      grad_accum.assign(gs.size(), 0.0);
      grad_count.assign(gs.size(), 0);
    }
    out.count.push_back(gs.size());
  }
  out.gaussians = std::move(gs);
  return out;
}

namespace {

// Independent forward path: smooth the whole texture and rasterize.
double reference_loss(const GradientScene& s, const std::vector<Raster>& textures, const std::vector<Gaussian3D>& gs) {
  std::vector<TexturedMesh> meshes = s.meshes;
  std::vector<MeshRef> refs;
  for (std::size_t m = 0; m < meshes.size(); ++m) {
    meshes[m].texture = smooth_texture(textures[m], s.kernel);
    refs.push_back({&meshes[m], static_cast<std::uint32_t>(m + 1)});
  }
  const MeshGBuffer g = refs.empty() ? empty_gbuffer(s.view, s.settings) : rasterize_meshes(refs, s.view, s.settings);
  const CompositeResult r = composite_hybrid(g, splat_gaussians(gs, s.view, s.settings), s.settings);
  return l1_loss(r.color, ground_truth(s.view));
}

}  // namespace

GradientReport check_gradients(const GradientScene& s, double h) {
  GradientReport rep;
  std::vector<MeshRef> refs;
  std::vector<Raster> textures;
  for (std::size_t m = 0; m < s.meshes.size(); ++m) {
    refs.push_back({&s.meshes[m], static_cast<std::uint32_t>(m + 1)});
    textures.push_back(s.meshes[m].texture);
  }
  MeshGBuffer g = refs.empty() ? empty_gbuffer(s.view, s.settings) : rasterize_meshes(refs, s.view, s.settings);
  if (!refs.empty()) fill_colors(g, textures, s.kernel);
  const SplatList splats = splat_gaussians(s.gaussians, s.view, s.settings);
  const CompositeResult r = composite_hybrid(g, splats, s.settings);
  Raster dl;
  rep.loss = l1_loss(r.color, ground_truth(s.view), &dl);
  const CompositeGrad cg = composite_backward(g, splats, s.settings, dl);
  std::vector<GaussianGrad> gg(s.gaussians.size());
  accumulate_gaussian_grads(s.gaussians, s.view, splats, cg, gg);

  auto record = [&](std::string name, double analytic, double numeric) {
    const double scale = std::max(std::abs(analytic), std::abs(numeric));
    const double rel = scale < 1e-12 ? 0.0 : std::abs(analytic - numeric) / scale;
    rep.max_rel_error = std::max(rep.max_rel_error, rel);
    rep.entries.push_back({std::move(name), analytic, numeric, rel});
  };
  for (std::size_t m = 0; m < textures.size(); ++m) {
    Raster dense(textures[m].width, textures[m].height, 3);
    for (const auto& [t, gr] : texel_grads(g, cg.mesh_color, static_cast<int>(m), textures[m], s.kernel))
      for (int c = 0; c < 3; ++c) dense.data[static_cast<std::size_t>(t) * 3 + c] = gr[c];
    for (std::size_t j = 0; j < dense.data.size(); ++j) {
      if (dense.data[j] == 0.0 && j % 97 != 0) continue;
      std::vector<Raster> tp = textures, tm = textures;
      tp[m].data[j] += h;
      tm[m].data[j] -= h;
      const double fd = (reference_loss(s, tp, s.gaussians) - reference_loss(s, tm, s.gaussians)) / (2 * h);
      record("texel[" + std::to_string(m) + "][" + std::to_string(j) + "]", dense.data[j], fd);
    }
  }
  for (std::size_t k = 0; k < s.gaussians.size(); ++k) {
    auto probe = [&](const std::string& name, double analytic, auto&& bump) {
      std::vector<Gaussian3D> p = s.gaussians, q = s.gaussians;
      bump(p[k], h);
      bump(q[k], -h);
      const double fd = (reference_loss(s, textures, p) - reference_loss(s, textures, q)) / (2 * h);
      record("gaussian[" + std::to_string(k) + "]." + name, analytic, fd);
    };
    for (int c = 0; c < 3; ++c)
      probe("color" + std::to_string(c), gg[k].color[c], [c](Gaussian3D& x, double e) { x.color[c] += e; });
    probe("opacity", gg[k].opacity, [](Gaussian3D& x, double e) { x.opacity += e; });
    for (int c = 0; c < 3; ++c)
      probe("position" + std::to_string(c), gg[k].position[c], [c](Gaussian3D& x, double e) { x.position[c] += e; });
  }
  return rep;
}

}  // namespace citygo
