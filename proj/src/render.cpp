#include "citygo/render.hpp"

#include <unsupported/Eigen/AutoDiff>

#include <algorithm>
#include <cmath>

namespace citygo {

MeshGBuffer::MeshGBuffer(int w, int h, const Vec3& background)
    : width(w),
      height(h),
      depth(static_cast<std::size_t>(w) * h, std::numeric_limits<double>::infinity()),
      color(w, h, 3),
      building(depth.size(), 0),
      mesh(depth.size(), -1),
      face(depth.size(), -1),
      uv(depth.size(), Vec2::Zero()) {
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) color.set_rgb(x, y, background);
}

MeshGBuffer empty_gbuffer(const CameraView& view, const RenderSettings& s) {
  return MeshGBuffer(view.width, view.height, s.background);
}

namespace {

struct ClipVertex {
  Vec3 cam;
  Vec2 uv;
};

// Sutherland-Hodgman against z >= near in camera space.
std::vector<ClipVertex> clip_near(const std::array<ClipVertex, 3>& tri, double near) {
  std::vector<ClipVertex> out;
  for (int i = 0; i < 3; ++i) {
    const ClipVertex& a = tri[i];
    const ClipVertex& b = tri[(i + 1) % 3];
    const bool ina = a.cam.z() >= near, inb = b.cam.z() >= near;
    if (ina) out.push_back(a);
    if (ina != inb) {
      const double t = (near - a.cam.z()) / (b.cam.z() - a.cam.z());
      out.push_back({a.cam + t * (b.cam - a.cam), a.uv + t * (b.uv - a.uv)});
    }
  }
  return out;
}

void raster_triangle(const std::array<ClipVertex, 3>& v, const CameraView& view, const TexturedMesh& mesh,
                     std::uint32_t building, int mesh_index, int face_index, MeshGBuffer& g) {
  const auto& K = view.intrinsics;
  Vec2 p[3];
  double iz[3];
  for (int i = 0; i < 3; ++i) {
    iz[i] = 1.0 / v[i].cam.z();
    p[i] = Vec2(K.fx * v[i].cam.x() * iz[i] + K.cx, K.fy * v[i].cam.y() * iz[i] + K.cy);
  }
  const double area = (p[1] - p[0]).x() * (p[2] - p[0]).y() - (p[1] - p[0]).y() * (p[2] - p[0]).x();
  if (area == 0.0 || !std::isfinite(area)) return;
  const double xmin = std::min({p[0].x(), p[1].x(), p[2].x()});
  const double xmax = std::max({p[0].x(), p[1].x(), p[2].x()});
  const double ymin = std::min({p[0].y(), p[1].y(), p[2].y()});
  const double ymax = std::max({p[0].y(), p[1].y(), p[2].y()});
  const int x0 = std::max(0, static_cast<int>(std::floor(xmin - 0.5)));
  const int x1 = std::min(g.width - 1, static_cast<int>(std::ceil(xmax - 0.5)));
  const int y0 = std::max(0, static_cast<int>(std::floor(ymin - 0.5)));
  const int y1 = std::min(g.height - 1, static_cast<int>(std::ceil(ymax - 0.5)));
  const bool textured = !mesh.uvs.empty() && !mesh.texture.empty();
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const Vec2 q(x + 0.5, y + 0.5);
      double l[3];
      for (int i = 0; i < 3; ++i) {
        const Vec2& a = p[(i + 1) % 3];
        const Vec2& b = p[(i + 2) % 3];
        l[i] = ((b - a).x() * (q - a).y() - (b - a).y() * (q - a).x()) / area;
      }
      if (l[0] < 0 || l[1] < 0 || l[2] < 0) continue;
      const double inv_z = l[0] * iz[0] + l[1] * iz[1] + l[2] * iz[2];
      const double z = 1.0 / inv_z;
      const std::size_t idx = static_cast<std::size_t>(y) * g.width + x;
      if (!(z < g.depth[idx])) continue;
      const Vec2 uv = (l[0] * iz[0] * v[0].uv + l[1] * iz[1] * v[1].uv + l[2] * iz[2] * v[2].uv) * z;
      g.depth[idx] = z;
      g.building[idx] = building;
      g.mesh[idx] = mesh_index;
      g.face[idx] = face_index;
      g.uv[idx] = uv;
      g.color.set_rgb(x, y, textured ? sample_bilinear(mesh.texture, uv) : Vec3::Constant(0.5));
    }
  }
}

}  // namespace

MeshGBuffer rasterize_meshes(std::span<const MeshRef> meshes, const CameraView& view, const RenderSettings& s) {
  MeshGBuffer g(view.width, view.height, s.background);
  for (std::size_t m = 0; m < meshes.size(); ++m) {
    const TexturedMesh& mesh = *meshes[m].mesh;
    if (meshes[m].building_id == 0) throw Error("rasterize: building id 0 is reserved for background");
    const bool has_uv = mesh.uvs.size() == mesh.faces.size();
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
      std::array<ClipVertex, 3> tri;
      for (int i = 0; i < 3; ++i) {
        tri[i].cam = view.extrinsics.apply(mesh.vertices[mesh.faces[f][i]]);
        tri[i].uv = has_uv ? mesh.uvs[f][i] : Vec2::Zero();
      }
      if (tri[0].cam.z() < s.near_plane && tri[1].cam.z() < s.near_plane && tri[2].cam.z() < s.near_plane) continue;
      const auto poly = clip_near(tri, s.near_plane);
      for (std::size_t k = 1; k + 1 < poly.size(); ++k)
        raster_triangle({poly[0], poly[k], poly[k + 1]}, view, mesh, meshes[m].building_id, static_cast<int>(m),
                        static_cast<int>(f), g);
    }
  }
  return g;
}

MeshGBuffer rasterize_mesh(const TexturedMesh& mesh, const CameraView& view, const RenderSettings& s,
                           std::uint32_t building_id) {
  const MeshRef ref{&mesh, building_id};
  return rasterize_meshes(std::span<const MeshRef>(&ref, 1), view, s);
}

SplatList splat_gaussians(std::span<const Gaussian3D> gaussians, const CameraView& view, const RenderSettings& s) {
  SplatList list;
  list.width = view.width;
  list.height = view.height;
  for (std::size_t k = 0; k < gaussians.size(); ++k) {
    const Gaussian3D& gs = gaussians[k];
    const Vec3 t = view.extrinsics.apply(gs.position);
    if (t.z() <= s.near_plane) continue;
    const Eigen::Vector4d q(gs.rotation.w(), gs.rotation.x(), gs.rotation.y(), gs.rotation.z());
    const ProjectedGaussian<double> pg = project_gaussian<double>(gs.position, gs.scale, q, view);
    const double det0 = pg.cov[0] * pg.cov[2] - pg.cov[1] * pg.cov[1];
    if (!(det0 > 0) || M_PI * std::sqrt(det0) < s.min_footprint) continue;
    Splat sp;
    sp.index = static_cast<int>(k);
    sp.mean = pg.mean;
    sp.cov = pg.cov + Vec3(s.dilation, 0, s.dilation);
    const double det = sp.cov[0] * sp.cov[2] - sp.cov[1] * sp.cov[1];
    sp.conic = Vec3(sp.cov[2] / det, -sp.cov[1] / det, sp.cov[0] / det);
    const double mid = 0.5 * (sp.cov[0] + sp.cov[2]);
    const double lmax = mid + std::sqrt(std::max(0.0, mid * mid - det));
    sp.radius = s.cutoff_sigma * std::sqrt(lmax);
    if (sp.mean.x() + sp.radius < 0 || sp.mean.x() - sp.radius > view.width || sp.mean.y() + sp.radius < 0 ||
        sp.mean.y() - sp.radius > view.height)
      continue;
    sp.depth = pg.depth;
    sp.opacity = gs.opacity;
    sp.color = gs.color;
    list.splats.push_back(sp);
  }
  std::stable_sort(list.splats.begin(), list.splats.end(),
                   [](const Splat& a, const Splat& b) { return a.depth < b.depth; });
  return list;
}

namespace {

struct Tiles {
  int size = 16;
  int nx = 0, ny = 0;
  std::vector<std::vector<int>> lists;  // splat positions, front to back

  int count() const { return nx * ny; }
};

Tiles bin_splats(const SplatList& splats, int width, int height, int tile_size) {
  Tiles t;
  t.size = std::max(1, tile_size);
  t.nx = (width + t.size - 1) / t.size;
  t.ny = (height + t.size - 1) / t.size;
  t.lists.assign(static_cast<std::size_t>(t.nx) * t.ny, {});
  for (std::size_t k = 0; k < splats.splats.size(); ++k) {
    const Splat& sp = splats.splats[k];
    const int tx0 = std::clamp(static_cast<int>(std::floor((sp.mean.x() - sp.radius) / t.size)), 0, t.nx - 1);
    const int tx1 = std::clamp(static_cast<int>(std::floor((sp.mean.x() + sp.radius) / t.size)), 0, t.nx - 1);
    const int ty0 = std::clamp(static_cast<int>(std::floor((sp.mean.y() - sp.radius) / t.size)), 0, t.ny - 1);
    const int ty1 = std::clamp(static_cast<int>(std::floor((sp.mean.y() + sp.radius) / t.size)), 0, t.ny - 1);
    for (int ty = ty0; ty <= ty1; ++ty)
      for (int tx = tx0; tx <= tx1; ++tx) t.lists[static_cast<std::size_t>(ty) * t.nx + tx].push_back(static_cast<int>(k));
  }
  return t;
}

void check_sorted(const SplatList& splats) {
  for (std::size_t k = 1; k < splats.splats.size(); ++k)
    if (splats.splats[k].depth < splats.splats[k - 1].depth) throw Error("composite: splat list is not depth sorted");
}

void check_sizes(const MeshGBuffer& g, const SplatList& splats) {
  if (g.width != splats.width || g.height != splats.height)
    throw Error("composite: g-buffer and splat list sizes differ");
}

struct Hit {
  int pos;
  double alpha;
  double gauss;  // exp(-q/2)
  double T;
  Vec2 d;
};

// Front-to-back walk of one pixel; returns the final transmittance.
template <class F>
double walk_pixel(const MeshGBuffer& g, const SplatList& splats, const std::vector<int>& list, const RenderSettings& s,
                  bool use_mesh, int x, int y, F&& on_hit) {
  const std::size_t idx = static_cast<std::size_t>(y) * g.width + x;
  const double limit = use_mesh && g.covered(idx) ? g.depth[idx] + s.guard : std::numeric_limits<double>::infinity();
  const double cut2 = s.cutoff_sigma * s.cutoff_sigma;
  const Vec2 p(x + 0.5, y + 0.5);
  double T = 1.0;
  for (int pos : list) {
    const Splat& sp = splats.splats[pos];
    if (!(sp.depth < limit)) continue;
    const Vec2 d = p - sp.mean;
    const double q = sp.conic[0] * d.x() * d.x() + 2 * sp.conic[1] * d.x() * d.y() + sp.conic[2] * d.y() * d.y();
    if (q > cut2) continue;
    const double gauss = std::exp(-0.5 * q);
    const double alpha = sp.opacity * gauss;
    if (alpha <= 0) continue;
    on_hit(Hit{pos, alpha, gauss, T, d});
    T *= 1.0 - alpha;
    if (T < s.min_transmittance) break;
  }
  return T;
}

}  // namespace

CompositeResult composite_hybrid(const MeshGBuffer& g, const SplatList& splats, const RenderSettings& s) {
  check_sizes(g, splats);
  check_sorted(splats);
  CompositeResult r;
  r.color = Raster(g.width, g.height, 3);
  r.transmittance.assign(g.size(), 1.0);
  r.weight.assign(g.size(), 0.0);
  r.contributors.assign(g.size(), 0);
  const Tiles tiles = bin_splats(splats, g.width, g.height, s.tile_size);
#pragma omp parallel for schedule(dynamic, 1)
  for (int t = 0; t < tiles.count(); ++t) {
    const int tx = t % tiles.nx, ty = t / tiles.nx;
    const auto& list = tiles.lists[t];
    for (int y = ty * tiles.size; y < std::min(g.height, (ty + 1) * tiles.size); ++y)
      for (int x = tx * tiles.size; x < std::min(g.width, (tx + 1) * tiles.size); ++x) {
        const std::size_t idx = static_cast<std::size_t>(y) * g.width + x;
        Vec3 c = Vec3::Zero();
        double w = 0.0;
        int n = 0;
        const double T = walk_pixel(g, splats, list, s, true, x, y, [&](const Hit& h) {
          const double tw = h.T * h.alpha;
          c += tw * splats.splats[h.pos].color;
          w += tw;
          ++n;
        });
        c += T * g.color.rgb(x, y);  // mesh surface, or background
        r.color.set_rgb(x, y, c);
        r.transmittance[idx] = T;
        r.weight[idx] = w;
        r.contributors[idx] = n;
      }
  }
  return r;
}

Raster render_gaussians_only(std::span<const Gaussian3D> gaussians, const CameraView& view, const RenderSettings& s) {
  return composite_hybrid(empty_gbuffer(view, s), splat_gaussians(gaussians, view, s), s).color;
}

void visit_contributions(const MeshGBuffer& g, const SplatList& splats, const RenderSettings& s, bool use_mesh,
                         const std::function<void(std::size_t, int, double)>& f) {
  check_sizes(g, splats);
  check_sorted(splats);
  const Tiles tiles = bin_splats(splats, g.width, g.height, s.tile_size);
  for (int t = 0; t < tiles.count(); ++t) {
    const int tx = t % tiles.nx, ty = t / tiles.nx;
    for (int y = ty * tiles.size; y < std::min(g.height, (ty + 1) * tiles.size); ++y)
      for (int x = tx * tiles.size; x < std::min(g.width, (tx + 1) * tiles.size); ++x) {
        const std::size_t idx = static_cast<std::size_t>(y) * g.width + x;
        walk_pixel(g, splats, tiles.lists[t], s, use_mesh, x, y,
                   [&](const Hit& h) { f(idx, h.pos, h.T * h.alpha); });
      }
  }
}

CompositeGrad composite_backward(const MeshGBuffer& g, const SplatList& splats, const RenderSettings& s,
                                 const Raster& dl_dc) {
  check_sizes(g, splats);
  check_sorted(splats);
  if (dl_dc.width != g.width || dl_dc.height != g.height || dl_dc.channels != 3)
    throw Error("composite backward: gradient raster size mismatch");
  CompositeGrad out;
  out.splats.assign(splats.splats.size(), {});
  out.mesh_color = Raster(g.width, g.height, 3);
  const Tiles tiles = bin_splats(splats, g.width, g.height, s.tile_size);
  std::vector<std::vector<SplatGrad>> tile_grads(tiles.count());
#pragma omp parallel for schedule(dynamic, 1)
  for (int t = 0; t < tiles.count(); ++t) {
    const int tx = t % tiles.nx, ty = t / tiles.nx;
    const auto& list = tiles.lists[t];
    auto& local = tile_grads[t];
    local.assign(list.size(), {});
    std::vector<Hit> hits;
    std::vector<int> slot;  // hit -> position in the tile list
    for (int y = ty * tiles.size; y < std::min(g.height, (ty + 1) * tiles.size); ++y)
      for (int x = tx * tiles.size; x < std::min(g.width, (tx + 1) * tiles.size); ++x) {
        const std::size_t idx = static_cast<std::size_t>(y) * g.width + x;
        const Vec3 gc = dl_dc.rgb(x, y);
        if (gc.isZero(0.0)) continue;
        hits.clear();
        slot.clear();
        std::size_t cursor = 0;
        const double T = walk_pixel(g, splats, list, s, true, x, y, [&](const Hit& h) {
          while (list[cursor] != h.pos) ++cursor;
          hits.push_back(h);
          slot.push_back(static_cast<int>(cursor));
        });
        if (g.covered(idx)) out.mesh_color.set_rgb(x, y, T * gc);
        Vec3 behind = g.color.rgb(x, y);
        for (int k = static_cast<int>(hits.size()) - 1; k >= 0; --k) {
          const Hit& h = hits[k];
          const Splat& sp = splats.splats[h.pos];
          SplatGrad& sg = local[slot[k]];
          sg.color += h.T * h.alpha * gc;
          const double dl_dalpha = h.T * (sp.color - behind).dot(gc);
          sg.opacity += dl_dalpha * h.gauss;
          const double dl_dq = -0.5 * h.alpha * dl_dalpha;
          const Vec3& cn = sp.conic;
          sg.mean += dl_dq * Vec2(-2 * (cn[0] * h.d.x() + cn[1] * h.d.y()), -2 * (cn[1] * h.d.x() + cn[2] * h.d.y()));
          sg.conic += dl_dq * Vec3(h.d.x() * h.d.x(), 2 * h.d.x() * h.d.y(), h.d.y() * h.d.y());
          behind = h.alpha * sp.color + (1 - h.alpha) * behind;
        }
      }
  }
  for (int t = 0; t < tiles.count(); ++t)
    for (std::size_t k = 0; k < tiles.lists[t].size(); ++k) {
      SplatGrad& dst = out.splats[tiles.lists[t][k]];
      const SplatGrad& src = tile_grads[t][k];
      dst.mean += src.mean;
      dst.conic += src.conic;
      dst.opacity += src.opacity;
      dst.color += src.color;
    }
  return out;
}

void accumulate_gaussian_grads(std::span<const Gaussian3D> gaussians, const CameraView& view, const SplatList& splats,
                               const CompositeGrad& grad, std::vector<GaussianGrad>& out) {
  using Deriv = Eigen::Matrix<double, 10, 1>;
  using AD = Eigen::AutoDiffScalar<Deriv>;
  if (out.size() != gaussians.size()) throw Error("gradients: output size mismatch");
  if (grad.splats.size() != splats.splats.size()) throw Error("gradients: splat gradient size mismatch");
  for (std::size_t k = 0; k < splats.splats.size(); ++k) {
    const Splat& sp = splats.splats[k];
    const SplatGrad& sg = grad.splats[k];
    const Gaussian3D& gs = gaussians[sp.index];
    Eigen::Matrix<AD, 3, 1> pos, scale;
    Eigen::Matrix<AD, 4, 1> quat;
    for (int i = 0; i < 3; ++i) {
      pos[i] = AD(gs.position[i], 10, i);
      scale[i] = AD(gs.scale[i], 10, 3 + i);
    }
    const double qv[4] = {gs.rotation.w(), gs.rotation.x(), gs.rotation.y(), gs.rotation.z()};
    for (int i = 0; i < 4; ++i) quat[i] = AD(qv[i], 10, 6 + i);
    const ProjectedGaussian<AD> pg = project_gaussian<AD>(pos, scale, quat, view);
    // the dilation is whatever the forward pass added on the diagonal
    const double dil_x = sp.cov[0] - pg.cov[0].value();
    const double dil_y = sp.cov[2] - pg.cov[2].value();
    const AD a = pg.cov[0] + dil_x, b = pg.cov[1], c = pg.cov[2] + dil_y;
    const AD det = a * c - b * b;
    const AD loss = sg.mean.x() * pg.mean[0] + sg.mean.y() * pg.mean[1] + sg.conic[0] * (c / det) +
                    sg.conic[1] * (-b / det) + sg.conic[2] * (a / det);
    const Deriv& d = loss.derivatives();
    GaussianGrad& o = out[sp.index];
    o.position += d.segment<3>(0);
    o.scale += d.segment<3>(3);
    o.rotation += d.segment<4>(6);
    o.opacity += sg.opacity;
    o.color += sg.color;
    o.screen += sg.mean.norm();
  }
}

Raster box_downsample(const Raster& img, int factor) {
  if (factor < 1 || img.width % factor || img.height % factor) throw Error("box_downsample: size not divisible");
  Raster out(img.width / factor, img.height / factor, img.channels);
  const double inv = 1.0 / (factor * factor);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      for (int c = 0; c < img.channels; ++c) {
        double sum = 0;
        for (int dy = 0; dy < factor; ++dy)
          for (int dx = 0; dx < factor; ++dx) sum += img.at(x * factor + dx, y * factor + dy, c);
        out.at(x, y, c) = sum * inv;
      }
  return out;
}

}  // namespace citygo
