#include "citygo/texture.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace citygo {

int atlas_resolution(const AABB& box, const AtlasParams& p) {
  const double extent = box.valid() ? box.extent().maxCoeff() : 0.0;
  const double need = extent * p.texels_per_meter;
  int res = p.min_resolution;
  while (res < p.max_resolution && res < need) res *= 2;
  return std::min(res, p.max_resolution);
}

namespace {

struct Chart {
  std::vector<int> faces;
  Vec3 normal = Vec3::UnitZ();
  Vec3 origin = Vec3::Zero();
  Vec3 u = Vec3::UnitX(), v = Vec3::UnitY();
  Vec2 lo = Vec2::Zero(), hi = Vec2::Zero();  // extent in the chart plane (meters)
  bool degenerate = false;
};

int find(std::vector<int>& parent, int i) {
  while (parent[i] != i) i = parent[i] = parent[parent[i]];
  return i;
}

Vec3 face_normal(const TexturedMesh& m, int f, double* area) {
  const auto& t = m.faces[f];
  const Vec3 n = (m.vertices[t[1]] - m.vertices[t[0]]).cross(m.vertices[t[2]] - m.vertices[t[0]]);
  *area = 0.5 * n.norm();
  return *area > 0 ? Vec3(n.normalized()) : Vec3::Zero();
}

std::vector<Chart> build_charts(const TexturedMesh& m, double tol, int* degenerate) {
  const int nf = static_cast<int>(m.faces.size());
  std::vector<Vec3> normals(nf);
  std::vector<double> areas(nf);
  for (int f = 0; f < nf; ++f) normals[f] = face_normal(m, f, &areas[f]);
  std::vector<int> parent(nf);
  std::iota(parent.begin(), parent.end(), 0);
  std::map<std::pair<int, int>, int> edge_face;
  for (int f = 0; f < nf; ++f) {
    if (areas[f] <= 0) continue;
    for (int i = 0; i < 3; ++i) {
      int a = m.faces[f][i], b = m.faces[f][(i + 1) % 3];
      if (a > b) std::swap(a, b);
      auto [it, inserted] = edge_face.emplace(std::make_pair(a, b), f);
      if (inserted) continue;
      const int g = it->second;
      const double offset = normals[f].dot(m.vertices[m.faces[g][0]] - m.vertices[m.faces[f][0]]);
      if (normals[f].dot(normals[g]) > 1 - tol && std::abs(offset) < std::sqrt(tol))
        parent[find(parent, f)] = find(parent, g);
    }
  }
  std::map<int, int> root_chart;
  std::vector<Chart> charts;
  *degenerate = 0;
  for (int f = 0; f < nf; ++f) {
    if (areas[f] <= 0) {
      Chart c;
      c.faces = {f};
      c.degenerate = true;
      charts.push_back(c);
      ++*degenerate;
      continue;
    }
    const int r = find(parent, f);
    auto [it, inserted] = root_chart.emplace(r, static_cast<int>(charts.size()));
    if (inserted) {
      Chart c;
      c.normal = normals[f];
      charts.push_back(c);
    }
    charts[it->second].faces.push_back(f);
  }
  for (Chart& c : charts) {
    if (c.degenerate) continue;
    const Vec3& n = c.normal;
    c.u = std::abs(n.z()) > 0.9 ? Vec3(Vec3::UnitX() - n.x() * n).normalized() : Vec3(Vec3::UnitZ().cross(n)).normalized();
    c.v = n.cross(c.u);
    c.origin = m.vertices[m.faces[c.faces[0]][0]];
    c.lo = Vec2::Constant(std::numeric_limits<double>::infinity());
    c.hi = -c.lo;
    for (int f : c.faces)
      for (int vi : m.faces[f]) {
        const Vec3 d = m.vertices[vi] - c.origin;
        const Vec2 q(d.dot(c.u), d.dot(c.v));
        c.lo = c.lo.cwiseMin(q);
        c.hi = c.hi.cwiseMax(q);
      }
  }
  return charts;
}

std::pair<int, int> chart_size(const Chart& c, double density) {
  if (c.degenerate) return {1, 1};
  const Vec2 e = (c.hi - c.lo) * density;
  return {static_cast<int>(std::ceil(e.x())) + 1, static_cast<int>(std::ceil(e.y())) + 1};
}

bool pack(const std::vector<Chart>& charts, double density, int res, int gutter, std::vector<ChartRect>* out) {
  std::vector<ChartRect> rects(charts.size());
  std::vector<int> order(charts.size());
  for (std::size_t i = 0; i < charts.size(); ++i) {
    auto [w, h] = chart_size(charts[i], density);
    rects[i].w = w;
    rects[i].h = h;
  }
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return rects[a].h > rects[b].h; });
  int x = gutter, y = gutter, row = 0;
  for (int i : order) {
    ChartRect& r = rects[i];
    if (r.w + 2 * gutter > res) return false;
    if (x + r.w + gutter > res) {
      x = gutter;
      y += row + gutter;
      row = 0;
    }
    if (y + r.h + gutter > res) return false;
    r.x = x;
    r.y = y;
    x += r.w + gutter;
    row = std::max(row, r.h);
  }
  if (out) *out = std::move(rects);
  return true;
}

}  // namespace

UVAtlas generate_uv_atlas(const TexturedMesh& mesh, const AtlasParams& p) {
  validate(mesh);
  UVAtlas atlas;
  atlas.resolution = atlas_resolution(bounds_of(mesh.vertices), p);
  const std::vector<Chart> charts = build_charts(mesh, p.coplanar_tolerance, &atlas.degenerate_faces);
  double density = p.texels_per_meter;
  if (!pack(charts, density, atlas.resolution, p.gutter, nullptr)) {
    double lo = 0.0, hi = density;
    if (!pack(charts, lo, atlas.resolution, p.gutter, nullptr)) throw Error("atlas: charts do not fit at any density");
    for (int it = 0; it < 40; ++it) {
      const double mid = 0.5 * (lo + hi);
      (pack(charts, mid, atlas.resolution, p.gutter, nullptr) ? lo : hi) = mid;
    }
    density = lo;
  }
  pack(charts, density, atlas.resolution, p.gutter, &atlas.charts);
  atlas.texel_density = density;
  atlas.gutter = p.gutter;
  atlas.chart_of_face.assign(mesh.faces.size(), -1);
  atlas.uvs.assign(mesh.faces.size(), {});
  const double inv = 1.0 / atlas.resolution;
  for (std::size_t c = 0; c < charts.size(); ++c) {
    const Chart& ch = charts[c];
    const ChartRect& r = atlas.charts[c];
    for (int f : ch.faces) {
      atlas.chart_of_face[f] = static_cast<int>(c);
      for (int i = 0; i < 3; ++i) {
        Vec2 t(r.x + 0.5, r.y + 0.5);
        if (!ch.degenerate) {
          const Vec3 d = mesh.vertices[mesh.faces[f][i]] - ch.origin;
          t += (Vec2(d.dot(ch.u), d.dot(ch.v)) - ch.lo) * density;
        }
        atlas.uvs[f][i] = t * inv;
      }
    }
  }
  return atlas;
}

void apply_atlas(TexturedMesh& mesh, const UVAtlas& atlas, const Vec3& fill) {
  if (atlas.uvs.size() != mesh.faces.size()) throw Error("atlas: face count mismatch");
  mesh.uvs = atlas.uvs;
  mesh.texture = Raster(atlas.resolution, atlas.resolution, 3);
  for (int y = 0; y < atlas.resolution; ++y)
    for (int x = 0; x < atlas.resolution; ++x) mesh.texture.set_rgb(x, y, fill);
}

namespace {

struct TexelSite {
  int texel;  // y * res + x
  int face;
  Vec3 point;
};

// Texel centers covered by each face, in face order; each texel belongs to the first face covering it.
std::vector<TexelSite> texel_sites(const TexturedMesh& mesh, const UVAtlas& atlas, std::vector<int>& mask) {
  const int res = atlas.resolution;
  mask.assign(static_cast<std::size_t>(res) * res, -1);
  std::vector<TexelSite> sites;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const int chart = atlas.chart_of_face[f];
    Vec2 t[3];
    for (int i = 0; i < 3; ++i) t[i] = atlas.uvs[f][i] * res;
    const double area = (t[1] - t[0]).x() * (t[2] - t[0]).y() - (t[1] - t[0]).y() * (t[2] - t[0]).x();
    const Vec3* v[3] = {&mesh.vertices[mesh.faces[f][0]], &mesh.vertices[mesh.faces[f][1]],
                        &mesh.vertices[mesh.faces[f][2]]};
    if (std::abs(area) < 1e-12) {
      const int x = std::clamp(static_cast<int>(t[0].x()), 0, res - 1);
      const int y = std::clamp(static_cast<int>(t[0].y()), 0, res - 1);
      const int idx = y * res + x;
      if (mask[idx] < 0) {
        mask[idx] = chart;
        sites.push_back({idx, static_cast<int>(f), *v[0]});
      }
      continue;
    }
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min({t[0].x(), t[1].x(), t[2].x()}))));
    const int x1 = std::min(res - 1, static_cast<int>(std::ceil(std::max({t[0].x(), t[1].x(), t[2].x()}))));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min({t[0].y(), t[1].y(), t[2].y()}))));
    const int y1 = std::min(res - 1, static_cast<int>(std::ceil(std::max({t[0].y(), t[1].y(), t[2].y()}))));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const Vec2 q(x + 0.5, y + 0.5);
        double l[3];
        for (int i = 0; i < 3; ++i) {
          const Vec2& a = t[(i + 1) % 3];
          const Vec2& b = t[(i + 2) % 3];
          l[i] = ((b - a).x() * (q - a).y() - (b - a).y() * (q - a).x()) / area;
        }
        if (l[0] < -1e-9 || l[1] < -1e-9 || l[2] < -1e-9) continue;
        const int idx = y * res + x;
        if (mask[idx] >= 0) continue;
        mask[idx] = chart;
        sites.push_back({idx, static_cast<int>(f), l[0] * *v[0] + l[1] * *v[1] + l[2] * *v[2]});
      }
  }
  return sites;
}

// Layered flood fill: each pass fills the unfilled texels allowed by
// `may_fill` that touch filled ones, with the mean of their filled 4-neighbors.
template <class Pred>
void flood(Raster& tex, std::vector<std::uint8_t>& filled, Pred&& may_fill, int max_passes) {
  const int res = tex.width;
  auto neighbors = [res](int i, auto&& f) {
    const int x = i % res, y = i / res;
    if (x > 0) f(i - 1);
    if (x + 1 < res) f(i + 1);
    if (y > 0) f(i - res);
    if (y + 1 < res) f(i + res);
  };
  std::vector<std::uint8_t> queued(filled.size(), 0);
  std::vector<int> frontier;
  for (int i = 0; i < static_cast<int>(filled.size()); ++i) {
    if (!filled[i]) continue;
    neighbors(i, [&](int j) {
      if (!filled[j] && !queued[j] && may_fill(j)) {
        queued[j] = 1;
        frontier.push_back(j);
      }
    });
  }
  std::sort(frontier.begin(), frontier.end());
  std::vector<Vec3> values;
  for (int pass = 0; pass < max_passes && !frontier.empty(); ++pass) {
    values.assign(frontier.size(), Vec3::Zero());
    for (std::size_t k = 0; k < frontier.size(); ++k) {
      int n = 0;
      neighbors(frontier[k], [&](int j) {
        if (filled[j]) {
          values[k] += tex.rgb(j % res, j / res);
          ++n;
        }
      });
      values[k] /= n;
    }
    for (std::size_t k = 0; k < frontier.size(); ++k) {
      tex.set_rgb(frontier[k] % res, frontier[k] / res, values[k]);
      filled[frontier[k]] = 1;
    }
    std::vector<int> next;
    for (int i : frontier)
      neighbors(i, [&](int j) {
        if (!filled[j] && !queued[j] && may_fill(j)) {
          queued[j] = 1;
          next.push_back(j);
        }
      });
    std::sort(next.begin(), next.end());
    frontier = std::move(next);
  }
}

}  // namespace

std::vector<int> chart_texel_mask(const TexturedMesh& mesh, const UVAtlas& atlas) {
  std::vector<int> mask;
  texel_sites(mesh, atlas, mask);
  return mask;
}

std::vector<CameraView> build_view_rig(const AABB& box, const RigParams& p) {
  if (!box.valid()) throw Error("rig: invalid bounding box");
  const Vec3 c = box.center();
  const double r = std::max(0.5 * box.extent().norm(), 1e-6);
  const double f = 0.5 * p.width / std::tan(0.5 * p.fov_deg * M_PI / 180.0);
  const double allowed = 0.5 * p.fill * std::min(p.width, p.height);
  const double dist = r / std::sin(std::atan(allowed / f));
  std::vector<CameraView> rig;
  for (double e : p.elevations_deg) {
    const double er = e * M_PI / 180.0;
    for (int a = 0; a < p.azimuths; ++a) {
      const double ar = 2 * M_PI * a / p.azimuths;
      const Vec3 dir(std::cos(er) * std::cos(ar), std::cos(er) * std::sin(ar), std::sin(er));
      rig.push_back(CameraView::look_at(c + dist * dir, c, Vec3::UnitZ(), f, p.width, p.height));
    }
  }
  const Vec2 half = 0.5 * Vec2(box.extent().x(), box.extent().y());
  for (int k = 0; k < p.top_views; ++k) {
    const double ar = M_PI / 4 + 2 * M_PI * k / std::max(1, p.top_views);
    const Vec2 off(std::copysign(half.x(), std::cos(ar)), std::copysign(half.y(), std::sin(ar)));
    const double h = std::sqrt(std::max(dist * dist - off.squaredNorm(), 0.0));
    const Vec3 eye = c + Vec3(off.x(), off.y(), h);
    rig.push_back(CameraView::look_at(eye, c, Vec3::UnitZ(), f, p.width, p.height));
  }
  return rig;
}

BakeResult bake_texture(const TexturedMesh& mesh, const UVAtlas& atlas, std::span<const CameraView> rig,
                        std::span<const Raster> images, std::span<const MeshRef> occluders) {
  if (rig.size() != images.size()) throw Error("bake: image count does not match the rig");
  for (std::size_t i = 0; i < rig.size(); ++i)
    if (images[i].width != rig[i].width || images[i].height != rig[i].height || images[i].channels != 3)
      throw Error("bake: image " + std::to_string(i) + " does not match its rig pose");
  if (atlas.uvs.size() != mesh.faces.size()) throw Error("bake: atlas does not match mesh");
  const int res = atlas.resolution;
  BakeResult out;
  out.texture = Raster(res, res, 3, 0.5);
  out.covered.assign(static_cast<std::size_t>(res) * res, 0);
  std::vector<int> mask;
  const std::vector<TexelSite> sites = texel_sites(mesh, atlas, mask);
  out.stats.chart_texels = sites.size();

  TexturedMesh plain;
  plain.vertices = mesh.vertices;
  plain.faces = mesh.faces;
  std::vector<MeshRef> refs{{&plain, 1}};
  for (std::size_t i = 0; i < occluders.size(); ++i)
    refs.push_back({occluders[i].mesh, static_cast<std::uint32_t>(i + 2)});
  RenderSettings rs;
  std::vector<MeshGBuffer> gbuf;
  gbuf.reserve(rig.size());
  for (const CameraView& v : rig) gbuf.push_back(rasterize_meshes(refs, v, rs));
  std::vector<Vec3> normals(mesh.faces.size());
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    double a;
    normals[f] = face_normal(mesh, static_cast<int>(f), &a);
  }

  std::vector<Vec3> sum(sites.size(), Vec3::Zero());
  std::vector<double> wsum(sites.size(), 0.0);
  std::size_t contributions = 0, occluded = 0, violations = 0;
#pragma omp parallel for schedule(static) reduction(+ : contributions, occluded, violations)
  for (std::size_t s = 0; s < sites.size(); ++s) {
    const TexelSite& site = sites[s];
    const int chart = atlas.chart_of_face[site.face];
    for (std::size_t vi = 0; vi < rig.size(); ++vi) {
      const CameraView& view = rig[vi];
      const MeshGBuffer& g = gbuf[vi];
      const Projection pr = project_point(view, site.point);
      if (pr.depth <= rs.near_plane) continue;
      const Vec2& px = pr.pixel;
      if (px.x() < 0 || px.y() < 0 || px.x() >= view.width || px.y() >= view.height) continue;
      const Vec3 to_eye = (view.extrinsics.camera_center() - site.point).normalized();
      const double cosw = normals[site.face].dot(to_eye);
      if (!(cosw > 0)) continue;
      auto same_surface = [&](int x, int y) {
        if (x < 0 || y < 0 || x >= view.width || y >= view.height) return false;
        const std::size_t i = static_cast<std::size_t>(y) * view.width + x;
        return g.building[i] == 1 && atlas.chart_of_face[g.face[i]] == chart;
      };
      const int nx = static_cast<int>(px.x()), ny = static_cast<int>(px.y());
      const double fx = px.x() - 0.5, fy = px.y() - 0.5;
      const int x0 = static_cast<int>(std::floor(fx)), y0 = static_cast<int>(std::floor(fy));
      const double ax = fx - x0, ay = fy - y0;
      Vec3 c = Vec3::Zero();
      double wb = 0;
      int hits = 0;
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) {
          if (!same_surface(x0 + dx, y0 + dy)) continue;
          const double w = (dx ? ax : 1 - ax) * (dy ? ay : 1 - ay);
          c += w * images[vi].rgb(x0 + dx, y0 + dy);
          wb += w;
          ++hits;
        }
      const std::size_t ni = static_cast<std::size_t>(ny) * view.width + nx;
      const bool hidden = !same_surface(nx, ny) && g.depth[ni] < pr.depth;
      if (hits == 0 || hidden) {
        if (hidden) ++occluded;
        continue;
      }
      if (!(wb > 0)) continue;
      // the z-buffer surface at this pixel must lie on the texel's plane or behind it
      if (std::isfinite(g.depth[ni])) {
        const Vec3 q = unproject(view, Vec2(nx + 0.5, ny + 0.5), g.depth[ni]);
        if (std::abs(normals[site.face].dot(q - site.point)) > 1e-6 * (1 + pr.depth) && g.depth[ni] < pr.depth)
          ++violations;
      }
      sum[s] += cosw * c / wb;
      wsum[s] += cosw;
      ++contributions;
    }
  }
  out.stats.contributions = contributions;
  out.stats.occluded = occluded;
  out.stats.depth_violations = violations;

  std::vector<std::uint8_t> filled(out.covered.size(), 0);
  Vec3 mean = Vec3::Zero();
  for (std::size_t s = 0; s < sites.size(); ++s) {
    if (!(wsum[s] > 0)) continue;
    const int t = sites[s].texel;
    out.texture.set_rgb(t % res, t / res, (sum[s] / wsum[s]).cwiseMax(0.0).cwiseMin(1.0));
    out.covered[t] = filled[t] = 1;
    mean += out.texture.rgb(t % res, t / res);
    ++out.stats.covered_texels;
  }
  if (out.stats.covered_texels > 0) mean /= static_cast<double>(out.stats.covered_texels);
  else mean = Vec3::Constant(0.5);
  // inpaint inside charts, then seed charts nothing saw, then dilate into the gutter
  flood(out.texture, filled, [&](int i) { return mask[i] >= 0; }, 2 * res);
  for (const TexelSite& site : sites)
    if (!filled[site.texel]) {
      out.texture.set_rgb(site.texel % res, site.texel / res, mean);
      filled[site.texel] = 1;
    }
  flood(out.texture, filled, [&](int i) { return mask[i] < 0; }, std::max(atlas.gutter, 1));
  return out;
}

}  // namespace citygo
