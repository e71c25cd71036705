#include "citygo/synthetic.hpp"

#include <algorithm>
#include <cmath>

namespace citygo::synth {

geo2d::Polygon rectangle(double x0, double y0, double x1, double y1) {
  return {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
}

geo2d::Polygon circle_polygon(const Vec2& center, double radius, int segments) {
  geo2d::Polygon out;
  for (int i = 0; i < segments; ++i) {
    const double t = 2.0 * M_PI * i / segments;
    out.push_back(center + radius * Vec2(std::cos(t), std::sin(t)));
  }
  return out;
}

geo2d::Polygon l_shape(double x0, double y0, double w, double h, double notch_w, double notch_h) {
  // full rectangle minus the top-right notch
  return {{x0, y0}, {x0 + w, y0}, {x0 + w, y0 + h - notch_h}, {x0 + w - notch_w, y0 + h - notch_h},
          {x0 + w - notch_w, y0 + h}, {x0, y0 + h}};
}

BuildingShape box_building(const Vec3& min, const Vec3& max) {
  return {PrismPart{rectangle(min.x(), min.y(), max.x(), max.y()), min.z(), max.z()}};
}

BuildingShape twin_towers(double podium_w, double podium_d, double podium_h, double tower_w, double gap,
                          double tower_h) {
  BuildingShape s;
  s.push_back({rectangle(0, 0, podium_w, podium_d), 0.0, podium_h});
  const double total = 2 * tower_w + gap;
  const double x0 = 0.5 * (podium_w - total);
  const double y0 = 0.5 * (podium_d - tower_w);
  s.push_back({rectangle(x0, y0, x0 + tower_w, y0 + tower_w), podium_h, tower_h});
  s.push_back({rectangle(x0 + tower_w + gap, y0, x0 + total, y0 + tower_w), podium_h, tower_h});
  return s;
}

BuildingShape ziggurat(double base_side, double ratio, double z_step, double z_top) {
  const double top_side = base_side * std::sqrt(ratio);
  const double o = 0.5 * (base_side - top_side);
  return {PrismPart{rectangle(0, 0, base_side, base_side), 0.0, z_step},
          PrismPart{rectangle(o, o, o + top_side, o + top_side), z_step, z_top}};
}

namespace {

std::size_t draw_count(double expected, std::mt19937_64& rng) {
  const double base = std::floor(expected);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return static_cast<std::size_t>(base) + (u(rng) < expected - base ? 1 : 0);
}

// rejection sampling inside the polygon's bounding box
template <class F>
void sample_in_polygon(const geo2d::Polygon& poly, double density, std::mt19937_64& rng, F&& emit) {
  Vec2 lo = poly[0], hi = poly[0];
  for (const auto& p : poly) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double area = std::abs(geo2d::signed_area(poly));
  const std::size_t n = draw_count(area * density, rng);
  std::uniform_real_distribution<double> ux(lo.x(), hi.x()), uy(lo.y(), hi.y());
  std::size_t made = 0;
  while (made < n) {
    const Vec2 p(ux(rng), uy(rng));
    if (!geo2d::point_in_polygon(p, poly, 0.0)) continue;
    ++made;
    emit(p);
  }
}

}  // namespace

std::vector<SurfacePoint> sample_surface(const BuildingShape& shape, const SurfaceSampling& opts,
                                         std::mt19937_64& rng) {
  std::vector<SurfacePoint> out;
  auto push = [&](const Point3& p, const Vec3& n, int part) {
    if (opts.drop && opts.drop(p)) return;
    out.push_back({p, n, part});
  };
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t k = 0; k < shape.size(); ++k) {
    const PrismPart& part = shape[k];
    const int pk = static_cast<int>(k);
    if (opts.roofs) {
      sample_in_polygon(part.footprint, opts.density, rng, [&](const Vec2& p) {
        for (const PrismPart& q : shape)
          if (&q != &part && std::abs(q.z0 - part.z1) < 1e-9 && geo2d::point_in_polygon(p, q.footprint, 0.0))
            return;
        push({p.x(), p.y(), part.z1}, Vec3::UnitZ(), pk);
      });
    }
    if (opts.bottom && part.z0 <= 1e-9) {
      sample_in_polygon(part.footprint, opts.density, rng,
                        [&](const Vec2& p) { push({p.x(), p.y(), part.z0}, -Vec3::UnitZ(), pk); });
    }
    if (opts.walls) {
      const auto& poly = part.footprint;
      const double sign = geo2d::signed_area(poly) > 0 ? 1.0 : -1.0;
      for (std::size_t e = 0; e < poly.size(); ++e) {
        const Vec2 a = poly[e];
        const Vec2 b = poly[(e + 1) % poly.size()];
        const double len = (b - a).norm();
        const Vec2 d = (b - a) / len;
        const Vec3 normal(sign * d.y(), -sign * d.x(), 0.0);
        const std::size_t n = draw_count(len * (part.z1 - part.z0) * opts.density, rng);
        for (std::size_t i = 0; i < n; ++i) {
          const Vec2 xy = a + (b - a) * u(rng);
          push({xy.x(), xy.y(), part.z0 + (part.z1 - part.z0) * u(rng)}, normal, pk);
        }
      }
    }
  }
  return out;
}

std::vector<Point3> positions(const std::vector<SurfacePoint>& pts) {
  std::vector<Point3> out(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) out[i] = pts[i].position;
  return out;
}

TexturedMesh shape_mesh(const BuildingShape& shape) {
  TexturedMesh mesh;
  for (const PrismPart& part : shape) {
    geo2d::Polygon poly = part.footprint;
    if (geo2d::signed_area(poly) < 0) std::reverse(poly.begin(), poly.end());
    const int n = static_cast<int>(poly.size());
    const int base = static_cast<int>(mesh.vertices.size());
    for (const Vec2& p : poly) mesh.vertices.emplace_back(p.x(), p.y(), part.z0);
    for (const Vec2& p : poly) mesh.vertices.emplace_back(p.x(), p.y(), part.z1);
    for (const auto& t : geo2d::triangulate_polygon(poly)) {
      mesh.faces.push_back({base + t[0] + n, base + t[1] + n, base + t[2] + n});
      mesh.faces.push_back({base + t[0], base + t[2], base + t[1]});
    }
    for (int i = 0; i < n; ++i) {
      const int j = (i + 1) % n;
      mesh.faces.push_back({base + i, base + j, base + j + n});
      mesh.faces.push_back({base + i, base + j + n, base + i + n});
    }
  }
  return mesh;
}

TexturedMesh box_mesh(const Vec3& min, const Vec3& max) { return shape_mesh(box_building(min, max)); }

double footprint_area_at(const BuildingShape& shape, double z) {
  double a = 0.0;
  for (const auto& p : shape)
    if (z >= p.z0 && z < p.z1) a += std::abs(geo2d::signed_area(p.footprint));
  return a;
}

}  // namespace citygo::synth

namespace citygo::synth {

std::vector<CameraView> orbit_views(const Vec3& target, double distance, double elevation_deg, int count,
                                    double focal, int width, int height, double azimuth0_deg) {
  std::vector<CameraView> out;
  const double el = elevation_deg * M_PI / 180.0;
  for (int i = 0; i < count; ++i) {
    const double az = (azimuth0_deg + 360.0 * i / count) * M_PI / 180.0;
    const Vec3 dir(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
    out.push_back(CameraView::look_at(target + distance * dir, target, Vec3::UnitZ(), focal, width, height));
  }
  return out;
}

bool DefectCubeScene::in_defect(const Point3& p) const {
  return std::abs(p.x() - window_min.x()) < 1e-6 && p.y() >= window_min.y() && p.y() <= window_max.y() &&
         p.z() >= window_min.z() && p.z() <= window_max.z();
}

DefectCubeScene defect_cube_scene(int width, int height) {
  DefectCubeScene s;
  s.proxy = box_mesh(Vec3(-2, -2, 0), Vec3(2, 2, 4));
  s.proxy.uvs.assign(s.proxy.faces.size(), {Vec2(0.5, 0.5), Vec2(0.5, 0.5), Vec2(0.5, 0.5)});
  s.proxy.texture = Raster(1, 1, 3);
  s.proxy.texture.set_rgb(0, 0, s.wall);

  auto color_at = [&](const Point3& p) { return s.in_defect(p) ? s.window : s.wall; };
  // lattice on the five visible faces; axis a is the face normal
  for (int a = 0; a < 3; ++a)
    for (int side = 0; side < 2; ++side) {
      if (a == 2 && side == 0) continue;
      const int u = (a + 1) % 3, v = (a + 2) % 3;
      for (int i = 0; i < 40; ++i)
        for (int j = 0; j < 40; ++j) {
          Point3 p;
          p[a] = a == 2 ? 4.0 : (side ? 2.0 : -2.0);
          p[u] = (u == 2 ? 0.0 : -2.0) + 0.05 + 0.1 * i;
          p[v] = (v == 2 ? 0.0 : -2.0) + 0.05 + 0.1 * j;
          Gaussian3D g;
          g.position = p;
          g.scale = Vec3::Constant(0.05);
          g.scale[a] = 0.005;
          g.opacity = 0.9;
          g.color = color_at(p);
          g.building_id = 1;
          s.gaussians.push_back(g);
        }
    }

  const double focal = 0.5 * width / std::tan(30.0 * M_PI / 180.0);
  s.views = orbit_views(Vec3(0, 0, 2), 10.0, 25.0, 8, focal, width, height, 22.5);
  const MeshRef ref{&s.proxy, 1};
  for (CameraView& view : s.views) {
    const MeshGBuffer g = rasterize_meshes(std::span(&ref, 1), view);
    Raster gt = g.color;
    for (int y = 0; y < view.height; ++y)
      for (int x = 0; x < view.width; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * view.width + x;
        if (!g.covered(i)) continue;
        Point3 p = unproject(view, Vec2(x + 0.5, y + 0.5), g.depth[i]);
        if (std::abs(p.x() - 2.0) < 1e-6) p.x() = 2.0;
        if (s.in_defect(p)) gt.set_rgb(x, y, s.window);
      }
    view.image = std::move(gt);
  }
  return s;
}

SurroundScene surround_scene(std::uint64_t seed, std::size_t count, int width, int height) {
  SurroundScene s;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto ground_color = [](double x, double y) {
    return Vec3(0.3 + 0.2 * std::sin(0.3 * x), 0.45 + 0.15 * std::cos(0.25 * y), 0.2 + 0.1 * std::sin(0.2 * (x + y)));
  };
  const std::size_t major = count * 3 / 10;
  for (std::size_t k = 0; k < count; ++k) {
    Gaussian3D g;
    g.building_id = 0;
    const double x = -20 + 40 * u(rng), y = -20 + 40 * u(rng);
    if (k < major) {
      const bool bush = u(rng) < 0.3;
      g.position = Vec3(x, y, bush ? 0.5 + 1.5 * u(rng) : 0.0);
      g.scale = bush ? Vec3::Constant(0.5 + 0.5 * u(rng)) : Vec3(0.9 + 0.6 * u(rng), 0.9 + 0.6 * u(rng), 0.05);
      g.opacity = 0.7 + 0.25 * u(rng);
      g.color = bush ? Vec3(0.1 + 0.2 * u(rng), 0.35 + 0.3 * u(rng), 0.1 + 0.1 * u(rng)) : ground_color(x, y);
    } else if (k % 2 == 0) {
      // faint specks
      g.position = Vec3(x, y, 0.3 * u(rng));
      g.scale = Vec3::Constant(0.02 + 0.03 * u(rng));
      g.opacity = 0.02 + 0.05 * u(rng);
      g.color = Vec3(u(rng), u(rng), u(rng));
    } else {
      // buried under the ground layer
      g.position = Vec3(x, y, -0.3 - 0.5 * u(rng));
      g.scale = Vec3::Constant(0.1 + 0.2 * u(rng));
      g.opacity = 0.5 + 0.4 * u(rng);
      g.color = Vec3(u(rng), u(rng), u(rng));
    }
    g.rotation = Quat(Eigen::AngleAxisd(2 * M_PI * u(rng), Vec3::UnitZ()));
    s.gaussians.push_back(g);
  }
  const double focal = 0.5 * width / std::tan(35.0 * M_PI / 180.0);
  s.views = orbit_views(Vec3(0, 0, 0), 30.0, 50.0, 8, focal, width, height);
  for (CameraView& v : s.views) v.image = render_gaussians_only(s.gaussians, v);
  return s;
}

}  // namespace citygo::synth
