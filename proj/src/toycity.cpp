#include "citygo/toycity.hpp"

#include <cmath>

namespace citygo::synth {

namespace {

geo2d::Polygon shifted(geo2d::Polygon poly, const Vec2& d) {
  for (Vec2& p : poly) p += d;
  return poly;
}

BuildingShape shifted(BuildingShape s, const Vec2& d) {
  for (PrismPart& part : s) part.footprint = shifted(part.footprint, d);
  return s;
}

double smoothstep(double e0, double e1, double x) {
  const double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
  return t * t * (3 - 2 * t);
}

// 1 inside [a, b], fading to 0 over `soft` metres outside
double band(double x, double a, double b, double soft) {
  return smoothstep(a - soft, a, x) * (1.0 - smoothstep(b, b + soft, x));
}

double frac(double x) { return x - std::floor(x); }

const Vec3 kWalls[] = {{0.75, 0.70, 0.60}, {0.65, 0.60, 0.55}, {0.80, 0.78, 0.75}, {0.60, 0.65, 0.70}};
const Vec3 kRoofs[] = {{0.55, 0.50, 0.45}, {0.40, 0.42, 0.45}, {0.50, 0.35, 0.30}, {0.45, 0.45, 0.40}};
const Vec3 kWindow(0.18, 0.22, 0.30);

}  // namespace

Vec3 toy_city_color(int building, const Point3& p, const Vec3& n) {
  if (building < 0) {
    Vec3 grass(0.34 + 0.06 * std::sin(p.x() / 7.0) * std::cos(p.y() / 9.0), 0.46 + 0.05 * std::sin(p.y() / 8.0),
               0.30 + 0.04 * std::cos((p.x() + p.y()) / 11.0));
    const double road = std::max(band(p.y(), -6.0, 2.0, 1.5), band(p.x(), -7.0, 1.0, 1.5));
    return (1 - road) * grass + road * Vec3(0.32, 0.32, 0.34);
  }
  const int b = building % 4;
  if (n.z() > 0.5) return kRoofs[b] + Vec3::Constant(0.03 * std::sin(p.x() / 3.0 + p.y() / 5.0));
  const double u = std::abs(n.y()) > std::abs(n.x()) ? p.x() : p.y();
  const bool window = p.z() > 1.0 && frac(u / 3.0) > 0.25 && frac(u / 3.0) < 0.75 && frac(p.z() / 3.0) > 0.35 &&
                      frac(p.z() / 3.0) < 0.75;
  return window ? kWindow : kWalls[b];
}

ToyCity toy_city(const ToyCityParams& p) {
  ToyCity city;
  city.shapes.push_back(box_building(Vec3(-24, -22, 0), Vec3(-12, -12, 12)));
  city.shapes.push_back(BuildingShape{PrismPart{l_shape(6, -24, 16, 14, 7, 7), 0.0, 9.0}});
  city.shapes.push_back(shifted(twin_towers(16, 10, 5, 5, 4, 18), Vec2(-26, 8)));
  city.shapes.push_back(box_building(Vec3(8, 8, 0), Vec3(20, 18, 15)));

  SceneBundle& b = city.bundle;
  for (std::size_t i = 0; i < city.shapes.size(); ++i) {
    // outer contour of the lowest part is the footprint
    b.footprints[static_cast<std::uint32_t>(i + 1)] = city.shapes[i].front().footprint;
    city.truth_meshes.push_back(shape_mesh(city.shapes[i]));
  }
  {
    TexturedMesh ground;
    const double h = p.ground_half;
    ground.vertices = {{-h, -h, 0}, {h, -h, 0}, {h, h, 0}, {-h, h, 0}};
    ground.faces = {{0, 1, 2}, {0, 2, 3}};
    city.truth_meshes.push_back(ground);
  }

  std::mt19937_64 rng(p.seed);
  std::normal_distribution<double> noise(0.0, p.noise);
  auto jitter = [&](const Point3& q) { return p.noise > 0 ? Point3(q + Vec3(noise(rng), noise(rng), noise(rng))) : q; };
  for (std::size_t i = 0; i < city.shapes.size(); ++i) {
    AABB box;
    for (const PrismPart& part : city.shapes[i])
      for (const Vec2& v : part.footprint) {
        box.extend(Vec3(v.x(), v.y(), part.z0));
        box.extend(Vec3(v.x(), v.y(), part.z1));
      }
    const double cx = box.center().x(), y0 = box.min.y();
    const double zc = 0.5 * (city.shapes[i].front().z0 + city.shapes[i].front().z1);
    SurfaceSampling opts;
    opts.density = p.wall_density;
    // an unreconstructed patch on the south wall
    opts.drop = [=](const Point3& q) {
      return q.y() < y0 + 0.05 && std::abs(q.x() - cx) < 2.0 && std::abs(q.z() - zc) < 2.0;
    };
    for (const SurfacePoint& s : sample_surface(city.shapes[i], opts, rng)) {
      b.points.positions.push_back(jitter(s.position));
      b.points.colors.push_back(toy_city_color(static_cast<int>(i), s.position, s.normal));
      b.points.labels.push_back(static_cast<std::uint32_t>(i + 1));
    }
  }
  const double step = 1.0 / std::sqrt(p.ground_density);
  std::uniform_real_distribution<double> u(-0.5 * step, 0.5 * step);
  for (double y = -p.ground_half + 0.5 * step; y < p.ground_half; y += step)
    for (double x = -p.ground_half + 0.5 * step; x < p.ground_half; x += step) {
      const Point3 q(x + u(rng), y + u(rng), 0.0);
      if (footprint_label(q.head<2>(), b.footprints)) continue;
      b.points.positions.push_back(jitter(q));
      b.points.colors.push_back(toy_city_color(-1, q, Vec3::UnitZ()));
      b.points.labels.push_back(0);
    }
  b.bounds = bounds_of(b.points.positions);

  const double focal = 0.5 * p.width / std::tan(0.5 * p.fov_deg * M_PI / 180.0);
  const Vec3 target(-3, -3, 3);
  for (std::size_t r = 0; r < p.elevations_deg.size(); ++r) {
    const double az0 = r * 180.0 / (p.views_per_ring * static_cast<double>(p.elevations_deg.size()));
    for (CameraView& v : orbit_views(target, p.distance, p.elevations_deg[r], p.views_per_ring, focal, p.width,
                                     p.height, az0)) {
      v.image = render_toy_city(city, v, p.supersample);
      b.views.push_back(std::move(v));
    }
  }
  return city;
}

Raster render_toy_city(const ToyCity& city, const CameraView& view, int supersample) {
  if (supersample < 1) throw Error("toy city: supersample must be at least 1");
  CameraView v = view;
  v.image.reset();
  v.width *= supersample;
  v.height *= supersample;
  v.intrinsics.fx *= supersample;
  v.intrinsics.fy *= supersample;
  v.intrinsics.cx *= supersample;
  v.intrinsics.cy *= supersample;
  std::vector<MeshRef> refs;
  for (std::size_t i = 0; i < city.truth_meshes.size(); ++i)
    refs.push_back({&city.truth_meshes[i], static_cast<std::uint32_t>(i + 1)});
  const MeshGBuffer g = rasterize_meshes(refs, v);
  const int nb = static_cast<int>(city.shapes.size());
  Raster img(v.width, v.height, 3);
  for (int y = 0; y < v.height; ++y)
    for (int x = 0; x < v.width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * v.width + x;
      if (g.mesh[i] < 0) continue;
      const TexturedMesh& m = city.truth_meshes[static_cast<std::size_t>(g.mesh[i])];
      const auto& f = m.faces[static_cast<std::size_t>(g.face[i])];
      const Vec3 n = (m.vertices[f[1]] - m.vertices[f[0]]).cross(m.vertices[f[2]] - m.vertices[f[0]]).normalized();
      const Point3 w = unproject(v, Vec2(x + 0.5, y + 0.5), g.depth[i]);
      img.set_rgb(x, y, toy_city_color(g.mesh[i] < nb ? g.mesh[i] : -1, w, n));
    }
  return supersample == 1 ? img : box_downsample(img, supersample);
}

}  // namespace citygo::synth
