#include "citygo/bpcc.hpp"

#include "spatial_grid.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

namespace citygo::bpcc {

using geo2d::Polygon;

int LayerStack::layer_of(double z) const {
  const int i = static_cast<int>(std::floor((z - z_min) / layer_height));
  return std::clamp(i, 0, num_layers - 1);
}

LayerStack build_layer_stack(std::span<const Point3> cloud, int num_layers,
                             std::optional<std::pair<double, double>> z_range) {
  if (cloud.empty()) throw Error("bpcc: empty point cloud");
  if (cloud.size() < 3) throw Error("bpcc: need at least 3 points");
  if (num_layers < 2) throw Error("bpcc: need at least 2 layers");
  LayerStack s;
  s.num_layers = num_layers;
  s.z_min = std::numeric_limits<double>::infinity();
  s.z_max = -std::numeric_limits<double>::infinity();
  for (const auto& p : cloud) {
    if (!p.allFinite()) throw Error("bpcc: non-finite point");
    s.z_min = std::min(s.z_min, p.z());
    s.z_max = std::max(s.z_max, p.z());
  }
  if (z_range) {
    if (s.z_min < z_range->first || s.z_max > z_range->second) throw Error("bpcc: points outside the layer range");
    s.z_min = z_range->first;
    s.z_max = z_range->second;
  }
  if (!(s.z_max > s.z_min)) throw Error("bpcc: degenerate vertical extent");
  s.layer_height = (s.z_max - s.z_min) / num_layers;
  s.xy.resize(cloud.size());
  s.global_sets.assign(num_layers, {});
  s.local_sets.assign(num_layers, {});
  std::vector<int> layer(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    s.xy[i] = cloud[i].head<2>();
    layer[i] = s.layer_of(cloud[i].z());
    s.local_sets[layer[i]].push_back(static_cast<int>(i));
  }
  for (int l = 0; l < num_layers; ++l)
    for (std::size_t i = 0; i < cloud.size(); ++i)
      if (layer[i] >= l) s.global_sets[l].push_back(static_cast<int>(i));
  return s;
}

Clustering dbscan(std::span<const Vec2> points, double eps, int min_pts) {
  if (!(eps > 0)) throw Error("dbscan: eps must be positive");
  if (min_pts < 1) throw Error("dbscan: min_pts must be >= 1");
  Clustering out;
  const int n = static_cast<int>(points.size());
  if (n == 0) return out;
  detail::PointGrid<2> grid(points, eps);
  constexpr int kUnvisited = -2, kNoise = -1;
  std::vector<int> label(n, kUnvisited);
  std::vector<int> neighbors;
  std::vector<int> queue;
  int cluster = 0;
  auto region = [&](int i) {
    neighbors.clear();
    grid.for_each_within(points[i], eps, [&](int j, double) { neighbors.push_back(j); });
  };
  for (int i = 0; i < n; ++i) {
    if (label[i] != kUnvisited) continue;
    region(i);
    if (static_cast<int>(neighbors.size()) < min_pts) {
      label[i] = kNoise;
      continue;
    }
    label[i] = cluster;
    queue.assign(neighbors.begin(), neighbors.end());
    for (std::size_t q = 0; q < queue.size(); ++q) {
      const int j = queue[q];
      if (label[j] == kNoise) label[j] = cluster;  // border point
      if (label[j] != kUnvisited) continue;
      label[j] = cluster;
      region(j);
      if (static_cast<int>(neighbors.size()) >= min_pts)
        for (int k : neighbors)
          if (label[k] == kUnvisited || label[k] == kNoise) queue.push_back(k);
    }
    ++cluster;
  }
  out.clusters.assign(cluster, {});
  for (int i = 0; i < n; ++i) {
    if (label[i] >= 0)
      out.clusters[label[i]].push_back(i);
    else
      out.noise.push_back(i);
  }
  return out;
}

Contour2D Contour2D::from_loop(Polygon loop) {
  Contour2D c;
  c.vertices = geo2d::normalize_loop(std::move(loop));
  c.area = std::abs(geo2d::signed_area(c.vertices));
  if (c.vertices.size() < 3 || !(c.area > 0)) throw Error("contour: degenerate polygon");
  return c;
}

namespace {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

// Neighbors of every vertex in counter-clockwise order, taken from the
// triangulation so the order agrees with its exact predicates. For hull
// vertices the outer sector lies between the last and the first neighbor.
struct Rotation {
  std::vector<std::vector<int>> ring;
  std::vector<std::vector<char>> kept;

  int position(int v, int w) const {
    const auto& r = ring[v];
    return static_cast<int>(std::find(r.begin(), r.end(), w) - r.begin());
  }
};

Rotation build_rotation(int n, const geo2d::Triangulation& tri) {
  std::vector<std::vector<std::pair<int, int>>> fan(n);  // around v: a then b
  for (const auto& t : tri.triangles)
    for (int i = 0; i < 3; ++i) fan[t[i]].push_back({t[(i + 1) % 3], t[(i + 2) % 3]});
  Rotation rot;
  rot.ring.assign(n, {});
  for (int v = 0; v < n; ++v) {
    auto& f = fan[v];
    if (f.empty()) continue;
    std::map<int, int> next;
    std::set<int> targets;
    for (auto [a, b] : f) {
      next[a] = b;
      targets.insert(b);
    }
    int start = f.front().first;
    for (auto [a, b] : f)
      if (!targets.count(a)) start = a;  // open fan on the hull
    int cur = start;
    do {
      rot.ring[v].push_back(cur);
      auto it = next.find(cur);
      if (it == next.end()) break;
      cur = it->second;
    } while (cur != start);
  }
  return rot;
}

// Traces the face of the kept-edge subgraph to the left of start->first by
// always taking the first kept edge clockwise from the one we arrived on.
// Bounded faces come out counter-clockwise and the outer face clockwise, the
// latter possibly with spikes (dangling edges walked twice) and pinch vertices.
std::vector<int> trace_face(const Rotation& rot, int start, int first) {
  auto next_cw = [&](int v, int from) {
    const auto& r = rot.ring[v];
    const int m = static_cast<int>(r.size());
    int k = rot.position(v, from);
    for (int step = 0; step < m; ++step) {
      k = (k + m - 1) % m;
      if (rot.kept[v][k]) return r[k];
    }
    return from;
  };
  std::vector<int> walk{start};
  int prev = start, cur = first;
  while (true) {
    walk.push_back(cur);
    const int nxt = next_cw(cur, prev);
    prev = cur;
    cur = nxt;
    if (prev == start && cur == first) break;
  }
  walk.pop_back();  // start vertex repeated at the end
  return walk;
}

double walk_area(std::span<const Vec2> pts, const std::vector<int>& walk) {
  double a = 0;
  for (std::size_t i = 0; i < walk.size(); ++i) {
    const Vec2& p = pts[walk[i]];
    const Vec2& q = pts[walk[(i + 1) % walk.size()]];
    a += p.x() * q.y() - q.x() * p.y();
  }
  return 0.5 * a;
}

// Outer face walk of the component containing `start`, which must lie on the
// component's outer boundary (e.g. its lowest vertex). Of the faces incident to
// start, the outer one is the only clockwise one.
std::vector<int> outer_walk(std::span<const Vec2> pts, const Rotation& rot, int start) {
  std::vector<int> best;
  double best_area = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < rot.ring[start].size(); ++k) {
    if (!rot.kept[start][k]) continue;
    std::vector<int> walk = trace_face(rot, start, rot.ring[start][k]);
    const double a = walk_area(pts, walk);
    if (a < best_area) {
      best_area = a;
      best = std::move(walk);
    }
  }
  return best;
}

// Removes back-and-forth spikes from a closed walk and splits it at repeated
// vertices into simple loops.
std::vector<std::vector<int>> simple_loops(std::vector<int> walk) {
  bool changed = true;
  while (changed && walk.size() >= 3) {
    changed = false;
    std::vector<int> out;
    for (int v : walk) {
      if (out.size() >= 2 && out[out.size() - 2] == v) {
        out.pop_back();
        changed = true;
        continue;
      }
      if (!out.empty() && out.back() == v) continue;
      out.push_back(v);
    }
    // wrap-around spike
    while (out.size() >= 3 && (out[1] == out.back() || out.front() == out.back())) {
      if (out.front() == out.back()) {
        out.pop_back();
      } else {
        out.erase(out.begin());
        out.pop_back();
      }
      changed = true;
    }
    walk = std::move(out);
  }
  std::vector<std::vector<int>> loops;
  std::vector<int> stack;
  std::map<int, std::size_t> pos;
  for (int v : walk) {
    auto it = pos.find(v);
    if (it != pos.end()) {
      const std::size_t p = it->second;
      std::vector<int> loop(stack.begin() + p, stack.end());
      for (std::size_t k = p + 1; k < stack.size(); ++k) pos.erase(stack[k]);
      stack.resize(p + 1);
      if (loop.size() >= 3) loops.push_back(std::move(loop));
      continue;
    }
    pos[v] = stack.size();
    stack.push_back(v);
  }
  if (stack.size() >= 3) loops.push_back(std::move(stack));
  return loops;
}

}  // namespace

AlphaShapeResult alpha_shape_contour(std::span<const Vec2> points, double alpha) {
  if (points.size() < 3) throw Error("alpha shape: need at least 3 points");
  const geo2d::Triangulation tri = geo2d::delaunay(points);
  if (tri.triangles.empty()) throw Error("alpha shape: input points are collinear");
  const int n = static_cast<int>(points.size());
  // Every edge of a kept triangle is short enough to be kept on its own, so the
  // outer boundary of the complex is the outer face of the short-edge graph.
  Rotation rot = build_rotation(n, tri);
  UnionFind uf(n);
  const double max_len2 = 4 * alpha * alpha;
  std::vector<char> has_edge(n, 0);
  rot.kept.assign(n, {});
  for (int v = 0; v < n; ++v) {
    rot.kept[v].resize(rot.ring[v].size());
    for (std::size_t k = 0; k < rot.ring[v].size(); ++k) {
      const int w = rot.ring[v][k];
      const bool keep = (points[v] - points[w]).squaredNorm() <= max_len2;
      rot.kept[v][k] = keep;
      if (!keep) continue;
      has_edge[v] = 1;
      uf.unite(v, w);
    }
  }

  std::map<int, int> lowest;  // component root -> lowest vertex
  for (int v = 0; v < n; ++v) {
    if (!has_edge[v]) continue;
    auto [it, inserted] = lowest.emplace(uf.find(v), v);
    const Vec2& p = points[v];
    const Vec2& q = points[it->second];
    if (p.y() < q.y() || (p.y() == q.y() && p.x() < q.x())) it->second = v;
  }

  AlphaShapeResult result;
  result.components = static_cast<int>(lowest.size());
  result.disconnected = result.components > 1;
  double best_area = 0.0;
  for (const auto& [root, start] : lowest) {
    std::vector<int> walk = outer_walk(points, rot, start);
    std::reverse(walk.begin(), walk.end());
    for (const auto& ids : simple_loops(std::move(walk))) {
      Polygon loop(ids.size());
      for (std::size_t k = 0; k < ids.size(); ++k) loop[k] = points[ids[k]];
      const double a = geo2d::signed_area(loop);
      if (a <= best_area) continue;
      Polygon normalized = geo2d::normalize_loop(loop);
      if (normalized.size() < 3) continue;
      best_area = a;
      result.contour.vertices = std::move(normalized);
    }
  }
  if (!(best_area > 0)) throw Error("alpha shape: alpha too small, no enclosed region");
  result.contour.area = std::abs(geo2d::signed_area(result.contour.vertices));
  return result;
}

namespace {

std::vector<Vec2> gather(const LayerStack& s, const std::vector<int>& ids) {
  std::vector<Vec2> out(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) out[i] = s.xy[ids[i]];
  return out;
}

Contour2D contour_of(const LayerStack& s, const std::vector<int>& ids, const TrackParams& p) {
  const auto pts = gather(s, ids);
  Contour2D c = alpha_shape_contour(pts, p.alpha).contour;
  if (p.simplify_tolerance > 0) c = Contour2D::from_loop(geo2d::simplify_loop(c.vertices, p.simplify_tolerance));
  return c;
}

std::vector<std::vector<int>> cluster_ids(const LayerStack& s, const std::vector<int>& ids, const TrackParams& p) {
  const auto pts = gather(s, ids);
  Clustering c = dbscan(pts, p.eps, p.min_pts);
  std::vector<std::vector<int>> out;
  for (auto& cl : c.clusters) {
    if (cl.size() < 3) continue;
    std::vector<int> m(cl.size());
    for (std::size_t i = 0; i < cl.size(); ++i) m[i] = ids[cl[i]];
    out.push_back(std::move(m));
  }
  return out;
}

bool try_contour(const LayerStack& s, const std::vector<int>& ids, const TrackParams& p, Contour2D& out) {
  try {
    out = contour_of(s, ids, p);
    return true;
  } catch (const Error&) {
    return false;
  }
}

}  // namespace

LayeredProxy track_dominant_contours(const LayerStack& stack, const TrackParams& params) {
  LayeredProxy proxy;
  proxy.layer_height = stack.layer_height;
  proxy.z_min = stack.z_min;
  proxy.z_max = stack.z_max;
  proxy.num_layers = stack.num_layers;
  proxy.layer_clusters.assign(stack.num_layers, {});
  int next_lineage = 0;

  auto add_dominant = [&](Contour2D c, int layer, int parent) {
    DominantContour d;
    d.contour = std::move(c);
    d.start_layer = layer;
    d.end_layer = stack.num_layers;
    d.parent = parent;
    d.lineage = next_lineage++;
    proxy.dominants.push_back(std::move(d));
    return static_cast<int>(proxy.dominants.size() - 1);
  };

  for (auto& members : cluster_ids(stack, stack.global_sets[0], params)) {
    Contour2D c;
    if (!try_contour(stack, members, params, c)) continue;
    const int d = add_dominant(std::move(c), 0, -1);
    proxy.layer_clusters[0].push_back({std::move(members), d});
  }
  if (proxy.dominants.empty()) throw Error("bpcc: no cluster found on the bottom layer");

  std::vector<char> in_layer(stack.xy.size(), 0);
  for (int layer = 1; layer < stack.num_layers; ++layer) {
    std::fill(in_layer.begin(), in_layer.end(), 0);
    for (int id : stack.global_sets[layer]) in_layer[id] = 1;
    for (const LayerCluster& parent : proxy.layer_clusters[layer - 1]) {
      std::vector<int> inherited;
      for (int id : parent.members)
        if (in_layer[id]) inherited.push_back(id);
      std::vector<std::vector<int>> children;
      if (inherited.size() >= 3) children = cluster_ids(stack, inherited, params);
      // keep only children that yield a valid contour
      std::vector<std::pair<std::vector<int>, Contour2D>> valid;
      for (auto& ch : children) {
        Contour2D c;
        if (try_contour(stack, ch, params, c)) valid.push_back({std::move(ch), std::move(c)});
      }
      if (valid.empty()) {
        proxy.dominants[parent.dominant].end_layer = layer;
        continue;
      }
      if (valid.size() == 1) {
        auto& [members, c] = valid.front();
        const double ratio = c.area / proxy.dominants[parent.dominant].contour.area;
        if (ratio <= params.gamma) {
          proxy.dominants[parent.dominant].end_layer = layer;
          const int d = add_dominant(std::move(c), layer, parent.dominant);
          proxy.layer_clusters[layer].push_back({std::move(members), d});
        } else {
          proxy.layer_clusters[layer].push_back({std::move(members), parent.dominant});
        }
        continue;
      }
      proxy.dominants[parent.dominant].end_layer = layer;
      for (auto& [members, c] : valid) {
        const int d = add_dominant(std::move(c), layer, parent.dominant);
        proxy.layer_clusters[layer].push_back({std::move(members), d});
      }
    }
  }
  return proxy;
}

namespace {

// Regular grid samples at `spacing` inside a polygon.
std::vector<Vec2> sample_polygon(const Polygon& poly, double spacing) {
  Vec2 lo = poly[0], hi = poly[0];
  for (const Vec2& p : poly) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  std::vector<Vec2> out;
  const int nx = std::max(1, static_cast<int>(std::ceil((hi.x() - lo.x()) / spacing)));
  const int ny = std::max(1, static_cast<int>(std::ceil((hi.y() - lo.y()) / spacing)));
  const double ox = lo.x() + 0.5 * ((hi.x() - lo.x()) - (nx - 1) * spacing);
  const double oy = lo.y() + 0.5 * ((hi.y() - lo.y()) - (ny - 1) * spacing);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const Vec2 p(ox + i * spacing, oy + j * spacing);
      if (geo2d::point_in_polygon(p, poly, 0.0)) out.push_back(p);
    }
  return out;
}

}  // namespace

Completion fill_missing_points(std::span<const Point3> cloud, const LayeredProxy& proxy, const LayerStack& stack,
                               const FillParams& params) {
  if (proxy.num_layers != stack.num_layers || stack.xy.size() != cloud.size())
    throw Error("bpcc: proxy and layer stack do not match the cloud");
  if (!(params.sample_density > 0)) throw Error("bpcc: sample density must be positive");
  const double spacing = 1.0 / std::sqrt(params.sample_density);
  Completion out;
  out.points.assign(cloud.begin(), cloud.end());
  out.original_count = cloud.size();

  // bottom faces of prisms starting on the first layer
  for (const auto& d : proxy.dominants) {
    if (d.start_layer != 0) continue;
    for (const Vec2& p : sample_polygon(d.contour.vertices, spacing)) {
      out.points.emplace_back(p.x(), p.y(), proxy.z_min);
      ++out.bottom_samples;
    }
  }

  std::vector<Point3> originals(cloud.begin(), cloud.end());
  const double cell = params.coverage_radius > 0 ? params.coverage_radius : 1.0;
  detail::PointGrid<3> grid(originals, cell);

  std::vector<Point3> wall;
  std::vector<char> local(cloud.size(), 0);
  for (int layer = 0; layer < stack.num_layers; ++layer) {
    std::fill(local.begin(), local.end(), 0);
    for (int id : stack.local_sets[layer]) local[id] = 1;
    for (const LayerCluster& lc : proxy.layer_clusters[layer]) {
      std::vector<Vec2> pts;
      for (int id : lc.members)
        if (local[id]) pts.push_back(stack.xy[id]);
      double ratio = 0.0;
      const DominantContour& dom = proxy.dominants[lc.dominant];
      if (pts.size() >= 3) {
        try {
          ratio = alpha_shape_contour(pts, params.alpha).contour.area / dom.contour.area;
        } catch (const Error&) {
          ratio = 0.0;
        }
      }
      if (ratio >= params.beta) continue;
      out.filled_segments.push_back({layer, lc.dominant});
      const double z0 = stack.z_low(layer), z1 = stack.z_high(layer);
      const int nz = std::max(1, static_cast<int>(std::ceil((z1 - z0) / spacing)));
      const double dz = (z1 - z0) / nz;
      const auto& poly = dom.contour.vertices;
      for (std::size_t e = 0; e < poly.size(); ++e) {
        const Vec2& a = poly[e];
        const Vec2& b = poly[(e + 1) % poly.size()];
        const double len = (b - a).norm();
        const int ns = std::max(1, static_cast<int>(std::ceil(len / spacing)));
        std::vector<Point3> open;
        for (int s = 0; s < ns; ++s) {
          const Vec2 xy = a + (b - a) * ((s + 0.5) / ns);
          for (int k = 0; k < nz; ++k) {
            const Point3 p(xy.x(), xy.y(), z0 + (k + 0.5) * dz);
            if (params.coverage_radius > 0) {
              bool covered = false;
              grid.for_each_within(p, params.coverage_radius, [&](int, double) { covered = true; });
              if (covered) continue;
            }
            open.push_back(p);
          }
        }
        // a wall segment counts as missing only when a sizable part of it is open
        if (open.size() >= params.min_open_fraction * ns * nz) wall.insert(wall.end(), open.begin(), open.end());
      }
    }
  }
  out.side_samples = wall.size();
  out.points.insert(out.points.end(), wall.begin(), wall.end());
  return out;
}

TexturedMesh proxy_to_mesh(const LayeredProxy& proxy) {
  TexturedMesh mesh;
  for (const auto& d : proxy.dominants) {
    const auto& poly = d.contour.vertices;
    const int n = static_cast<int>(poly.size());
    if (n < 3) throw Error("proxy mesh: contour with fewer than 3 vertices");
    if (d.end_layer <= d.start_layer) continue;
    const double z0 = proxy.z_low(d.start_layer);
    const double z1 = proxy.z_top(d.end_layer);
    const int base = static_cast<int>(mesh.vertices.size());
    for (const Vec2& p : poly) mesh.vertices.emplace_back(p.x(), p.y(), z0);
    for (const Vec2& p : poly) mesh.vertices.emplace_back(p.x(), p.y(), z1);
    const auto cap = geo2d::triangulate_polygon(poly);
    for (const auto& t : cap) {
      mesh.faces.push_back({base + t[0] + n, base + t[1] + n, base + t[2] + n});  // top, facing up
      mesh.faces.push_back({base + t[0], base + t[2], base + t[1]});              // bottom, facing down
    }
    for (int i = 0; i < n; ++i) {
      const int j = (i + 1) % n;
      // counter-clockwise contour: outward normal is to the right of a->b
      mesh.faces.push_back({base + i, base + j, base + j + n});
      mesh.faces.push_back({base + i, base + j + n, base + i + n});
    }
  }
  return mesh;
}

std::vector<int> prism_of_faces(const LayeredProxy& proxy) {
  std::vector<int> out;
  for (std::size_t k = 0; k < proxy.dominants.size(); ++k) {
    const auto& d = proxy.dominants[k];
    if (d.end_layer <= d.start_layer) continue;
    const std::size_t n = d.contour.vertices.size();
    out.insert(out.end(), 2 * (n - 2) + 2 * n, static_cast<int>(k));
  }
  return out;
}

double median_nn_distance(std::span<const Point3> cloud) {
  if (cloud.size() < 2) throw Error("bpcc: need at least 2 points for spacing");
  const AABB box = bounds_of(std::vector<Point3>(cloud.begin(), cloud.end()));
  const Vec3 ext = box.extent();
  const double vol_scale = std::max({ext.x(), ext.y(), ext.z(), 1e-9});
  // a cell holding a handful of points on average over a surface-like set
  const double cell = std::max(vol_scale / std::sqrt(static_cast<double>(cloud.size())), 1e-6);
  detail::PointGrid<3> grid(cloud, cell);
  std::vector<double> d(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) grid.nearest(cloud[i], &d[i], static_cast<int>(i));
  auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  return *mid;
}

BpccResult complete_building(std::span<const Point3> cloud, const BpccConfig& cfg) {
  if (cloud.size() < 3) throw Error("bpcc: need at least 3 points");
  BpccResult r;
  r.spacing = median_nn_distance(cloud);
  if (!(r.spacing > 0)) throw Error("bpcc: duplicate points only");
  double zmin = cloud[0].z(), zmax = cloud[0].z();
  for (const auto& p : cloud) {
    zmin = std::min(zmin, p.z());
    zmax = std::max(zmax, p.z());
  }
  int layers = cfg.num_layers;
  if (cfg.ground_z && *cfg.ground_z < zmin) zmin = *cfg.ground_z;
  if (cfg.num_layers <= 0)
    layers = std::max(cfg.min_layers, static_cast<int>(std::ceil((zmax - zmin) / cfg.target_layer_height)));
  r.stack = build_layer_stack(cloud, layers, std::make_pair(zmin, zmax));

  TrackParams tp;
  tp.gamma = cfg.gamma;
  tp.eps = cfg.eps_factor * r.spacing;
  tp.min_pts = cfg.min_pts;
  tp.alpha = cfg.alpha_factor * r.spacing;
  tp.simplify_tolerance = cfg.simplify_tolerance;
  r.proxy = track_dominant_contours(r.stack, tp);

  FillParams fp;
  fp.beta = cfg.beta;
  fp.sample_density = cfg.sample_density > 0 ? cfg.sample_density : 1.0 / (r.spacing * r.spacing);
  fp.alpha = tp.alpha;
  fp.coverage_radius = cfg.coverage_factor * std::max(r.spacing, 1.0 / std::sqrt(fp.sample_density));
  r.completion = fill_missing_points(cloud, r.proxy, r.stack, fp);
  r.mesh = proxy_to_mesh(r.proxy);
  return r;
}

}  // namespace citygo::bpcc
