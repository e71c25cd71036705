#include "citygo/geometry2d.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

namespace citygo::geo2d {

double cross(const Vec2& o, const Vec2& a, const Vec2& b) {
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

double signed_area(std::span<const Vec2> loop) {
  const std::size_t n = loop.size();
  if (n < 3) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& a = loop[i];
    const Vec2& b = loop[(i + 1) % n];
    s += a.x() * b.y() - a.y() * b.x();
  }
  return 0.5 * s;
}

Polygon convex_hull(std::span<const Vec2> points) {
  std::vector<Vec2> pts(points.begin(), points.end());
  std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  Polygon hull(2 * pts.size());
  std::size_t k = 0;
  for (const Vec2& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

namespace {

double segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len2 = ab.squaredNorm();
  double t = len2 > 0 ? (p - a).dot(ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return (a + t * ab - p).norm();
}

}  // namespace

double distance_to_boundary(const Vec2& p, std::span<const Vec2> loop) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < loop.size(); ++i)
    best = std::min(best, segment_distance(p, loop[i], loop[(i + 1) % loop.size()]));
  return best;
}

bool point_in_polygon(const Vec2& p, std::span<const Vec2> loop, double tol) {
  const std::size_t n = loop.size();
  if (n < 3) return false;
  if (distance_to_boundary(p, loop) <= tol) return true;
  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2& a = loop[i];
    const Vec2& b = loop[j];
    if ((a.y() > p.y()) != (b.y() > p.y())) {
      const double x = (b.x() - a.x()) * (p.y() - a.y()) / (b.y() - a.y()) + a.x();
      if (p.x() < x) inside = !inside;
    }
  }
  return inside;
}

namespace {

int orient_sign(const Vec2& a, const Vec2& b, const Vec2& c) {
  const double v = cross(a, b, c);
  return (v > 0) - (v < 0);
}

bool on_segment(const Vec2& a, const Vec2& b, const Vec2& p) {
  return std::min(a.x(), b.x()) <= p.x() && p.x() <= std::max(a.x(), b.x()) && std::min(a.y(), b.y()) <= p.y() &&
         p.y() <= std::max(a.y(), b.y());
}

bool segments_intersect(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  const int o1 = orient_sign(a, b, c), o2 = orient_sign(a, b, d);
  const int o3 = orient_sign(c, d, a), o4 = orient_sign(c, d, b);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_segment(a, b, c)) return true;
  if (o2 == 0 && on_segment(a, b, d)) return true;
  if (o3 == 0 && on_segment(c, d, a)) return true;
  if (o4 == 0 && on_segment(c, d, b)) return true;
  return false;
}

}  // namespace

bool is_simple(std::span<const Vec2> loop) {
  const std::size_t n = loop.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& a = loop[i];
    const Vec2& b = loop[(i + 1) % n];
    for (std::size_t j = i + 1; j < n; ++j) {
      if (j == i + 1 || (i == 0 && j == n - 1)) {
        // adjacent edges share one endpoint; they may only overlap if folded back
        const Vec2& c = loop[j];
        const Vec2& d = loop[(j + 1) % n];
        const Vec2& shared = (j == i + 1) ? b : a;
        const Vec2& other1 = (j == i + 1) ? a : b;
        const Vec2& other2 = (j == i + 1) ? d : c;
        if (orient_sign(shared, other1, other2) == 0 && (other1 - shared).dot(other2 - shared) > 0) return false;
        continue;
      }
      if (segments_intersect(a, b, loop[j], loop[(j + 1) % n])) return false;
    }
  }
  return true;
}

Polygon normalize_loop(Polygon loop) {
  bool changed = true;
  while (changed && loop.size() >= 3) {
    changed = false;
    Polygon out;
    out.reserve(loop.size());
    const std::size_t n = loop.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2& prev = loop[(i + n - 1) % n];
      const Vec2& cur = loop[i];
      const Vec2& next = loop[(i + 1) % n];
      if (cur == next || cross(prev, cur, next) == 0.0) {
        changed = true;
        continue;
      }
      out.push_back(cur);
    }
    loop = std::move(out);
  }
  if (signed_area(loop) < 0) std::reverse(loop.begin(), loop.end());
  return loop;
}

namespace {

void dp_recurse(const Polygon& pts, std::size_t first, std::size_t last, double tol, std::vector<char>& keep) {
  if (last <= first + 1) return;
  double best = -1.0;
  std::size_t idx = first;
  for (std::size_t i = first + 1; i < last; ++i) {
    const double d = segment_distance(pts[i], pts[first], pts[last]);
    if (d > best) {
      best = d;
      idx = i;
    }
  }
  if (best > tol) {
    keep[idx] = 1;
    dp_recurse(pts, first, idx, tol, keep);
    dp_recurse(pts, idx, last, tol, keep);
  }
}

Polygon dp_closed(const Polygon& loop, double tol) {
  const std::size_t n = loop.size();
  // split at vertex 0 and the vertex farthest from it
  std::size_t far = 0;
  double best = -1.0;
  for (std::size_t i = 1; i < n; ++i) {
    const double d = (loop[i] - loop[0]).squaredNorm();
    if (d > best) {
      best = d;
      far = i;
    }
  }
  Polygon unrolled(loop.begin(), loop.end());
  unrolled.push_back(loop[0]);
  std::vector<char> keep(n + 1, 0);
  keep[0] = keep[far] = keep[n] = 1;
  dp_recurse(unrolled, 0, far, tol, keep);
  dp_recurse(unrolled, far, n, tol, keep);
  Polygon out;
  for (std::size_t i = 0; i < n; ++i)
    if (keep[i]) out.push_back(loop[i]);
  return out;
}

}  // namespace

Polygon simplify_loop(const Polygon& loop, double tolerance) {
  if (loop.size() <= 3 || tolerance <= 0) return loop;
  for (double tol = tolerance; tol > tolerance * 1e-3; tol *= 0.5) {
    Polygon out = normalize_loop(dp_closed(loop, tol));
    if (out.size() >= 3 && signed_area(out) > 0 && is_simple(out)) return out;
  }
  return loop;
}

std::vector<std::array<int, 3>> triangulate_polygon(std::span<const Vec2> loop) {
  const int n = static_cast<int>(loop.size());
  std::vector<std::array<int, 3>> tris;
  if (n < 3) return tris;
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (signed_area(loop) < 0) std::reverse(idx.begin(), idx.end());

  auto is_ear = [&](std::size_t i) {
    const std::size_t m = idx.size();
    const int a = idx[(i + m - 1) % m], b = idx[i], c = idx[(i + 1) % m];
    if (cross(loop[a], loop[b], loop[c]) <= 0) return false;
    for (std::size_t j = 0; j < m; ++j) {
      const int v = idx[j];
      if (v == a || v == b || v == c) continue;
      const Vec2& p = loop[v];
      if (p == loop[a] || p == loop[b] || p == loop[c]) continue;
      if (cross(loop[a], loop[b], p) >= 0 && cross(loop[b], loop[c], p) >= 0 && cross(loop[c], loop[a], p) >= 0)
        return false;
    }
    return true;
  };

  std::size_t guard = 0;
  std::size_t i = 0;
  while (idx.size() > 3 && guard < 4 * loop.size() * loop.size() + 16) {
    ++guard;
    const std::size_t m = idx.size();
    if (is_ear(i % m)) {
      const std::size_t k = i % m;
      tris.push_back({idx[(k + m - 1) % m], idx[k], idx[(k + 1) % m]});
      idx.erase(idx.begin() + static_cast<std::ptrdiff_t>(k));
      i = (k == 0) ? 0 : k - 1;
    } else {
      ++i;
      if (i >= 2 * m) {
        // no proper ear (numerically degenerate input); clip the least-bad convex vertex
        std::size_t best = 0;
        double best_area = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < m; ++j) {
          const double a = cross(loop[idx[(j + m - 1) % m]], loop[idx[j]], loop[idx[(j + 1) % m]]);
          if (a > best_area) {
            best_area = a;
            best = j;
          }
        }
        tris.push_back({idx[(best + m - 1) % m], idx[best], idx[(best + 1) % m]});
        idx.erase(idx.begin() + static_cast<std::ptrdiff_t>(best));
        i = 0;
      }
    }
  }
  if (idx.size() == 3) tris.push_back({idx[0], idx[1], idx[2]});
  return tris;
}

double circumradius(const Vec2& a, const Vec2& b, const Vec2& c) {
  const double ab = (b - a).norm(), bc = (c - b).norm(), ca = (a - c).norm();
  const double area2 = std::abs(cross(a, b, c));
  if (area2 == 0.0) return std::numeric_limits<double>::infinity();
  return ab * bc * ca / (2.0 * area2);
}

// ---------------------------------------------------------------------------
// Delaunay (Bowyer-Watson) on an integer lattice so orientation and in-circle
// tests are exact. Coordinates are snapped to [0, 2^24]; the bounding super
// triangle stays within 2^27, which keeps the in-circle determinant in int128.

namespace {

using i64 = long long;
using i128 = __int128;

struct IPoint {
  i64 x, y;
};

i64 orient(const IPoint& a, const IPoint& b, const IPoint& c) {
  return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
}

// > 0 iff d lies strictly inside the circumcircle of counter-clockwise abc
bool in_circle(const IPoint& a, const IPoint& b, const IPoint& c, const IPoint& d) {
  const i128 adx = a.x - d.x, ady = a.y - d.y;
  const i128 bdx = b.x - d.x, bdy = b.y - d.y;
  const i128 cdx = c.x - d.x, cdy = c.y - d.y;
  const i128 det = (adx * adx + ady * ady) * (bdx * cdy - bdy * cdx) +
                   (bdx * bdx + bdy * bdy) * (cdx * ady - cdy * adx) +
                   (cdx * cdx + cdy * cdy) * (adx * bdy - ady * bdx);
  return det > 0;
}

struct Tri {
  std::array<int, 3> v;
  std::array<int, 3> nb;
  bool alive;
};

class BowyerWatson {
 public:
  explicit BowyerWatson(std::vector<IPoint> pts) : pts_(std::move(pts)) {
    const i64 m = i64{1} << 24;
    super_ = static_cast<int>(pts_.size());
    pts_.push_back({-3 * m, -3 * m});
    pts_.push_back({6 * m, -3 * m});
    pts_.push_back({-3 * m, 6 * m});
    tris_.push_back({{super_, super_ + 1, super_ + 2}, {-1, -1, -1}, true});
  }

  void insert(int p) {
    const int start = locate(p);
    // cavity: triangles whose circumcircle strictly contains p, grown from `start`
    cavity_.clear();
    stack_.clear();
    stack_.push_back(start);
    mark(start);
    while (!stack_.empty()) {
      const int t = stack_.back();
      stack_.pop_back();
      cavity_.push_back(t);
      for (int i = 0; i < 3; ++i) {
        const int n = tris_[t].nb[i];
        if (n < 0 || marked(n)) continue;
        const auto& v = tris_[n].v;
        if (in_circle(pts_[v[0]], pts_[v[1]], pts_[v[2]], pts_[p])) {
          mark(n);
          stack_.push_back(n);
        }
      }
    }
    // boundary edges (a,b) with the outside neighbor, counter-clockwise around the cavity
    struct Edge {
      int a, b, outside;
    };
    std::vector<Edge> boundary;
    for (int t : cavity_) {
      for (int i = 0; i < 3; ++i) {
        const int n = tris_[t].nb[i];
        if (n >= 0 && marked(n)) continue;
        boundary.push_back({tris_[t].v[(i + 1) % 3], tris_[t].v[(i + 2) % 3], n});
      }
    }
    for (int t : cavity_) {
      tris_[t].alive = false;
      free_.push_back(t);
    }
    ++epoch_;
    by_start_.clear();
    std::vector<int> created;
    created.reserve(boundary.size());
    for (const Edge& e : boundary) {
      const int t = allocate();
      tris_[t] = {{e.a, e.b, p}, {-1, -1, e.outside}, true};
      if (e.outside >= 0) {
        auto& on = tris_[e.outside];
        for (int i = 0; i < 3; ++i) {
          if (on.v[(i + 1) % 3] == e.b && on.v[(i + 2) % 3] == e.a) on.nb[i] = t;
        }
      }
      by_start_[e.a] = t;
      created.push_back(t);
    }
    for (int t : created) {
      auto& tri = tris_[t];
      // edge (b, p) opposite a: shared with the triangle starting at b
      tri.nb[0] = by_start_.at(tri.v[1]);
      // edge (p, a) opposite b: shared with the triangle ending at a
      const int prev = find_ending_at(tri.v[0], created);
      tri.nb[1] = prev;
    }
    last_ = created.empty() ? last_ : created.front();
  }

  Triangulation finish(int real_count) {
    Triangulation out;
    std::vector<int> remap(tris_.size(), -1);
    for (std::size_t t = 0; t < tris_.size(); ++t) {
      const auto& tri = tris_[t];
      if (!tri.alive) continue;
      if (tri.v[0] >= real_count || tri.v[1] >= real_count || tri.v[2] >= real_count) continue;
      remap[t] = static_cast<int>(out.triangles.size());
      out.triangles.push_back(tri.v);
    }
    for (std::size_t t = 0; t < tris_.size(); ++t) {
      if (remap[t] < 0) continue;
      std::array<int, 3> nb;
      for (int i = 0; i < 3; ++i) nb[i] = tris_[t].nb[i] >= 0 ? remap[tris_[t].nb[i]] : -1;
      out.neighbors.push_back(nb);
    }
    return out;
  }

  const std::vector<IPoint>& points() const { return pts_; }

 private:
  int locate(int p) {
    int t = last_;
    if (t < 0 || !tris_[t].alive) {
      t = 0;
      while (!tris_[t].alive) ++t;
    }
    const IPoint& q = pts_[p];
    std::size_t steps = 0;
    int rot = 0;
    while (true) {
      const auto& tri = tris_[t];
      bool moved = false;
      for (int k = 0; k < 3; ++k) {
        const int i = (k + rot) % 3;
        const IPoint& a = pts_[tri.v[(i + 1) % 3]];
        const IPoint& b = pts_[tri.v[(i + 2) % 3]];
        if (orient(a, b, q) < 0 && tri.nb[i] >= 0) {
          t = tri.nb[i];
          moved = true;
          break;
        }
      }
      rot = (rot + 1) % 3;
      if (!moved) return t;
      if (++steps > 4 * tris_.size() + 64) {
        // fall back to a linear scan
        for (std::size_t s = 0; s < tris_.size(); ++s) {
          const auto& c = tris_[s];
          if (!c.alive) continue;
          if (orient(pts_[c.v[0]], pts_[c.v[1]], q) >= 0 && orient(pts_[c.v[1]], pts_[c.v[2]], q) >= 0 &&
              orient(pts_[c.v[2]], pts_[c.v[0]], q) >= 0)
            return static_cast<int>(s);
        }
        return t;
      }
    }
  }

  int find_ending_at(int a, const std::vector<int>& created) const {
    for (int t : created)
      if (tris_[t].v[1] == a) return t;
    return -1;
  }

  int allocate() {
    if (!free_.empty()) {
      const int t = free_.back();
      free_.pop_back();
      return t;
    }
    tris_.push_back({});
    return static_cast<int>(tris_.size() - 1);
  }

  void mark(int t) {
    if (stamp_.size() < tris_.size()) stamp_.resize(tris_.size() * 2, 0);
    stamp_[t] = epoch_ + 1;
  }
  bool marked(int t) const { return t < static_cast<int>(stamp_.size()) && stamp_[t] == epoch_ + 1; }

  std::vector<IPoint> pts_;
  std::vector<Tri> tris_;
  std::vector<int> free_;
  std::vector<int> cavity_;
  std::vector<int> stack_;
  std::vector<unsigned> stamp_;
  unsigned epoch_ = 0;
  std::unordered_map<int, int> by_start_;
  int super_ = 0;
  int last_ = 0;
};

// Adds triangles over concave notches of the boundary until the triangulated
// region is the convex hull. Needed because a finite super triangle can drop
// thin hull slivers.
void complete_hull(Triangulation& tr, const std::vector<IPoint>& pts) {
  while (true) {
    // boundary half-edges a->b (region on the left)
    std::unordered_map<int, std::pair<int, int>> next_of;  // a -> (b, triangle)
    for (std::size_t t = 0; t < tr.triangles.size(); ++t)
      for (int i = 0; i < 3; ++i)
        if (tr.neighbors[t][i] < 0)
          next_of[tr.triangles[t][(i + 1) % 3]] = {tr.triangles[t][(i + 2) % 3], static_cast<int>(t)};
    bool added = false;
    for (auto& [a, bt] : next_of) {
      const int b = bt.first;
      auto it = next_of.find(b);
      if (it == next_of.end()) continue;
      const int c = it->second.first;
      if (c == a) continue;
      if (orient(pts[a], pts[b], pts[c]) >= 0) continue;
      // reflex at b: fill triangle (a, c, b)
      const int t_ab = bt.second;
      const int t_bc = it->second.second;
      const int nt = static_cast<int>(tr.triangles.size());
      tr.triangles.push_back({a, c, b});
      // opposite a: edge (c,b) = t_bc ; opposite c: edge (b,a) = t_ab ; opposite b: edge (a,c) = none
      tr.neighbors.push_back({t_bc, t_ab, -1});
      for (int i = 0; i < 3; ++i) {
        auto& tri = tr.triangles[t_ab];
        if (tri[(i + 1) % 3] == a && tri[(i + 2) % 3] == b) tr.neighbors[t_ab][i] = nt;
      }
      for (int i = 0; i < 3; ++i) {
        auto& tri = tr.triangles[t_bc];
        if (tri[(i + 1) % 3] == b && tri[(i + 2) % 3] == c) tr.neighbors[t_bc][i] = nt;
      }
      added = true;
      break;  // boundary map is stale now
    }
    if (!added) return;
  }
}

}  // namespace

Triangulation delaunay(std::span<const Vec2> points) {
  Triangulation empty;
  const std::size_t n = points.size();
  if (n < 3) return empty;
  Vec2 lo = points[0], hi = points[0];
  for (const Vec2& p : points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double extent = std::max(hi.x() - lo.x(), hi.y() - lo.y());
  if (!(extent > 0)) return empty;
  const double scale = static_cast<double>((i64{1} << 24) - 1) / extent;

  std::vector<IPoint> snapped(n);
  for (std::size_t i = 0; i < n; ++i)
    snapped[i] = {std::llround((points[i].x() - lo.x()) * scale), std::llround((points[i].y() - lo.y()) * scale)};

  // dedupe and order along a coarse serpentine grid so the walk stays short
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  const i64 cells = std::max<i64>(1, static_cast<i64>(std::sqrt(static_cast<double>(n) / 4.0)));
  const i64 cell = ((i64{1} << 24) + cells - 1) / cells;
  auto key = [&](int i) {
    const i64 row = snapped[i].y / cell;
    const i64 col = snapped[i].x / cell;
    return std::pair<i64, i64>(row, (row % 2 == 0) ? col : -col);
  };
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const auto ka = key(a), kb = key(b);
    if (ka != kb) return ka < kb;
    if (snapped[a].x != snapped[b].x) return snapped[a].x < snapped[b].x;
    if (snapped[a].y != snapped[b].y) return snapped[a].y < snapped[b].y;
    return a < b;
  });
  std::vector<char> duplicate(n, 0);
  {
    std::vector<int> by_coord(order);
    std::sort(by_coord.begin(), by_coord.end(), [&](int a, int b) {
      if (snapped[a].x != snapped[b].x) return snapped[a].x < snapped[b].x;
      if (snapped[a].y != snapped[b].y) return snapped[a].y < snapped[b].y;
      return a < b;
    });
    for (std::size_t i = 1; i < by_coord.size(); ++i) {
      const auto& p = snapped[by_coord[i]];
      const auto& q = snapped[by_coord[i - 1]];
      if (p.x == q.x && p.y == q.y) duplicate[by_coord[i]] = 1;
    }
  }

  BowyerWatson bw(snapped);
  for (int i : order)
    if (!duplicate[i]) bw.insert(i);
  Triangulation tr = bw.finish(static_cast<int>(n));
  complete_hull(tr, bw.points());
  return tr;
}

}  // namespace citygo::geo2d
