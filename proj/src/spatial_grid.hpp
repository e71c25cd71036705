#pragma once

// Uniform hash grid for fixed-radius and nearest-neighbor queries in 2D/3D.

#include "citygo/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <unordered_map>
#include <vector>

namespace citygo::detail {

template <int Dim>
class PointGrid {
 public:
  using Vec = Eigen::Matrix<double, Dim, 1>;

  PointGrid(std::span<const Vec> points, double cell) : points_(points), cell_(cell) {
    if (!(cell_ > 0)) cell_ = 1.0;
    std::vector<std::pair<long long, int>> keyed(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
      const auto c = cell_of(points[i]);
      keyed[i] = {key(c), static_cast<int>(i)};
      for (int d = 0; d < Dim; ++d) {
        lo_[d] = std::min(lo_[d], c[d]);
        hi_[d] = std::max(hi_[d], c[d]);
      }
    }
    std::sort(keyed.begin(), keyed.end());
    order_.resize(keyed.size());
    for (std::size_t i = 0; i < keyed.size(); ++i) {
      order_[i] = keyed[i].second;
      if (i == 0 || keyed[i].first != keyed[i - 1].first) ranges_[keyed[i].first] = {i, i};
      ranges_[keyed[i].first].second = i + 1;
    }
  }

  /// Calls f(index, squared distance) for every point within r of q.
  template <class F>
  void for_each_within(const Vec& q, double r, F&& f) const {
    const double r2 = r * r;
    const auto c = cell_of(q);
    const long long span = static_cast<long long>(std::ceil(r / cell_));
    std::array<long long, Dim> cur;
    visit(c, span, 0, cur, [&](const std::array<long long, Dim>& cc) {
      auto it = ranges_.find(key(cc));
      if (it == ranges_.end()) return;
      for (std::size_t k = it->second.first; k < it->second.second; ++k) {
        const int i = order_[k];
        const double d2 = (points_[i] - q).squaredNorm();
        if (d2 <= r2) f(i, d2);
      }
    });
  }

  /// Index of the nearest point other than `exclude`, or -1 when empty.
  int nearest(const Vec& q, double* out_dist = nullptr, int exclude = -1) const {
    int best = -1;
    double best_d2 = std::numeric_limits<double>::infinity();
    const auto c = cell_of(q);
    long long max_ring = 0;
    for (int d = 0; d < Dim; ++d)
      max_ring = std::max({max_ring, std::abs(c[d] - lo_[d]), std::abs(c[d] - hi_[d])});
    for (long long ring = 0; ring <= max_ring; ++ring) {
      std::array<long long, Dim> cur;
      visit(c, ring, 0, cur, [&](const std::array<long long, Dim>& cc) {
        long long cheb = 0;
        for (int d = 0; d < Dim; ++d) cheb = std::max(cheb, std::abs(cc[d] - c[d]));
        if (cheb != ring) return;
        auto it = ranges_.find(key(cc));
        if (it == ranges_.end()) return;
        for (std::size_t k = it->second.first; k < it->second.second; ++k) {
          const int i = order_[k];
          if (i == exclude) continue;
          const double d2 = (points_[i] - q).squaredNorm();
          if (d2 < best_d2 || (d2 == best_d2 && i < best)) {
            best_d2 = d2;
            best = i;
          }
        }
      });
      if (best >= 0 && std::sqrt(best_d2) <= static_cast<double>(ring) * cell_) break;
    }
    if (out_dist) *out_dist = std::sqrt(best_d2);
    return best;
  }

 private:
  std::array<long long, Dim> cell_of(const Vec& p) const {
    std::array<long long, Dim> c;
    for (int d = 0; d < Dim; ++d) c[d] = static_cast<long long>(std::floor(p[d] / cell_));
    return c;
  }

  static long long key(const std::array<long long, Dim>& c) {
    unsigned long long h = 1469598103934665603ull;
    for (int d = 0; d < Dim; ++d) {
      h ^= static_cast<unsigned long long>(c[d]) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    }
    return static_cast<long long>(h);
  }

  template <class F>
  static void visit(const std::array<long long, Dim>& c, long long span, int d, std::array<long long, Dim>& cur,
                    F&& f) {
    if (d == Dim) {
      f(cur);
      return;
    }
    for (long long o = -span; o <= span; ++o) {
      cur[d] = c[d] + o;
      visit(c, span, d + 1, cur, f);
    }
  }

  std::span<const Vec> points_;
  double cell_;
  std::vector<int> order_;
  std::unordered_map<long long, std::pair<std::size_t, std::size_t>> ranges_;
  std::array<long long, Dim> lo_ = filled(std::numeric_limits<long long>::max());
  std::array<long long, Dim> hi_ = filled(std::numeric_limits<long long>::min());

  static std::array<long long, Dim> filled(long long v) {
    std::array<long long, Dim> a;
    a.fill(v);
    return a;
  }
};

}  // namespace citygo::detail
