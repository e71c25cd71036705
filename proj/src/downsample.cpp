#include "citygo/downsample.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace citygo {

ImportanceTable accumulate_importance(std::span<const Gaussian3D> gaussians, std::span<const CameraView> views,
                                      const RenderSettings& s) {
  ImportanceTable t;
  t.importance.assign(gaussians.size(), 0.0);
  for (const CameraView& view : views) {
    const SplatList splats = splat_gaussians(gaussians, view, s);
    const MeshGBuffer none = empty_gbuffer(view, s);
    visit_contributions(none, splats, s, false,
                        [&](std::size_t, int pos, double w) { t.importance[splats.splats[pos].index] += w; });
  }
  normalize_importance(t);
  return t;
}

void normalize_importance(ImportanceTable& t) {
  const double total = std::accumulate(t.importance.begin(), t.importance.end(), 0.0);
  t.probability.assign(t.importance.size(), 0.0);
  if (total > 0)
    for (std::size_t k = 0; k < t.importance.size(); ++k) t.probability[k] = t.importance[k] / total;
}

namespace {

std::vector<std::size_t> permutation(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng() % i]);
  return p;
}

double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

std::vector<std::size_t> sample_surrounding(const ImportanceTable& table, double fraction, std::uint64_t seed) {
  if (!(fraction > 0 && fraction <= 1)) throw Error("downsample: fraction must be in (0, 1]");
  const std::size_t K = table.importance.size();
  std::size_t positive = 0;
  for (double v : table.importance) positive += v > 0;
  if (positive == 0) throw Error("downsample: all importances are zero");
  const std::size_t n = std::min<std::size_t>(positive, static_cast<std::size_t>(std::llround(fraction * K)));
  if (n == 0) throw Error("downsample: fraction selects no Gaussian");

  // inclusion probabilities n * P_k, capped at 1 with the excess redistributed
  std::vector<double> pi(K, 0.0);
  std::vector<std::uint8_t> capped(K, 0);
  for (;;) {
    double free_mass = 0;
    std::size_t fixed = 0;
    for (std::size_t k = 0; k < K; ++k) {
      if (capped[k]) ++fixed;
      else free_mass += table.importance[k];
    }
    bool changed = false;
    const double scale = static_cast<double>(n - fixed) / free_mass;
    for (std::size_t k = 0; k < K; ++k) {
      if (capped[k]) {
        pi[k] = 1.0;
        continue;
      }
      pi[k] = table.importance[k] * scale;
      if (pi[k] >= 1.0) {
        capped[k] = 1;
        changed = true;
      }
    }
    if (!changed) break;
  }

  std::mt19937_64 rng(seed);
  const std::vector<std::size_t> order = permutation(K, rng);
  const double u = unit(rng);
  std::vector<std::size_t> out;
  out.reserve(n);
  double cum = 0;
  std::size_t next = 0;  // next threshold is u + next
  for (std::size_t i = 0; i < K && out.size() < n; ++i) {
    const std::size_t k = order[i];
    if (pi[k] <= 0) continue;
    cum += pi[k];
    if (cum > u + static_cast<double>(next)) {
      out.push_back(k);
      ++next;
    }
  }
  // rounding can leave the last threshold just past the total; take the last positive unselected items
  for (std::size_t i = K; i-- > 0 && out.size() < n;) {
    const std::size_t k = order[i];
    if (pi[k] > 0 && std::find(out.begin(), out.end(), k) == out.end()) out.push_back(k);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::size_t> sample_uniform(std::size_t count, double fraction, std::uint64_t seed) {
  if (!(fraction > 0 && fraction <= 1)) throw Error("downsample: fraction must be in (0, 1]");
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> p = permutation(count, rng);
  p.resize(std::min(count, static_cast<std::size_t>(std::llround(fraction * count))));
  std::sort(p.begin(), p.end());
  return p;
}

}  // namespace citygo
