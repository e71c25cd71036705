#pragma once

// Importance-weighted reduction of the surrounding Gaussians.

#include "citygo/core.hpp"
#include "citygo/render.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace citygo {

struct ImportanceTable {
  std::vector<double> importance;   // I_k, summed blending weights
  std::vector<double> probability;  // P_k = I_k / sum I
};

/// Sums T_k alpha_k of every Gaussian over every pixel of every view.
ImportanceTable accumulate_importance(std::span<const Gaussian3D> gaussians, std::span<const CameraView> views,
                                      const RenderSettings& s = {});

/// Fills `probability` from `importance`.
void normalize_importance(ImportanceTable& t);

/// Systematic PPS sampling without replacement over a seeded permutation:
/// round(fraction * K) indices (at most the number with positive
/// importance), inclusion probability proportional to P_k capped at 1.
/// Returned ascending.
std::vector<std::size_t> sample_surrounding(const ImportanceTable& table, double fraction, std::uint64_t seed);

/// Uniform sampling of the same size, for comparisons.
std::vector<std::size_t> sample_uniform(std::size_t count, double fraction, std::uint64_t seed);

}  // namespace citygo
