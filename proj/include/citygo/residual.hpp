#pragma once

// Color residual maps and selection of the Gaussians that explain where the
// textured proxy disagrees with the photographs.

#include "citygo/core.hpp"
#include "citygo/render.hpp"

#include <span>
#include <vector>

namespace citygo {

enum class ResidualReduce { Mean, Max };

struct ColorResidualMap {
  int view_id = 0;
  Raster residual;  // 1 channel, 0 outside the mask
  Raster mask;      // 1 where a building covers the pixel
};

/// `view.image` must hold the ground truth.
ColorResidualMap build_crm(const CameraView& view, const MeshGBuffer& gbuffer, int view_id = 0,
                           ResidualReduce reduce = ResidualReduce::Mean);

struct GaussianScoreTable {
  std::vector<double> score;  // running max over processed views

  explicit GaussianScoreTable(std::size_t n = 0) : score(n, 0.0) {}
};

/// Max over pixels of c_res * alpha_k * T_k, with T from the Gaussians alone;
/// merged into `table` by max.
void score_gaussians(std::span<const Gaussian3D> gaussians, const CameraView& view, const ColorResidualMap& crm,
                     const RenderSettings& s, GaussianScoreTable& table);

/// Per-Gaussian score of a single view.
std::vector<double> score_view(std::span<const Gaussian3D> gaussians, const CameraView& view,
                               const ColorResidualMap& crm, const RenderSettings& s);

/// Indices k with score > threshold, ascending.
std::vector<std::size_t> select_residuals(const GaussianScoreTable& table, double threshold);

template <class T>
std::vector<T> gather(std::span<const T> items, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(items[i]);
  return out;
}

}  // namespace citygo
