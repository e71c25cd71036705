#include "citygo/residual.hpp"

#include <algorithm>
#include <cmath>

namespace citygo {

ColorResidualMap build_crm(const CameraView& view, const MeshGBuffer& g, int view_id, ResidualReduce reduce) {
  if (!view.image) throw Error("crm: view " + std::to_string(view_id) + " has no ground-truth image");
  const Raster& gt = *view.image;
  if (gt.width != g.width || gt.height != g.height || gt.channels != 3)
    throw Error("crm: ground truth and g-buffer sizes differ");
  ColorResidualMap crm;
  crm.view_id = view_id;
  crm.residual = Raster(g.width, g.height, 1);
  crm.mask = Raster(g.width, g.height, 1);
  for (int y = 0; y < g.height; ++y)
    for (int x = 0; x < g.width; ++x) {
      if (!g.covered(static_cast<std::size_t>(y) * g.width + x)) continue;
      const Vec3 d = (gt.rgb(x, y) - g.color.rgb(x, y)).cwiseAbs();
      crm.mask.at(x, y) = 1.0;
      crm.residual.at(x, y) = std::clamp(reduce == ResidualReduce::Mean ? d.mean() : d.maxCoeff(), 0.0, 1.0);
    }
  return crm;
}

std::vector<double> score_view(std::span<const Gaussian3D> gaussians, const CameraView& view,
                               const ColorResidualMap& crm, const RenderSettings& s) {
  if (crm.residual.width != view.width || crm.residual.height != view.height)
    throw Error("score: residual map size does not match the view");
  std::vector<double> score(gaussians.size(), 0.0);
  const SplatList splats = splat_gaussians(gaussians, view, s);
  const MeshGBuffer none = empty_gbuffer(view, s);
  visit_contributions(none, splats, s, false, [&](std::size_t pixel, int pos, double weight) {
    const double r = crm.residual.data[pixel];
    double& e = score[splats.splats[pos].index];
    e = std::max(e, r * weight);
  });
  return score;
}

void score_gaussians(std::span<const Gaussian3D> gaussians, const CameraView& view, const ColorResidualMap& crm,
                     const RenderSettings& s, GaussianScoreTable& table) {
  if (table.score.size() != gaussians.size()) throw Error("score: table size does not match the Gaussians");
  const std::vector<double> v = score_view(gaussians, view, crm, s);
  for (std::size_t k = 0; k < v.size(); ++k) table.score[k] = std::max(table.score[k], v[k]);
}

std::vector<std::size_t> select_residuals(const GaussianScoreTable& table, double threshold) {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < table.score.size(); ++k)
    if (table.score[k] > threshold) out.push_back(k);
  return out;
}

}  // namespace citygo
