#pragma once

// Photometric losses on RGB rasters with analytic gradients.

#include "citygo/core.hpp"

namespace citygo {

/// Mean absolute difference; `grad` (optional) receives dL/d render.
double l1_loss(const Raster& render, const Raster& target, Raster* grad = nullptr);

/// Mean SSIM over an 11x11 Gaussian window (sigma 1.5) with per-pixel
/// normalization at the borders.
double ssim(const Raster& a, const Raster& b);

/// 1 - SSIM; `grad` (optional) receives dL/d render.
double dssim_loss(const Raster& render, const Raster& target, Raster* grad = nullptr);

/// (1 - w) L1 + w D-SSIM.
double photometric_loss(const Raster& render, const Raster& target, double ssim_weight, Raster* grad = nullptr);

}  // namespace citygo
