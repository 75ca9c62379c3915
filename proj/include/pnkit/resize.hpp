#pragma once

#include <pnkit/image.hpp>

namespace pnkit {

/// Bilinear resize with center-aligned sampling: output pixel x maps to
/// source coordinate (x+0.5)*src/dst - 0.5, clamped to the image. Resizing
/// to the source dimensions is pixel-identical.
RgbImage resize_image(const RgbImage& img, int target_w, int target_h);

GrayImage resize_gray(const GrayImage& img, int target_w, int target_h);

}  // namespace pnkit
