#pragma once

#include <pnkit/image.hpp>

namespace pnkit {

/// sRGB (D65) to CIE 1976 L*a*b*. L* in [0,100], a*/b* signed.
PlanarImage rgb_to_lab(const RgbImage& img);

/// RGB to HSV, hexcone model. H scaled from degrees into [0,1); S,V in [0,1].
PlanarImage rgb_to_hsv(const RgbImage& img);

/// Single-pixel conversions, shared with the rasters above.
void srgb_pixel_to_lab(std::uint8_t r, std::uint8_t g, std::uint8_t b,
                       double& L, double& a, double& bb);
void srgb_pixel_to_hsv(std::uint8_t r, std::uint8_t g, std::uint8_t b,
                       double& h, double& s, double& v);

/// Rec.601 luma in [0,1]; the grayscale used by the bag-of-features path.
GrayImage rgb_to_luma(const RgbImage& img);

}  // namespace pnkit
