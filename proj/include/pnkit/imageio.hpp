#pragma once

#include <string>

#include <pnkit/image.hpp>

namespace pnkit {

/// Decode a PNG, JPEG or BMP file into 8-bit RGB. Alpha is dropped,
/// palette/gray inputs are expanded. Format is sniffed from magic bytes.
RgbImage load_image(const std::string& path);

/// 8-bit PNG writers. Gray values are scaled from [0,1]; binary as 0/255.
void save_png(const std::string& path, const RgbImage& img);
void save_png(const std::string& path, const GrayImage& img);
void save_png(const std::string& path, const BinaryImage& img);

/// In-memory PNG encode of an RGB raster (used for byte-level comparisons).
std::vector<std::uint8_t> encode_png(const RgbImage& img);

}  // namespace pnkit
