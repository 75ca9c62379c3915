#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <pnkit/error.hpp>

namespace pnkit {

/// 8-bit RGB raster, row-major interleaved triples.
struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;  // width*height*3

    RgbImage() = default;
    RgbImage(int w, int h, std::uint8_t fill = 0)
        : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, fill) {}

    std::uint8_t* pixel(int x, int y) {
        return data.data() + (static_cast<std::size_t>(y) * width + x) * 3;
    }
    const std::uint8_t* pixel(int x, int y) const {
        return data.data() + (static_cast<std::size_t>(y) * width + x) * 3;
    }
};

/// Double-precision raster with 1 or 3 channel-planar channels. Plane c
/// occupies data[c*width*height .. (c+1)*width*height).
struct PlanarImage {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<double> data;

    PlanarImage() = default;
    PlanarImage(int w, int h, int c)
        : width(w), height(h), channels(c),
          data(static_cast<std::size_t>(w) * h * c, 0.0) {}

    std::size_t plane_size() const { return static_cast<std::size_t>(width) * height; }
    double* plane(int c) { return data.data() + c * plane_size(); }
    const double* plane(int c) const { return data.data() + c * plane_size(); }

    double& at(int c, int x, int y) {
        return data[c * plane_size() + static_cast<std::size_t>(y) * width + x];
    }
    double at(int c, int x, int y) const {
        return data[c * plane_size() + static_cast<std::size_t>(y) * width + x];
    }
};

/// Single-channel double raster with values in [0, 1].
struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<double> data;

    GrayImage() = default;
    GrayImage(int w, int h, double fill = 0.0)
        : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

    double& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
    double at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
};

/// Per-pixel boolean raster stored as 0/1 bytes.
struct BinaryImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;

    BinaryImage() = default;
    BinaryImage(int w, int h, std::uint8_t fill = 0)
        : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

    std::uint8_t& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }

    std::size_t count_on() const {
        std::size_t n = 0;
        for (std::uint8_t v : data) n += (v != 0);
        return n;
    }
};

/// Per-channel multiplicative weights applied after color conversion.
/// Default keeps only the first (L*) plane.
struct ChannelWeights {
    std::array<double, 3> w{1.0, 0.0, 0.0};
};

struct Rgb8 {
    std::uint8_t r = 255, g = 255, b = 255;
};

inline void require_same_dims(int w1, int h1, int w2, int h2, const char* what) {
    if (w1 != w2 || h1 != h2) raise(Errc::dim_mismatch, std::string(what) + ": image dimensions differ");
}

/// Channel c of the output is w[c] times channel c of the input.
PlanarImage apply_channel_weights(const PlanarImage& img, const ChannelWeights& w);

}  // namespace pnkit
