#include <pnkit/resize.hpp>

#include <algorithm>
#include <cmath>

namespace pnkit {

namespace {

struct Lerp {
    int lo;
    int hi;
    double frac;
};

Lerp source_coord(int dst, int dst_size, int src_size) {
    double s = (dst + 0.5) * static_cast<double>(src_size) / dst_size - 0.5;
    if (s < 0.0) s = 0.0;
    const double last = src_size - 1;
    if (s > last) s = last;
    Lerp l;
    l.lo = static_cast<int>(std::floor(s));
    l.hi = std::min(l.lo + 1, src_size - 1);
    l.frac = s - l.lo;
    return l;
}

}  // namespace

RgbImage resize_image(const RgbImage& img, int target_w, int target_h) {
    if (target_w < 1 || target_h < 1) raise(Errc::bad_config, "resize_image: target dims must be >= 1");
    RgbImage out(target_w, target_h);
    for (int y = 0; y < target_h; ++y) {
        const Lerp ly = source_coord(y, target_h, img.height);
        for (int x = 0; x < target_w; ++x) {
            const Lerp lx = source_coord(x, target_w, img.width);
            const std::uint8_t* p00 = img.pixel(lx.lo, ly.lo);
            const std::uint8_t* p01 = img.pixel(lx.hi, ly.lo);
            const std::uint8_t* p10 = img.pixel(lx.lo, ly.hi);
            const std::uint8_t* p11 = img.pixel(lx.hi, ly.hi);
            std::uint8_t* dst = out.pixel(x, y);
            for (int c = 0; c < 3; ++c) {
                const double top = (1.0 - lx.frac) * p00[c] + lx.frac * p01[c];
                const double bot = (1.0 - lx.frac) * p10[c] + lx.frac * p11[c];
                const double v = (1.0 - ly.frac) * top + ly.frac * bot;
                dst[c] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
            }
        }
    }
    return out;
}

GrayImage resize_gray(const GrayImage& img, int target_w, int target_h) {
    if (target_w < 1 || target_h < 1) raise(Errc::bad_config, "resize_gray: target dims must be >= 1");
    GrayImage out(target_w, target_h);
    for (int y = 0; y < target_h; ++y) {
        const Lerp ly = source_coord(y, target_h, img.height);
        for (int x = 0; x < target_w; ++x) {
            const Lerp lx = source_coord(x, target_w, img.width);
            const double top = (1.0 - lx.frac) * img.at(lx.lo, ly.lo) + lx.frac * img.at(lx.hi, ly.lo);
            const double bot = (1.0 - lx.frac) * img.at(lx.lo, ly.hi) + lx.frac * img.at(lx.hi, ly.hi);
            out.at(x, y) = (1.0 - ly.frac) * top + ly.frac * bot;
        }
    }
    return out;
}

}  // namespace pnkit
