#include <pnkit/color.hpp>

#include <algorithm>
#include <cmath>

namespace pnkit {

namespace {

// sRGB -> XYZ matrix, D65 illuminant.
constexpr double M[3][3] = {
    {0.4124564, 0.3575761, 0.1804375},
    {0.2126729, 0.7151522, 0.0721750},
    {0.0193339, 0.1191920, 0.9503041},
};

// White point taken as the transform of (1,1,1) so that pure white lands
// exactly on L*=100, a*=b*=0.
constexpr double WHITE_X = M[0][0] + M[0][1] + M[0][2];
constexpr double WHITE_Y = M[1][0] + M[1][1] + M[1][2];
constexpr double WHITE_Z = M[2][0] + M[2][1] + M[2][2];

inline double srgb_to_linear(double c) {
    return (c <= 0.04045) ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

// CIE f() with the 6/29 linear segment.
inline double lab_f(double t) {
    constexpr double delta3 = (6.0 / 29.0) * (6.0 / 29.0) * (6.0 / 29.0);
    if (t > delta3) return std::cbrt(t);
    constexpr double k = (29.0 / 6.0) * (29.0 / 6.0) / 3.0;
    return k * t + 4.0 / 29.0;
}

}  // namespace

void srgb_pixel_to_lab(std::uint8_t r8, std::uint8_t g8, std::uint8_t b8,
                       double& L, double& a, double& bb) {
    const double r = srgb_to_linear(r8 / 255.0);
    const double g = srgb_to_linear(g8 / 255.0);
    const double b = srgb_to_linear(b8 / 255.0);

    const double x = M[0][0] * r + M[0][1] * g + M[0][2] * b;
    const double y = M[1][0] * r + M[1][1] * g + M[1][2] * b;
    const double z = M[2][0] * r + M[2][1] * g + M[2][2] * b;

    const double fx = lab_f(x / WHITE_X);
    const double fy = lab_f(y / WHITE_Y);
    const double fz = lab_f(z / WHITE_Z);

    L = 116.0 * fy - 16.0;
    a = 500.0 * (fx - fy);
    bb = 200.0 * (fy - fz);
}

void srgb_pixel_to_hsv(std::uint8_t r8, std::uint8_t g8, std::uint8_t b8,
                       double& h, double& s, double& v) {
    const double r = r8 / 255.0, g = g8 / 255.0, b = b8 / 255.0;
    const double mx = std::max({r, g, b});
    const double mn = std::min({r, g, b});
    const double d = mx - mn;

    v = mx;
    s = (mx > 0.0) ? d / mx : 0.0;
    if (d <= 0.0) {
        h = 0.0;
        return;
    }
    double hh;
    if (mx == r)
        hh = (g - b) / d;
    else if (mx == g)
        hh = 2.0 + (b - r) / d;
    else
        hh = 4.0 + (r - g) / d;
    hh /= 6.0;
    if (hh < 0.0) hh += 1.0;
    if (hh >= 1.0) hh -= 1.0;
    h = hh;
}

PlanarImage rgb_to_lab(const RgbImage& img) {
    PlanarImage out(img.width, img.height, 3);
    const std::size_t n = out.plane_size();
    double* L = out.plane(0);
    double* a = out.plane(1);
    double* b = out.plane(2);
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint8_t* p = img.data.data() + i * 3;
        srgb_pixel_to_lab(p[0], p[1], p[2], L[i], a[i], b[i]);
    }
    return out;
}

PlanarImage rgb_to_hsv(const RgbImage& img) {
    PlanarImage out(img.width, img.height, 3);
    const std::size_t n = out.plane_size();
    double* h = out.plane(0);
    double* s = out.plane(1);
    double* v = out.plane(2);
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint8_t* p = img.data.data() + i * 3;
        srgb_pixel_to_hsv(p[0], p[1], p[2], h[i], s[i], v[i]);
    }
    return out;
}

GrayImage rgb_to_luma(const RgbImage& img) {
    GrayImage out(img.width, img.height);
    const std::size_t n = out.data.size();
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint8_t* p = img.data.data() + i * 3;
        out.data[i] = (0.2989 * p[0] + 0.5870 * p[1] + 0.1140 * p[2]) / 255.0;
    }
    return out;
}

PlanarImage apply_channel_weights(const PlanarImage& img, const ChannelWeights& w) {
    if (img.channels != 3) raise(Errc::shape_mismatch, "apply_channel_weights: need 3 channels");
    PlanarImage out(img.width, img.height, 3);
    const std::size_t n = out.plane_size();
    for (int c = 0; c < 3; ++c) {
        const double wc = w.w[static_cast<std::size_t>(c)];
        const double* src = img.plane(c);
        double* dst = out.plane(c);
        for (std::size_t i = 0; i < n; ++i) dst[i] = wc * src[i];
    }
    return out;
}

}  // namespace pnkit
