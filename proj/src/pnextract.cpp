#include <pnkit/pnextract.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <vector>

#include <pnkit/color.hpp>
#include <pnkit/imageio.hpp>
#include <pnkit/kernels.hpp>
#include <pnkit/resize.hpp>

namespace pnkit::pnx {

namespace {

inline int value_bin(double v, int bins) {
    int b = static_cast<int>(v * bins);
    if (b < 0) b = 0;
    if (b >= bins) b = bins - 1;
    return b;
}

// --- 3x3 symmetric eigen-decomposition (cyclic Jacobi) ----------------------

void jacobi_eigen3(double a[3][3], double eigval[3], double eigvec[3][3]) {
    double v[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = std::abs(a[0][1]) + std::abs(a[0][2]) + std::abs(a[1][2]);
        if (off < 1e-15) break;
        for (int p = 0; p < 2; ++p) {
            for (int q = p + 1; q < 3; ++q) {
                if (std::abs(a[p][q]) < 1e-300) continue;
                const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < 3; ++k) {
                    const double akp = a[k][p], akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (int k = 0; k < 3; ++k) {
                    const double apk = a[p][k], aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for (int k = 0; k < 3; ++k) {
                    const double vkp = v[k][p], vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    for (int i = 0; i < 3; ++i) {
        eigval[i] = a[i][i];
        for (int k = 0; k < 3; ++k) eigvec[k][i] = v[k][i];
    }
}

}  // namespace

void PipelineConfig::validate() const {
    if (resize_width < 1 || resize_height < 1)
        raise(Errc::bad_config, "resize dimensions must be >= 1");
    if (channel_weights.w[0] == 0.0 && channel_weights.w[1] == 0.0 && channel_weights.w[2] == 0.0)
        raise(Errc::bad_config, "channel weights must have a non-zero component");
    if (clahe_tiles_x < 1 || clahe_tiles_y < 1) raise(Errc::bad_config, "CLAHE tile grid must be >= 1");
    if (clahe_bins < 2) raise(Errc::bad_config, "CLAHE bins must be >= 2");
    if (clahe_clip < 0.0 || clahe_clip > 1.0) raise(Errc::bad_config, "CLAHE clip must be in [0,1]");
    if (gaussian_sigma <= 0.0) raise(Errc::bad_config, "gaussian sigma must be > 0");
    if (threshold_offset < 0.0 || threshold_offset > 0.05)
        raise(Errc::bad_config, "threshold offset must be in [0, 0.05]");
    if (min_component_px < 1) raise(Errc::bad_config, "min component size must be >= 1");
    if (connectivity != 4 && connectivity != 8) raise(Errc::bad_config, "connectivity must be 4 or 8");
}

PcaGray pca_grayscale(const PlanarImage& img) {
    if (img.channels != 3) raise(Errc::shape_mismatch, "pca_grayscale: need 3 channels");
    const std::size_t n = img.plane_size();
    if (n < 2) raise(Errc::empty_input, "pca_grayscale: need at least 2 pixels");

    double mean[3];
    for (int c = 0; c < 3; ++c) {
        const double* p = img.plane(c);
        mean[c] = std::accumulate(p, p + n, 0.0) / static_cast<double>(n);
    }

    // Sample covariance (N-1 normalization).
    double cov[3][3] = {{0}};
    for (std::size_t i = 0; i < n; ++i) {
        const double d0 = img.plane(0)[i] - mean[0];
        const double d1 = img.plane(1)[i] - mean[1];
        const double d2 = img.plane(2)[i] - mean[2];
        cov[0][0] += d0 * d0;
        cov[0][1] += d0 * d1;
        cov[0][2] += d0 * d2;
        cov[1][1] += d1 * d1;
        cov[1][2] += d1 * d2;
        cov[2][2] += d2 * d2;
    }
    const double norm = 1.0 / static_cast<double>(n - 1);
    for (int r = 0; r < 3; ++r)
        for (int c = r; c < 3; ++c) {
            cov[r][c] *= norm;
            cov[c][r] = cov[r][c];
        }

    double eigval[3];
    double eigvec[3][3];
    jacobi_eigen3(cov, eigval, eigvec);

    // Sort by descending eigenvalue; clamp tiny negatives from roundoff.
    int order[3] = {0, 1, 2};
    std::sort(order, order + 3, [&](int a, int b) { return eigval[a] > eigval[b]; });

    PcaGray out;
    out.pca.scores = PlanarImage(img.width, img.height, 3);
    for (int k = 0; k < 3; ++k) {
        const int src = order[k];
        out.pca.eigenvalues[static_cast<std::size_t>(k)] = std::max(0.0, eigval[src]);
        double col[3] = {eigvec[0][src], eigvec[1][src], eigvec[2][src]};
        // Sign convention: largest-magnitude coefficient positive.
        int imax = 0;
        for (int c = 1; c < 3; ++c)
            if (std::abs(col[c]) > std::abs(col[imax])) imax = c;
        if (col[imax] < 0.0)
            for (double& x : col) x = -x;
        for (int c = 0; c < 3; ++c)
            out.pca.coefficients[static_cast<std::size_t>(c)][static_cast<std::size_t>(k)] = col[c];
        double* sc = out.pca.scores.plane(k);
        for (std::size_t i = 0; i < n; ++i)
            sc[i] = col[0] * (img.plane(0)[i] - mean[0]) + col[1] * (img.plane(1)[i] - mean[1]) +
                    col[2] * (img.plane(2)[i] - mean[2]);
    }

    const double* s0 = out.pca.scores.plane(0);
    const auto [mn_it, mx_it] = std::minmax_element(s0, s0 + n);
    const double mn = *mn_it, mx = *mx_it;
    out.gray = GrayImage(img.width, img.height);
    if (mx - mn <= 0.0) {
        out.degenerate = true;  // constant image; keep the all-zero grayscale
        return out;
    }
    const double inv = 1.0 / (mx - mn);
    for (std::size_t i = 0; i < n; ++i) out.gray.data[i] = (s0[i] - mn) * inv;
    return out;
}

// --- histogram equalization --------------------------------------------------

namespace {

// Clip a histogram at `limit` and spread the excess over bins with headroom.
// limit >= ceil(total/bins) guarantees capacity, so this terminates.
void clip_redistribute(std::vector<long>& hist, long limit) {
    long excess = 0;
    for (long& h : hist) {
        if (h > limit) {
            excess += h - limit;
            h = limit;
        }
    }
    while (excess > 0) {
        long below = 0;
        for (long h : hist) below += (h < limit);
        if (below == 0) break;
        if (excess >= below) {
            const long per = excess / below;
            for (long& h : hist) {
                if (h < limit) {
                    const long add = std::min(per, limit - h);
                    h += add;
                    excess -= add;
                }
            }
        } else {
            // Residual smaller than the open bins: stride so no histogram
            // region is favored, then sweep up whatever is left.
            const std::size_t step =
                std::max<std::size_t>(1, hist.size() / static_cast<std::size_t>(excess));
            for (std::size_t i = 0; i < hist.size() && excess > 0; i += step) {
                if (hist[i] < limit) {
                    ++hist[i];
                    --excess;
                }
            }
            for (std::size_t i = 0; i < hist.size() && excess > 0; ++i) {
                if (hist[i] < limit) {
                    ++hist[i];
                    --excess;
                }
            }
        }
    }
}

// Inclusive-CDF equalization mapping for one histogram.
std::vector<double> cdf_mapping(const std::vector<long>& hist, long total) {
    std::vector<double> map(hist.size());
    long run = 0;
    for (std::size_t b = 0; b < hist.size(); ++b) {
        run += hist[b];
        map[b] = static_cast<double>(run) / static_cast<double>(total);
    }
    return map;
}

}  // namespace

GrayImage hist_eq(const GrayImage& img, int bins) {
    if (bins < 2) raise(Errc::bad_config, "hist_eq: bins must be >= 2");
    std::vector<long> hist(static_cast<std::size_t>(bins), 0);
    for (double v : img.data) ++hist[static_cast<std::size_t>(value_bin(v, bins))];
    const long total = static_cast<long>(img.data.size());
    if (total == 0) return img;
    const std::vector<double> map = cdf_mapping(hist, total);
    GrayImage out(img.width, img.height);
    for (std::size_t i = 0; i < img.data.size(); ++i)
        out.data[i] = map[static_cast<std::size_t>(value_bin(img.data[i], bins))];
    return out;
}

GrayImage clahe(const GrayImage& img, int tiles_x, int tiles_y, int bins, double clip) {
    if (bins < 2) raise(Errc::bad_config, "clahe: bins must be >= 2");
    if (tiles_x < 1 || tiles_y < 1) raise(Errc::bad_config, "clahe: tile grid must be >= 1");
    if (img.width < tiles_x || img.height < tiles_y)
        raise(Errc::tile_too_small, "clahe: image smaller than the tile grid");

    const int tx = tiles_x, ty = tiles_y;
    std::vector<int> xb(static_cast<std::size_t>(tx) + 1), yb(static_cast<std::size_t>(ty) + 1);
    for (int i = 0; i <= tx; ++i) xb[static_cast<std::size_t>(i)] = static_cast<int>(static_cast<long>(i) * img.width / tx);
    for (int i = 0; i <= ty; ++i) yb[static_cast<std::size_t>(i)] = static_cast<int>(static_cast<long>(i) * img.height / ty);

    // Per-tile clipped equalization mappings.
    std::vector<std::vector<double>> maps(static_cast<std::size_t>(tx) * ty);
    std::vector<double> cx(static_cast<std::size_t>(tx)), cy(static_cast<std::size_t>(ty));
    for (int t = 0; t < tx; ++t) cx[static_cast<std::size_t>(t)] = 0.5 * (xb[static_cast<std::size_t>(t)] + xb[static_cast<std::size_t>(t) + 1] - 1);
    for (int t = 0; t < ty; ++t) cy[static_cast<std::size_t>(t)] = 0.5 * (yb[static_cast<std::size_t>(t)] + yb[static_cast<std::size_t>(t) + 1] - 1);

    for (int tyi = 0; tyi < ty; ++tyi) {
        for (int txi = 0; txi < tx; ++txi) {
            std::vector<long> hist(static_cast<std::size_t>(bins), 0);
            long npix = 0;
            for (int y = yb[static_cast<std::size_t>(tyi)]; y < yb[static_cast<std::size_t>(tyi) + 1]; ++y)
                for (int x = xb[static_cast<std::size_t>(txi)]; x < xb[static_cast<std::size_t>(txi) + 1]; ++x) {
                    ++hist[static_cast<std::size_t>(value_bin(img.at(x, y), bins))];
                    ++npix;
                }
            // Clip at clip * tile pixels, floored at the uniform fill so the
            // redistribution pass always has room.
            const long min_limit = (npix + bins - 1) / bins;
            const long limit = std::max(min_limit, std::lround(clip * static_cast<double>(npix)));
            clip_redistribute(hist, limit);
            maps[static_cast<std::size_t>(tyi) * tx + txi] = cdf_mapping(hist, npix);
        }
    }

    // Bilinear blend of the four surrounding tile mappings.
    auto tile_frac = [](const std::vector<double>& centers, double pos, int& lo, double& f) {
        const int n = static_cast<int>(centers.size());
        if (pos <= centers[0] || n == 1) {
            lo = 0;
            f = 0.0;
            return;
        }
        if (pos >= centers[static_cast<std::size_t>(n) - 1]) {
            lo = n - 2;
            f = 1.0;
            return;
        }
        lo = 0;
        while (lo + 1 < n - 1 && centers[static_cast<std::size_t>(lo) + 1] <= pos) ++lo;
        f = (pos - centers[static_cast<std::size_t>(lo)]) /
            (centers[static_cast<std::size_t>(lo) + 1] - centers[static_cast<std::size_t>(lo)]);
    };

    GrayImage out(img.width, img.height);
    for (int y = 0; y < img.height; ++y) {
        int ty0;
        double fy;
        tile_frac(cy, y, ty0, fy);
        const int ty1 = std::min(ty0 + 1, ty - 1);
        for (int x = 0; x < img.width; ++x) {
            int tx0;
            double fx;
            tile_frac(cx, x, tx0, fx);
            const int tx1 = std::min(tx0 + 1, tx - 1);
            const int b = value_bin(img.at(x, y), bins);
            const double m00 = maps[static_cast<std::size_t>(ty0) * tx + tx0][static_cast<std::size_t>(b)];
            const double m01 = maps[static_cast<std::size_t>(ty0) * tx + tx1][static_cast<std::size_t>(b)];
            const double m10 = maps[static_cast<std::size_t>(ty1) * tx + tx0][static_cast<std::size_t>(b)];
            const double m11 = maps[static_cast<std::size_t>(ty1) * tx + tx1][static_cast<std::size_t>(b)];
            const double top = (1.0 - fx) * m00 + fx * m01;
            const double bot = (1.0 - fx) * m10 + fx * m11;
            out.at(x, y) = std::clamp((1.0 - fy) * top + fy * bot, 0.0, 1.0);
        }
    }
    return out;
}

// --- smoothing ---------------------------------------------------------------

namespace {

// Horizontal pass of a mean filter with window offsets [-4, +5], replicate
// padding (matches the center convention of an even 10-tap window).
void box10_pass(const GrayImage& src, GrayImage& dst) {
    const int w = src.width;
    for (int y = 0; y < src.height; ++y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int d = -4; d <= 5; ++d) {
                const int xx = std::clamp(x + d, 0, w - 1);
                s += src.at(xx, y);
            }
            dst.at(x, y) = s / 10.0;
        }
    }
}

GrayImage transpose(const GrayImage& src) {
    GrayImage out(src.height, src.width);
    for (int y = 0; y < src.height; ++y)
        for (int x = 0; x < src.width; ++x) out.at(y, x) = src.at(x, y);
    return out;
}

void gaussian_pass(const GrayImage& src, GrayImage& dst, const std::vector<double>& kernel) {
    const auto& k = simd::active_kernels();
    const int radius = static_cast<int>(kernel.size() / 2);
    const int w = src.width;
    for (int y = 0; y < src.height; ++y) {
        const double* row = src.data.data() + static_cast<std::size_t>(y) * w;
        for (int x = 0; x < w; ++x) {
            if (x >= radius && x + radius < w) {
                dst.at(x, y) = k.dot(kernel.data(), row + x - radius, kernel.size());
            } else {
                double s = 0.0;
                for (int d = -radius; d <= radius; ++d)
                    s += kernel[static_cast<std::size_t>(d + radius)] * row[std::clamp(x + d, 0, w - 1)];
                dst.at(x, y) = s;
            }
        }
    }
}

}  // namespace

GrayImage box_filter_10(const GrayImage& img) {
    GrayImage tmp(img.width, img.height);
    box10_pass(img, tmp);
    GrayImage tr = transpose(tmp);
    GrayImage tmp2(tr.width, tr.height);
    box10_pass(tr, tmp2);
    GrayImage out = transpose(tmp2);
    for (double& v : out.data) v = std::clamp(v, 0.0, 1.0);
    return out;
}

GrayImage gaussian_filter(const GrayImage& img, double sigma) {
    if (sigma <= 0.0) raise(Errc::bad_config, "gaussian_filter: sigma must be > 0");
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int d = -radius; d <= radius; ++d) {
        const double v = std::exp(-(static_cast<double>(d) * d) / (2.0 * sigma * sigma));
        kernel[static_cast<std::size_t>(d + radius)] = v;
        sum += v;
    }
    for (double& v : kernel) v /= sum;

    GrayImage tmp(img.width, img.height);
    gaussian_pass(img, tmp, kernel);
    GrayImage tr = transpose(tmp);
    GrayImage tmp2(tr.width, tr.height);
    gaussian_pass(tr, tmp2, kernel);
    GrayImage out = transpose(tmp2);
    for (double& v : out.data) v = std::clamp(v, 0.0, 1.0);
    return out;
}

GrayImage subtract_enhanced(const GrayImage& smoothed, const GrayImage& enhanced) {
    require_same_dims(smoothed.width, smoothed.height, enhanced.width, enhanced.height,
                      "subtract_enhanced");
    GrayImage out(smoothed.width, smoothed.height);
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = std::max(0.0, smoothed.data[i] - enhanced.data[i]);
    return out;
}

// --- thresholding ------------------------------------------------------------

double intermeans_threshold(const GrayImage& img, int bins) {
    if (bins < 2) raise(Errc::bad_config, "intermeans_threshold: bins must be >= 2");
    if (img.data.empty()) raise(Errc::empty_histogram, "intermeans_threshold: empty image");

    // Quantize to the bin grid (8-bit for the default 256).
    std::vector<long> hist(static_cast<std::size_t>(bins), 0);
    for (double v : img.data) {
        int q = static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * (bins - 1)));
        ++hist[static_cast<std::size_t>(q)];
    }
    std::vector<double> csum(static_cast<std::size_t>(bins)), cwsum(static_cast<std::size_t>(bins));
    double run = 0.0, wrun = 0.0;
    for (int b = 0; b < bins; ++b) {
        run += static_cast<double>(hist[static_cast<std::size_t>(b)]);
        wrun += static_cast<double>(b) * static_cast<double>(hist[static_cast<std::size_t>(b)]);
        csum[static_cast<std::size_t>(b)] = run;
        cwsum[static_cast<std::size_t>(b)] = wrun;
    }
    const double total = csum.back();
    const double wtotal = cwsum.back();

    // One intermeans update: average of the class means below/above t.
    const auto step = [&](double t) {
        const int idx = std::clamp(static_cast<int>(std::floor(t)), 0, bins - 1);
        const double c0 = csum[static_cast<std::size_t>(idx)];
        const double s0 = cwsum[static_cast<std::size_t>(idx)];
        const double c1 = total - c0;
        const double s1 = wtotal - s0;
        if (c0 > 0.0 && c1 > 0.0) return 0.5 * (s0 / c0 + s1 / c1);
        return c0 > 0.0 ? s0 / c0 : s1 / c1;
    };

    double t = wtotal / total;  // histogram mean as the starting point
    for (int iter = 0; iter < 256; ++iter) {
        const double next = step(t);
        const bool small_step = std::abs(next - t) <= 1.0;
        t = next;
        // A sub-bin step can still cross a bin boundary where the class
        // means jump, so only stop once t is a genuine fixed point.
        if (small_step && std::abs(step(t) - t) <= 1.0) break;
    }
    return t / static_cast<double>(bins - 1);
}

BinaryImage binarize(const GrayImage& img, double level, double offset) {
    if (level < 0.0 || level > 1.0) raise(Errc::invalid_level, "binarize: level outside [0,1]");
    if (level - offset < 0.0) raise(Errc::invalid_level, "binarize: offset exceeds level");
    const double cut = level - offset;
    BinaryImage out(img.width, img.height);
    for (std::size_t i = 0; i < img.data.size(); ++i) out.data[i] = img.data[i] > cut ? 1 : 0;
    return out;
}

// --- component cleanup ---------------------------------------------------------

BinaryImage remove_small_components(const BinaryImage& img, int min_px, int connectivity) {
    if (connectivity != 4 && connectivity != 8)
        raise(Errc::bad_config, "remove_small_components: connectivity must be 4 or 8");
    if (min_px < 1) raise(Errc::bad_config, "remove_small_components: min_px must be >= 1");

    const int w = img.width, h = img.height;
    BinaryImage out = img;
    std::vector<std::int32_t> label(img.data.size(), -1);
    std::vector<std::size_t> stack;
    std::vector<std::size_t> members;

    static constexpr int dx8[8] = {1, -1, 0, 0, 1, 1, -1, -1};
    static constexpr int dy8[8] = {0, 0, 1, -1, 1, -1, 1, -1};
    const int ndirs = (connectivity == 4) ? 4 : 8;

    std::int32_t next_label = 0;
    for (std::size_t start = 0; start < img.data.size(); ++start) {
        if (img.data[start] == 0 || label[start] >= 0) continue;
        stack.clear();
        members.clear();
        stack.push_back(start);
        label[start] = next_label;
        while (!stack.empty()) {
            const std::size_t cur = stack.back();
            stack.pop_back();
            members.push_back(cur);
            const int cy = static_cast<int>(cur) / w;
            const int cx = static_cast<int>(cur) % w;
            for (int d = 0; d < ndirs; ++d) {
                const int nx = cx + dx8[d];
                const int ny = cy + dy8[d];
                if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                const std::size_t ni = static_cast<std::size_t>(ny) * w + nx;
                if (img.data[ni] != 0 && label[ni] < 0) {
                    label[ni] = next_label;
                    stack.push_back(ni);
                }
            }
        }
        if (members.size() < static_cast<std::size_t>(min_px))
            for (std::size_t i : members) out.data[i] = 0;
        ++next_label;
    }
    return out;
}

BinaryImage complement(const BinaryImage& img) {
    BinaryImage out(img.width, img.height);
    for (std::size_t i = 0; i < img.data.size(); ++i) out.data[i] = img.data[i] ? 0 : 1;
    return out;
}

GrayImage complement(const GrayImage& img) {
    GrayImage out(img.width, img.height);
    for (std::size_t i = 0; i < img.data.size(); ++i) out.data[i] = 1.0 - img.data[i];
    return out;
}

RgbImage complement(const RgbImage& img) {
    RgbImage out(img.width, img.height);
    for (std::size_t i = 0; i < img.data.size(); ++i)
        out.data[i] = static_cast<std::uint8_t>(255 - img.data[i]);
    return out;
}

RgbImage colorize(const BinaryImage& mask, const RgbImage& source, Rgb8 background) {
    require_same_dims(mask.width, mask.height, source.width, source.height, "colorize");
    RgbImage out(mask.width, mask.height);
    for (std::size_t i = 0; i < mask.data.size(); ++i) {
        std::uint8_t* dst = out.data.data() + i * 3;
        if (mask.data[i]) {
            const std::uint8_t* src = source.data.data() + i * 3;
            dst[0] = src[0];
            dst[1] = src[1];
            dst[2] = src[2];
        } else {
            dst[0] = background.r;
            dst[1] = background.g;
            dst[2] = background.b;
        }
    }
    return out;
}

// --- orchestrator --------------------------------------------------------------

PnResult extract_pigment_network(const RgbImage& img, const PipelineConfig& cfg) {
    cfg.validate();
    PnResult res;
    res.stages.resized = resize_image(img, cfg.resize_width, cfg.resize_height);

    const PlanarImage converted = (cfg.colorspace == Colorspace::lab)
                                      ? rgb_to_lab(res.stages.resized)
                                      : rgb_to_hsv(res.stages.resized);
    const PlanarImage weighted = apply_channel_weights(converted, cfg.channel_weights);

    PcaGray pg = pca_grayscale(weighted);
    res.stages.pca_gray = std::move(pg.gray);
    const int w = cfg.resize_width, h = cfg.resize_height;
    if (pg.degenerate) {
        // No channel spread at all (constant image): nothing to detect.
        res.stages.enhanced = GrayImage(w, h);
        res.stages.smoothed = GrayImage(w, h);
        res.stages.subtracted = GrayImage(w, h);
        res.stages.binary_raw = BinaryImage(w, h);
        res.stages.binary_clean = BinaryImage(w, h);
        res.stages.complemented = complement(res.stages.binary_clean);
        res.mask = res.stages.binary_clean;
        res.colorized = colorize(res.mask, res.stages.resized, cfg.background);
        res.threshold_level = 0.0;
        res.detected = false;
        return res;
    }

    res.stages.enhanced =
        clahe(res.stages.pca_gray, cfg.clahe_tiles_x, cfg.clahe_tiles_y, cfg.clahe_bins, cfg.clahe_clip);
    res.stages.smoothed = (cfg.smoother == Smoother::box10)
                              ? box_filter_10(res.stages.enhanced)
                              : gaussian_filter(res.stages.enhanced, cfg.gaussian_sigma);
    res.stages.subtracted = cfg.subtract_flipped
                                ? subtract_enhanced(res.stages.enhanced, res.stages.smoothed)
                                : subtract_enhanced(res.stages.smoothed, res.stages.enhanced);

    res.threshold_level = intermeans_threshold(res.stages.subtracted);
    // Dark images can push the level below the offset; clamp so the
    // binarize precondition (level - offset >= 0) always holds.
    const double offset = std::min(cfg.threshold_offset, res.threshold_level);
    res.stages.binary_raw = binarize(res.stages.subtracted, res.threshold_level, offset);
    res.stages.binary_clean =
        remove_small_components(res.stages.binary_raw, cfg.min_component_px, cfg.connectivity);
    res.stages.complemented = complement(res.stages.binary_clean);

    res.mask = res.stages.binary_clean;
    res.colorized = colorize(res.mask, res.stages.resized, cfg.background);
    res.detected = res.mask.count_on() > 0;
    return res;
}

void write_stages(const PnResult& result, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const fs::path base(dir);
    save_png((base / "01_resized.png").string(), result.stages.resized);
    save_png((base / "02_pca_gray.png").string(), result.stages.pca_gray);
    save_png((base / "03_enhanced.png").string(), result.stages.enhanced);
    save_png((base / "04_smoothed.png").string(), result.stages.smoothed);
    save_png((base / "05_subtracted.png").string(), result.stages.subtracted);
    save_png((base / "06_binary_raw.png").string(), result.stages.binary_raw);
    save_png((base / "07_binary_clean.png").string(), result.stages.binary_clean);
    save_png((base / "08_complemented.png").string(), result.stages.complemented);
    save_png((base / "09_colorized.png").string(), result.colorized);
}

}  // namespace pnkit::pnx
