#pragma once

#include <array>
#include <string>

#include <pnkit/image.hpp>

namespace pnkit::pnx {

/// Eigen-decomposition of the 3x3 channel covariance plus the per-pixel
/// projections (scores) onto the components.
struct PcaResult {
    // coefficients[c][k]: component k's weight on channel c (columns are the
    // eigenvectors, ordered by descending eigenvalue).
    std::array<std::array<double, 3>, 3> coefficients{};
    std::array<double, 3> eigenvalues{};
    PlanarImage scores;  // 3 channels: projections of the centered pixels
};

struct PcaGray {
    GrayImage gray;      // min-max normalized first-component scores
    PcaResult pca;
    bool degenerate = false;  // constant image: no spread in the scores
};

enum class Smoother { box10, gaussian };
enum class Colorspace { lab, hsv };

struct PipelineConfig {
    int resize_width = 512;
    int resize_height = 512;
    ChannelWeights channel_weights;       // (1,0,0)
    Colorspace colorspace = Colorspace::lab;  // hsv kept as a comparison path
    int clahe_tiles_x = 8;
    int clahe_tiles_y = 8;
    int clahe_bins = 128;
    double clahe_clip = 0.01;
    Smoother smoother = Smoother::box10;
    double gaussian_sigma = 2.0;
    bool subtract_flipped = false;        // enhanced - smoothed when set
    double threshold_offset = 0.008;
    int min_component_px = 100;
    int connectivity = 8;                 // 4 or 8
    Rgb8 background;                      // white

    /// Throws Errc::bad_config on any out-of-range field.
    void validate() const;
};

/// Intermediate images of one pipeline run, in execution order. The on-disk
/// stage names (01_resized .. 09_colorized) are produced by write_stages.
struct PnStages {
    RgbImage resized;
    GrayImage pca_gray;
    GrayImage enhanced;
    GrayImage smoothed;
    GrayImage subtracted;
    BinaryImage binary_raw;
    BinaryImage binary_clean;
    BinaryImage complemented;
};

struct PnResult {
    BinaryImage mask;       // pigment network = 1
    RgbImage colorized;     // network pixels over the background color
    PnStages stages;
    double threshold_level = 0.0;  // normalized to [0,1]
    bool detected = false;
};

// --- pipeline stages -------------------------------------------------------

/// PCA over the three channel planes: mean-center, eigen-decompose the 3x3
/// covariance (sample normalization, N-1), project, min-max normalize the
/// first-component scores into a grayscale image. Eigenvector signs are fixed
/// so the largest-magnitude coefficient is positive.
PcaGray pca_grayscale(const PlanarImage& img);

/// Contrast-limited adaptive histogram equalization. Per-tile histograms of
/// `bins` bins, clip limit clip*tile_pixels (floored at ceil(px/bins) so the
/// excess always fits), excess redistributed, inclusive-CDF mapping, bilinear
/// blending between tile centers.
GrayImage clahe(const GrayImage& img, int tiles_x, int tiles_y, int bins, double clip);

/// Plain global histogram equalization (inclusive-CDF mapping).
GrayImage hist_eq(const GrayImage& img, int bins = 128);

/// 10x10 uniform mean with replicate padding; window offsets -4..+5.
GrayImage box_filter_10(const GrayImage& img);

/// Separable Gaussian blur, kernel radius ceil(3*sigma), replicate padding.
GrayImage gaussian_filter(const GrayImage& img, double sigma);

/// max(0, smoothed - enhanced), per pixel.
GrayImage subtract_enhanced(const GrayImage& smoothed, const GrayImage& enhanced);

/// Iterative intermeans threshold. The image is quantized to `bins` levels;
/// the initial threshold is the histogram mean, then T moves to the average
/// of the class means below/above T until it changes by at most one bin.
/// Returned level is normalized by (bins-1) into [0,1].
double intermeans_threshold(const GrayImage& img, int bins = 256);

/// pixel = 1 iff value > (level - offset), strict.
BinaryImage binarize(const GrayImage& img, double level, double offset);

/// Drops connected components smaller than min_px (4- or 8-connectivity).
BinaryImage remove_small_components(const BinaryImage& img, int min_px, int connectivity);

BinaryImage complement(const BinaryImage& img);  // 0 <-> 1
GrayImage complement(const GrayImage& img);      // 1.0 - v
RgbImage complement(const RgbImage& img);        // 255 - v

/// mask = 1 takes the source pixel, elsewhere the background color.
RgbImage colorize(const BinaryImage& mask, const RgbImage& source, Rgb8 background);

/// The full directional-imaging pipeline:
/// resize -> color convert -> channel weights -> PCA grayscale -> CLAHE ->
/// smoothing -> subtraction -> intermeans threshold -> binarize ->
/// small-component removal -> complement (presentation) -> colorize.
PnResult extract_pigment_network(const RgbImage& img, const PipelineConfig& cfg);

/// Writes the nine stage PNGs (01_resized .. 09_colorized) into `dir`.
void write_stages(const PnResult& result, const std::string& dir);

}  // namespace pnkit::pnx
