#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <pnkit/image.hpp>
#include <pnkit/pnextract.hpp>

namespace pnkit::data {

struct LabeledImage {
    std::string id;
    std::string path;
    int label = 0;  // 0 = typical, 1 = atypical
};

/// Reads a labels CSV (header image_id,pn_label; labels typical|atypical)
/// and resolves each id to an image file under root (tried as-is, then with
/// the common raster extensions).
std::vector<LabeledImage> load_labeled_dataset(const std::string& root,
                                               const std::string& labels_csv);

struct SplitResult {
    std::vector<LabeledImage> train;
    std::vector<LabeledImage> val;
};

/// Per-class shuffle and split at round(fraction * class size). Both sides
/// must end up non-empty for every class.
SplitResult stratified_split(const std::vector<LabeledImage>& items, double train_fraction,
                             std::uint64_t seed);

/// image id -> threshold offset, each in [0.001, 0.011].
using OverrideTable = std::map<std::string, double>;

/// CSV with header image_id,offset.
OverrideTable load_overrides_csv(const std::string& path);

struct ManifestRow {
    std::string id;
    int label = 0;
    bool detected = false;
    double threshold_level = 0.0;
    double offset_used = 0.0;
    bool failed = false;  // per-image pipeline error; the batch continues
};

/// Runs the extraction pipeline over every item (optionally on `jobs`
/// threads), writes <id>_pn.png per image into out_dir plus manifest.csv
/// (header image_id,label,detected,threshold_level,offset_used), rows sorted
/// by id. Output is identical for any thread count.
std::vector<ManifestRow> build_pn_dataset(const std::vector<LabeledImage>& items,
                                          const pnx::PipelineConfig& cfg,
                                          const OverrideTable& overrides,
                                          const std::string& out_dir, int jobs = 1);

void write_manifest_csv(const std::vector<ManifestRow>& rows, const std::string& path);

/// Synthetic pigment-network stand-in: a jittered dark grid over a light
/// brown background, with the rasterized grid as ground truth.
struct SynthParams {
    int width = 512;
    int height = 512;
    int spacing = 24;       // grid pitch in pixels
    int line_width = 2;
    double darkness = 0.55;  // 0 = invisible, 1 = black lines
    Rgb8 background{205, 164, 124};
    double noise = 0.015;    // per-pixel background shading amplitude
    double irregularity = 0.35;  // node jitter as a fraction of spacing
    std::uint64_t seed = 0;
};

struct SynthImage {
    RgbImage image;
    BinaryImage mask;  // ground-truth grid pixels
};

SynthImage synth_network_image(const SynthParams& p);

}  // namespace pnkit::data
