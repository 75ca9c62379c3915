#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <pnkit/image.hpp>

namespace pnkit::bof {

constexpr int kDescriptorLength = 64;
using Descriptor = std::array<double, kDescriptorLength>;

struct Keypoint {
    double x = 0.0;
    double y = 0.0;
    double scale = 0.0;
    double response = 0.0;
};

/// Per-image keypoints with their 64-length descriptors (parallel arrays).
struct DescriptorSet {
    std::vector<Keypoint> keypoints;
    std::vector<Descriptor> descriptors;

    std::size_t size() const { return descriptors.size(); }
};

/// Upright SURF-style detector/descriptor: integral image, box-filter
/// Hessian-determinant responses over 3 octaves (filter sizes 9..99),
/// 3x3x3 local maxima above `threshold` as keypoints, and per keypoint the
/// 4x4-subregion Haar sums (sum dx, sum |dx|, sum dy, sum |dy|), L2
/// normalized. No orientation assignment.
DescriptorSet detect_describe(const GrayImage& img, double threshold = 4e-4);

struct Vocabulary {
    int k = 0;
    std::vector<Descriptor> centroids;
};

/// K-means with k-means++ seeding; Lloyd iterations until the largest
/// centroid movement drops below 1e-6 (or 100 iterations). Empty clusters
/// are re-seeded from the point farthest from its centroid. When sse_trace
/// is given it receives the within-cluster SSE after each assignment pass.
Vocabulary build_vocabulary(const std::vector<Descriptor>& descriptors, int k, std::uint64_t seed,
                            std::vector<double>* sse_trace = nullptr);

/// Histogram of nearest-centroid assignments (Euclidean, ties to the lowest
/// index), L1-normalized; an empty descriptor set encodes to the zero vector.
std::vector<double> encode(const DescriptorSet& desc, const Vocabulary& vocab);

struct BofModel {
    Vocabulary vocab;
    // weights[c] has k+1 entries (bias last); class 1 = atypical is the
    // positive direction, class 0 mirrors it.
    std::array<std::vector<double>, 2> weights;
    std::array<std::string, 2> class_names{"typical", "atypical"};
    bool trained = false;
};

struct BofSample {
    GrayImage image;
    int label = 0;  // 0 = typical, 1 = atypical
};

/// Builds the vocabulary from the training descriptors only, encodes the
/// training images and fits a two-class linear max-margin classifier by
/// regularized hinge-loss subgradient descent (lambda 1e-4, 200 epochs,
/// lr 0.1 decaying 1/epoch). Deterministic given the seed.
BofModel train_bof(const std::vector<BofSample>& train_set, int k, std::uint64_t seed);

struct BofPrediction {
    int label = 0;
    double score = 0.0;  // positive leans atypical; used for ROC curves
};

BofPrediction predict_bof(const BofModel& model, const GrayImage& img);

/// Little-endian container, magic "PNKITBOF1".
std::vector<std::uint8_t> serialize_bof(const BofModel& model);
BofModel deserialize_bof(const std::vector<std::uint8_t>& bytes);
void save_bof(const BofModel& model, const std::string& path);
BofModel load_bof(const std::string& path);

}  // namespace pnkit::bof
