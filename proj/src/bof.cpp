#include <pnkit/bof.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

#include <pnkit/kernels.hpp>
#include <pnkit/rng.hpp>

namespace pnkit::bof {

namespace {

// --- integral image ----------------------------------------------------------

struct Integral {
    int w = 0, h = 0;
    std::vector<double> sum;  // (w+1) x (h+1)

    explicit Integral(const GrayImage& img) : w(img.width), h(img.height) {
        sum.assign(static_cast<std::size_t>(w + 1) * (h + 1), 0.0);
        for (int y = 0; y < h; ++y) {
            double row = 0.0;
            for (int x = 0; x < w; ++x) {
                row += img.at(x, y);
                at(x + 1, y + 1) = at(x + 1, y) + row;
            }
        }
    }

    double& at(int x, int y) { return sum[static_cast<std::size_t>(y) * (w + 1) + x]; }
    double at(int x, int y) const { return sum[static_cast<std::size_t>(y) * (w + 1) + x]; }

    // Sum of the rows x cols box whose top-left pixel is (col, row),
    // clamped to the image.
    double box(int row, int col, int rows, int cols) const {
        const int r0 = std::clamp(row, 0, h);
        const int c0 = std::clamp(col, 0, w);
        const int r1 = std::clamp(row + rows, 0, h);
        const int c1 = std::clamp(col + cols, 0, w);
        if (r1 <= r0 || c1 <= c0) return 0.0;
        return at(c1, r1) - at(c0, r1) - at(c1, r0) + at(c0, r0);
    }
};

// --- Hessian responses ---------------------------------------------------------

// Filter sizes per octave (standard SURF ladder, 3 octaves).
constexpr int kOctaves = 3;
constexpr int kLayersPerOctave = 4;
constexpr int kFilterSizes[kOctaves][kLayersPerOctave] = {
    {9, 15, 21, 27},
    {15, 27, 39, 51},
    {27, 51, 75, 99},
};

struct ResponseLayer {
    int filter_size = 0;
    std::vector<double> response;  // w*h
};

ResponseLayer hessian_layer(const Integral& ii, int filter_size) {
    ResponseLayer layer;
    layer.filter_size = filter_size;
    layer.response.assign(static_cast<std::size_t>(ii.w) * ii.h, 0.0);
    const int b = (filter_size - 1) / 2;
    const int l = filter_size / 3;
    const double inv_area = 1.0 / (static_cast<double>(filter_size) * filter_size);

    // Responses only where the whole filter fits; clamped border sums would
    // fake structure on featureless images.
    for (int r = b; r < ii.h - b; ++r) {
        for (int c = b; c < ii.w - b; ++c) {
            const double dxx = ii.box(r - l + 1, c - b, 2 * l - 1, filter_size) -
                               3.0 * ii.box(r - l + 1, c - l / 2, 2 * l - 1, l);
            const double dyy = ii.box(r - b, c - l + 1, filter_size, 2 * l - 1) -
                               3.0 * ii.box(r - l / 2, c - l + 1, l, 2 * l - 1);
            const double dxy = ii.box(r - l, c + 1, l, l) + ii.box(r + 1, c - l, l, l) -
                               ii.box(r - l, c - l, l, l) - ii.box(r + 1, c + 1, l, l);
            const double nxx = dxx * inv_area;
            const double nyy = dyy * inv_area;
            const double nxy = dxy * inv_area;
            layer.response[static_cast<std::size_t>(r) * ii.w + c] = nxx * nyy - 0.81 * nxy * nxy;
        }
    }
    return layer;
}

// --- descriptor -----------------------------------------------------------------

double haar_x(const Integral& ii, int row, int col, int size) {
    const int half = size / 2;
    return ii.box(row - half, col, half * 2, half) - ii.box(row - half, col - half, half * 2, half);
}

double haar_y(const Integral& ii, int row, int col, int size) {
    const int half = size / 2;
    return ii.box(row, col - half, half, half * 2) - ii.box(row - half, col - half, half, half * 2);
}

Descriptor describe_point(const Integral& ii, double kx, double ky, double scale) {
    Descriptor desc{};
    const int haar_size = 2 * std::max(1, static_cast<int>(std::lround(scale)));
    int idx = 0;
    // 4x4 subregions of 5x5 samples, sample spacing = scale, Gaussian
    // weighted (sigma 3.3*scale) around the keypoint.
    const double sigma = 3.3 * scale;
    for (int sy = -2; sy < 2; ++sy) {
        for (int sx = -2; sx < 2; ++sx) {
            double sum_dx = 0.0, sum_adx = 0.0, sum_dy = 0.0, sum_ady = 0.0;
            for (int iy = 0; iy < 5; ++iy) {
                for (int ix = 0; ix < 5; ++ix) {
                    const double off_x = (sx * 5 + ix + 0.5) * scale;
                    const double off_y = (sy * 5 + iy + 0.5) * scale;
                    const int px = static_cast<int>(std::lround(kx + off_x));
                    const int py = static_cast<int>(std::lround(ky + off_y));
                    const double g = std::exp(-(off_x * off_x + off_y * off_y) / (2.0 * sigma * sigma));
                    const double dx = g * haar_x(ii, py, px, haar_size);
                    const double dy = g * haar_y(ii, py, px, haar_size);
                    sum_dx += dx;
                    sum_adx += std::abs(dx);
                    sum_dy += dy;
                    sum_ady += std::abs(dy);
                }
            }
            desc[static_cast<std::size_t>(idx)] = sum_dx;
            desc[static_cast<std::size_t>(idx) + 1] = sum_adx;
            desc[static_cast<std::size_t>(idx) + 2] = sum_dy;
            desc[static_cast<std::size_t>(idx) + 3] = sum_ady;
            idx += 4;
        }
    }
    double norm = 0.0;
    for (double v : desc) norm += v * v;
    norm = std::sqrt(norm);
    if (norm > 0.0)
        for (double& v : desc) v /= norm;
    return desc;
}

}  // namespace

DescriptorSet detect_describe(const GrayImage& img, double threshold) {
    if (img.width < 32 || img.height < 32)
        raise(Errc::image_too_small, "detect_describe: image must be at least 32x32");

    const Integral ii(img);

    // Build each distinct filter size once; octaves share layers.
    std::vector<int> sizes;
    for (const auto& oct : kFilterSizes)
        for (int f : oct)
            if (std::find(sizes.begin(), sizes.end(), f) == sizes.end()) sizes.push_back(f);
    std::sort(sizes.begin(), sizes.end());
    std::vector<ResponseLayer> layers;
    layers.reserve(sizes.size());
    for (int f : sizes) layers.push_back(hessian_layer(ii, f));
    auto layer_of = [&](int f) -> const ResponseLayer& {
        return layers[static_cast<std::size_t>(
            std::find(sizes.begin(), sizes.end(), f) - sizes.begin())];
    };

    DescriptorSet set;
    const int w = img.width, h = img.height;
    for (const auto& oct : kFilterSizes) {
        for (int li = 1; li < kLayersPerOctave - 1; ++li) {
            const ResponseLayer& below = layer_of(oct[li - 1]);
            const ResponseLayer& mid = layer_of(oct[li]);
            const ResponseLayer& above = layer_of(oct[li + 1]);
            // Stay inside the widest filter of the triple.
            const int margin = (oct[li + 1] - 1) / 2 + 1;
            if (2 * margin >= w || 2 * margin >= h) continue;
            for (int y = margin; y < h - margin; ++y) {
                for (int x = margin; x < w - margin; ++x) {
                    const double v = mid.response[static_cast<std::size_t>(y) * w + x];
                    if (v <= threshold) continue;
                    bool is_max = true;
                    for (int dy = -1; dy <= 1 && is_max; ++dy) {
                        for (int dx = -1; dx <= 1 && is_max; ++dx) {
                            const std::size_t ni = static_cast<std::size_t>(y + dy) * w + (x + dx);
                            if (below.response[ni] >= v || above.response[ni] >= v) is_max = false;
                            if ((dy != 0 || dx != 0) && mid.response[ni] >= v) is_max = false;
                        }
                    }
                    if (!is_max) continue;
                    Keypoint kp;
                    kp.x = x;
                    kp.y = y;
                    kp.scale = 1.2 * mid.filter_size / 9.0;
                    kp.response = v;
                    set.keypoints.push_back(kp);
                    set.descriptors.push_back(describe_point(ii, kp.x, kp.y, kp.scale));
                }
            }
        }
    }
    return set;
}

// --- k-means vocabulary ----------------------------------------------------------

Vocabulary build_vocabulary(const std::vector<Descriptor>& descriptors, int k, std::uint64_t seed,
                            std::vector<double>* sse_trace) {
    if (k < 2) raise(Errc::bad_config, "build_vocabulary: k must be >= 2");
    if (descriptors.size() < static_cast<std::size_t>(k))
        raise(Errc::insufficient_descriptors, "build_vocabulary: fewer descriptors than clusters");

    const auto& kern = simd::active_kernels();
    const std::size_t n = descriptors.size();
    Rng rng(seed);

    // k-means++ seeding.
    Vocabulary vocab;
    vocab.k = k;
    vocab.centroids.reserve(static_cast<std::size_t>(k));
    vocab.centroids.push_back(descriptors[rng.below(n)]);
    std::vector<double> dist2(n, std::numeric_limits<double>::infinity());
    for (int c = 1; c < k; ++c) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = kern.l2sq(descriptors[i].data(), vocab.centroids.back().data(),
                                       kDescriptorLength);
            dist2[i] = std::min(dist2[i], d);
            total += dist2[i];
        }
        std::size_t pick = 0;
        if (total > 0.0) {
            const double target = rng.uniform() * total;
            double run = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                run += dist2[i];
                if (run >= target) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = rng.below(n);
        }
        vocab.centroids.push_back(descriptors[pick]);
    }

    // Lloyd iterations.
    std::vector<int> assign(n, 0);
    std::vector<double> point_dist(n, 0.0);
    for (int iter = 0; iter < 100; ++iter) {
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            int best_c = 0;
            for (int c = 0; c < k; ++c) {
                const double d = kern.l2sq(descriptors[i].data(),
                                           vocab.centroids[static_cast<std::size_t>(c)].data(),
                                           kDescriptorLength);
                if (d < best) {
                    best = d;
                    best_c = c;
                }
            }
            assign[i] = best_c;
            point_dist[i] = best;
        }
        if (sse_trace)
            sse_trace->push_back(std::accumulate(point_dist.begin(), point_dist.end(), 0.0));

        std::vector<Descriptor> sums(static_cast<std::size_t>(k), Descriptor{});
        std::vector<long> counts(static_cast<std::size_t>(k), 0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto c = static_cast<std::size_t>(assign[i]);
            kern.add_acc(sums[c].data(), descriptors[i].data(), kDescriptorLength);
            ++counts[c];
        }
        // Re-seed empty clusters from the worst-fit point.
        for (int c = 0; c < k; ++c) {
            const auto uc = static_cast<std::size_t>(c);
            if (counts[uc] > 0) continue;
            std::size_t far = 0;
            for (std::size_t i = 1; i < n; ++i)
                if (point_dist[i] > point_dist[far]) far = i;
            sums[uc] = descriptors[far];
            counts[uc] = 1;
            point_dist[far] = 0.0;
        }

        double max_move2 = 0.0;
        for (int c = 0; c < k; ++c) {
            const auto uc = static_cast<std::size_t>(c);
            Descriptor next{};
            for (int d = 0; d < kDescriptorLength; ++d)
                next[static_cast<std::size_t>(d)] =
                    sums[uc][static_cast<std::size_t>(d)] / static_cast<double>(counts[uc]);
            max_move2 = std::max(max_move2,
                                 kern.l2sq(next.data(), vocab.centroids[uc].data(), kDescriptorLength));
            vocab.centroids[uc] = next;
        }
        if (max_move2 < 1e-6 * 1e-6) break;
    }
    return vocab;
}

std::vector<double> encode(const DescriptorSet& desc, const Vocabulary& vocab) {
    const auto& kern = simd::active_kernels();
    std::vector<double> hist(static_cast<std::size_t>(vocab.k), 0.0);
    if (desc.descriptors.empty()) return hist;
    for (const Descriptor& d : desc.descriptors) {
        double best = std::numeric_limits<double>::infinity();
        int best_c = 0;
        for (int c = 0; c < vocab.k; ++c) {
            const double dist =
                kern.l2sq(d.data(), vocab.centroids[static_cast<std::size_t>(c)].data(),
                          kDescriptorLength);
            if (dist < best) {  // strict: ties stay with the lowest index
                best = dist;
                best_c = c;
            }
        }
        hist[static_cast<std::size_t>(best_c)] += 1.0;
    }
    const double total = static_cast<double>(desc.descriptors.size());
    for (double& v : hist) v /= total;
    return hist;
}

// --- classifier ------------------------------------------------------------------

BofModel train_bof(const std::vector<BofSample>& train_set, int k, std::uint64_t seed) {
    long class_counts[2] = {0, 0};
    for (const auto& s : train_set) {
        if (s.label != 0 && s.label != 1) raise(Errc::bad_label, "train_bof: label must be 0 or 1");
        ++class_counts[s.label];
    }
    if (class_counts[0] < 2 || class_counts[1] < 2)
        raise(Errc::empty_class, "train_bof: each class needs at least 2 images");

    // Vocabulary from training descriptors only.
    std::vector<DescriptorSet> sets;
    sets.reserve(train_set.size());
    std::vector<Descriptor> pool;
    for (const auto& s : train_set) {
        sets.push_back(detect_describe(s.image));
        pool.insert(pool.end(), sets.back().descriptors.begin(), sets.back().descriptors.end());
    }
    BofModel model;
    model.vocab = build_vocabulary(pool, k, seed);

    std::vector<std::vector<double>> features;
    features.reserve(sets.size());
    for (const auto& s : sets) features.push_back(encode(s, model.vocab));

    // Hinge-loss subgradient descent; atypical (label 1) is y = +1.
    const double lambda = 1e-4;
    const int epochs = 200;
    std::vector<double> w(static_cast<std::size_t>(k), 0.0);
    double bias = 0.0;
    Rng rng(seed ^ 0x5bd1e995u);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    const auto& kern = simd::active_kernels();
    for (int epoch = 1; epoch <= epochs; ++epoch) {
        const double lr = 0.1 / epoch;
        rng.shuffle(order);
        for (std::size_t i : order) {
            const double y = train_set[i].label == 1 ? 1.0 : -1.0;
            const std::vector<double>& x = features[i];
            const double margin = y * (kern.dot(w.data(), x.data(), w.size()) + bias);
            for (std::size_t j = 0; j < w.size(); ++j) w[j] -= lr * lambda * w[j];
            if (margin < 1.0) {
                kern.axpy(w.data(), lr * y, x.data(), w.size());
                bias += lr * y;
            }
        }
    }

    model.weights[1].assign(w.begin(), w.end());
    model.weights[1].push_back(bias);
    model.weights[0].resize(w.size() + 1);
    for (std::size_t j = 0; j < model.weights[1].size(); ++j)
        model.weights[0][j] = -model.weights[1][j];
    model.trained = true;
    return model;
}

BofPrediction predict_bof(const BofModel& model, const GrayImage& img) {
    if (!model.trained) raise(Errc::untrained_model, "predict_bof: model is not trained");
    const std::vector<double> x = encode(detect_describe(img), model.vocab);
    const auto& wpos = model.weights[1];
    double score = wpos.back();  // bias
    score += simd::active_kernels().dot(wpos.data(), x.data(), x.size());
    BofPrediction p;
    p.score = score;
    p.label = score > 0.0 ? 1 : 0;
    return p;
}

// --- serialization -----------------------------------------------------------------

namespace {

constexpr char MAGIC[] = "PNKITBOF1";

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_f64(std::vector<std::uint8_t>& out, double v) {
    put_u64(out, std::bit_cast<std::uint64_t>(v));
}

struct Reader {
    const std::vector<std::uint8_t>& buf;
    std::size_t pos = 0;
    void need(std::size_t n) const {
        if (pos + n > buf.size()) raise(Errc::unreadable_file, "bof container truncated");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[pos++]) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[pos++]) << (8 * i);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str() {
        const std::uint32_t n = u32();
        need(n);
        std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
        pos += n;
        return s;
    }
};

}  // namespace

std::vector<std::uint8_t> serialize_bof(const BofModel& model) {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), MAGIC, MAGIC + 9);
    put_u32(out, static_cast<std::uint32_t>(model.vocab.k));
    put_u32(out, kDescriptorLength);
    for (const Descriptor& c : model.vocab.centroids)
        for (double v : c) put_f64(out, v);
    for (const auto& w : model.weights) {
        put_u64(out, w.size());
        for (double v : w) put_f64(out, v);
    }
    for (const auto& name : model.class_names) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
    }
    out.push_back(model.trained ? 1 : 0);
    return out;
}

BofModel deserialize_bof(const std::vector<std::uint8_t>& bytes) {
    Reader r{bytes};
    r.need(9);
    if (std::memcmp(bytes.data(), MAGIC, 9) != 0)
        raise(Errc::unsupported_format, "not a PNKITBOF1 container");
    r.pos = 9;
    BofModel model;
    model.vocab.k = static_cast<int>(r.u32());
    const std::uint32_t dim = r.u32();
    if (dim != kDescriptorLength) raise(Errc::unreadable_file, "bof container: descriptor length");
    model.vocab.centroids.resize(static_cast<std::size_t>(model.vocab.k));
    for (auto& c : model.vocab.centroids)
        for (double& v : c) v = r.f64();
    for (auto& w : model.weights) {
        w.resize(r.u64());
        for (double& v : w) v = r.f64();
    }
    for (auto& name : model.class_names) name = r.str();
    r.need(1);
    model.trained = bytes[r.pos] != 0;
    return model;
}

void save_bof(const BofModel& model, const std::string& path) {
    const auto bytes = serialize_bof(model);
    std::ofstream out(path, std::ios::binary);
    if (!out) raise(Errc::unreadable_file, "cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

BofModel load_bof(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(Errc::unreadable_file, "cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return deserialize_bof(bytes);
}

}  // namespace pnkit::bof
