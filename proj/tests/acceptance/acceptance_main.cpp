// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one [PASS]/[FAIL]/[SKIP] line per criterion. Dataset-dependent
// criteria need PNKIT_PH2_DIR and PNKIT_PH2_LABELS (and optionally
// PNKIT_PH2_OVERRIDES) pointing at a PH2-style corpus; without them those
// criteria are reported as SKIP.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <pnkit/bof.hpp>
#include <pnkit/color.hpp>
#include <pnkit/data.hpp>
#include <pnkit/eval.hpp>
#include <pnkit/imageio.hpp>
#include <pnkit/nn.hpp>
#include <pnkit/pnextract.hpp>
#include <pnkit/resize.hpp>
#include <pnkit/rng.hpp>

#include "../support/oracles.hpp"

using namespace pnkit;
namespace fs = std::filesystem;

namespace {

struct Harness {
    int failed = 0;
    int passed = 0;
    int skipped = 0;

    void result(const std::string& name, bool ok, const std::string& detail) {
        std::printf("[%s] %s: %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
        (ok ? passed : failed)++;
    }
    void skip(const std::string& name, const std::string& why) {
        std::printf("[SKIP] %s: %s\n", name.c_str(), why.c_str());
        ++skipped;
    }
    void run(const std::string& name, const std::function<std::pair<bool, std::string>()>& fn) {
        try {
            const auto [ok, detail] = fn();
            result(name, ok, detail);
        } catch (const std::exception& e) {
            result(name, false, std::string("exception: ") + e.what());
        }
    }
};

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list args;
    va_start(args, f);
    std::vsnprintf(buf, sizeof(buf), f, args);
    va_end(args);
    return buf;
}

// --- always-runnable criteria ---------------------------------------------------

std::pair<bool, std::string> gradient_check() {
    const auto t0 = std::chrono::steady_clock::now();
    nn::CnnConfig cfg;
    cfg.input_h = cfg.input_w = 12;
    nn::CnnModel model = nn::make_model(cfg, 7);
    Rng rng(42);
    nn::Tensor4 batch(2, 12, 12, 3);
    for (double& v : batch.data) v = rng.uniform();
    const std::vector<int> labels{0, 1};
    const nn::Gradients grads = nn::backward(model, batch, labels);

    struct Ref {
        std::vector<double>* p;
        const std::vector<double>* g;
    };
    const std::vector<Ref> refs = {
        {&model.conv1.kernel, &grads.conv1_kernel}, {&model.conv1.bias, &grads.conv1_bias},
        {&model.bn1.gamma, &grads.bn1_gamma},       {&model.bn1.beta, &grads.bn1_beta},
        {&model.conv2.kernel, &grads.conv2_kernel}, {&model.conv2.bias, &grads.conv2_bias},
        {&model.bn2.gamma, &grads.bn2_gamma},       {&model.bn2.beta, &grads.bn2_beta},
        {&model.fc.weights, &grads.fc_weights},     {&model.fc.bias, &grads.fc_bias},
    };
    const double eps = 1e-5;
    double worst = 0.0;
    long checked = 0;
    for (const Ref& ref : refs) {
        for (std::size_t i = 0; i < ref.p->size(); ++i) {
            const double saved = (*ref.p)[i];
            (*ref.p)[i] = saved + eps;
            const double up = nn::training_loss(model, batch, labels);
            (*ref.p)[i] = saved - eps;
            const double down = nn::training_loss(model, batch, labels);
            (*ref.p)[i] = saved;
            const double fd = (up - down) / (2.0 * eps);
            const double an = (*ref.g)[i];
            ++checked;
            // FD noise floor: both sides are zero to the oracle's resolution.
            if (std::abs(fd - an) <= 1e-9) continue;
            const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8});
            worst = std::max(worst, rel);
        }
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool ok = worst <= 1e-3 && secs < 30.0;
    return {ok, fmt("%ld parameters, worst rel err %.3g, %.1fs", checked, worst, secs)};
}

std::pair<bool, std::string> threshold_oracle() {
    // Exact on the two-spike histogram.
    GrayImage spikes(100, 2);
    for (int i = 0; i < 200; ++i)
        spikes.data[static_cast<std::size_t>(i)] = (i < 100) ? 50.0 / 255.0 : 200.0 / 255.0;
    if (std::abs(pnx::intermeans_threshold(spikes) - 125.0 / 255.0) > 1e-12)
        return {false, "two-spike case missed 125/255"};

    Rng rng(11);
    int worst_gap = 0;
    for (int trial = 0; trial < 100; ++trial) {
        // Random multi-modal histogram realized as an image.
        GrayImage img(64, 64);
        const int modes = 1 + static_cast<int>(rng.below(4));
        std::vector<double> centers, sigmas;
        for (int m = 0; m < modes; ++m) {
            centers.push_back(rng.uniform(0.05, 0.95));
            sigmas.push_back(rng.uniform(0.01, 0.12));
        }
        for (double& v : img.data) {
            const int m = static_cast<int>(rng.below(static_cast<std::uint64_t>(modes)));
            v = std::clamp(centers[static_cast<std::size_t>(m)] +
                               sigmas[static_cast<std::size_t>(m)] * rng.normal(),
                           0.0, 1.0);
        }
        const double t = pnx::intermeans_threshold(img) * 255.0;

        std::vector<long> hist(256, 0);
        for (double v : img.data) ++hist[static_cast<std::size_t>(std::lround(v * 255.0))];
        // Fixed point within one bin, cross-checked against the exhaustive
        // scan (multimodal histograms may hold several fixed points; the
        // returned threshold must sit within one bin of a scan-verified one).
        if (std::abs(t - oracle::intermeans_step(hist, t)) > 1.0)
            return {false, fmt("trial %d: %.3f violates the fixed-point condition", trial, t)};
        const std::vector<int> candidates = oracle::intermeans_scan_all(hist);
        double gap = 1e300;
        for (int c : candidates) gap = std::min(gap, std::abs(t - c));
        worst_gap = std::max(worst_gap, static_cast<int>(std::ceil(gap - 1e-9)));
        if (gap > 1.0)
            return {false, fmt("trial %d: %.3f not within 1 bin of any scan fixed point", trial, t)};
    }
    return {true, fmt("100 histograms: fixed point within 1 bin of the exhaustive scan (worst %d)",
                      worst_gap)};
}

std::pair<bool, std::string> component_oracle() {
    Rng rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        BinaryImage img(64, 64);
        const double density = rng.uniform(0.2, 0.6);
        for (auto& v : img.data) v = rng.uniform() < density ? 1 : 0;
        const int min_px = 1 + static_cast<int>(rng.below(30));
        for (int conn : {4, 8}) {
            const BinaryImage got = pnx::remove_small_components(img, min_px, conn);
            const BinaryImage want = oracle::flood_fill_filter(img, min_px, conn);
            if (got.data != want.data)
                return {false, fmt("trial %d conn %d min_px %d differs from flood fill", trial, conn, min_px)};
        }
    }
    return {true, "100 random 64x64 images match flood-fill filtering, both connectivities"};
}

std::pair<bool, std::string> auc_and_metrics_oracle() {
    Rng rng(9);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 10 + static_cast<int>(rng.below(190));
        std::vector<double> scores(static_cast<std::size_t>(n));
        std::vector<int> truths(static_cast<std::size_t>(n));
        long pos = 0;
        for (int i = 0; i < n; ++i) {
            scores[static_cast<std::size_t>(i)] = std::round(rng.uniform() * 25.0) / 25.0;
            truths[static_cast<std::size_t>(i)] = rng.uniform() < 0.5;
            pos += truths[static_cast<std::size_t>(i)];
        }
        if (pos == 0 || pos == n) {
            truths[0] = 1 - truths[0];
        }
        const double auc = eval::roc_auc(scores, truths).auc;
        const double mw = oracle::mann_whitney_auc(scores, truths);
        if (std::abs(auc - mw) > 1e-12)
            return {false, fmt("trial %d: auc %.15f vs MW %.15f", trial, auc, mw)};
    }
    // Metrics by direct substitution on random confusion matrices.
    for (int trial = 0; trial < 100; ++trial) {
        const long tp = static_cast<long>(rng.below(50)) + 1;
        const long fn = static_cast<long>(rng.below(50)) + 1;
        const long fp = static_cast<long>(rng.below(50)) + 1;
        const long tn = static_cast<long>(rng.below(50)) + 1;
        const eval::Metrics m = eval::metrics({tp, fn, fp, tn});
        const double se = static_cast<double>(tp) / static_cast<double>(tp + fn);
        const double sp = static_cast<double>(tn) / static_cast<double>(fp + tn);
        const double pr = static_cast<double>(tp) / static_cast<double>(tp + fp);
        const double ac = static_cast<double>(tp + tn) / static_cast<double>(tp + fn + fp + tn);
        if (std::abs(m.se.value() - se) > 1e-15 || std::abs(m.sp.value() - sp) > 1e-15 ||
            std::abs(m.pr.value() - pr) > 1e-15 || std::abs(m.ac.value() - ac) > 1e-15)
            return {false, "metric substitution mismatch"};
    }
    return {true, "AUC = Mann-Whitney to 1e-12 on 100 instances; metrics match direct substitution"};
}

std::pair<bool, std::string> synthetic_end_to_end() {
    const pnx::PipelineConfig cfg;
    double worst_recall = 1.0, worst_fp = 0.0;
    for (int seed = 0; seed < 20; ++seed) {
        data::SynthParams params;
        params.seed = static_cast<std::uint64_t>(seed);
        const data::SynthImage synth = data::synth_network_image(params);
        const pnx::PnResult res = pnx::extract_pigment_network(synth.image, cfg);
        if (!res.detected) return {false, fmt("seed %d: no detection", seed)};

        std::size_t hit = 0, truth = 0, pred = 0;
        for (std::size_t i = 0; i < synth.mask.data.size(); ++i) {
            truth += synth.mask.data[i];
            pred += res.mask.data[i];
            hit += (synth.mask.data[i] && res.mask.data[i]);
        }
        const double recall = static_cast<double>(hit) / static_cast<double>(truth);
        const double fp_frac =
            pred > 0 ? static_cast<double>(pred - hit) / static_cast<double>(pred) : 0.0;
        worst_recall = std::min(worst_recall, recall);
        worst_fp = std::max(worst_fp, fp_frac);
        if (recall < 0.70) return {false, fmt("seed %d: recall %.3f < 0.70", seed, recall)};
        if (fp_frac > 0.30) return {false, fmt("seed %d: FP fraction %.3f > 0.30", seed, fp_frac)};
    }
    Rng rng(77);
    for (int i = 0; i < 20; ++i) {
        RgbImage flat(256, 256);
        const std::uint8_t r = static_cast<std::uint8_t>(rng.below(256));
        const std::uint8_t g = static_cast<std::uint8_t>(rng.below(256));
        const std::uint8_t b = static_cast<std::uint8_t>(rng.below(256));
        for (std::size_t p = 0; p < flat.data.size(); p += 3) {
            flat.data[p] = r;
            flat.data[p + 1] = g;
            flat.data[p + 2] = b;
        }
        if (pnx::extract_pigment_network(flat, cfg).detected)
            return {false, fmt("constant image %d falsely detected", i)};
    }
    return {true, fmt("20 grids recovered (worst recall %.3f, worst FP %.3f); 20 constants rejected",
                      worst_recall, worst_fp)};
}

std::pair<bool, std::string> determinism() {
    // Pipeline: identical bytes across runs.
    data::SynthParams params;
    params.seed = 4;
    const data::SynthImage synth = data::synth_network_image(params);
    const pnx::PipelineConfig cfg;
    const pnx::PnResult r1 = pnx::extract_pigment_network(synth.image, cfg);
    const pnx::PnResult r2 = pnx::extract_pigment_network(synth.image, cfg);
    if (r1.mask.data != r2.mask.data || r1.colorized.data != r2.colorized.data ||
        r1.threshold_level != r2.threshold_level)
        return {false, "pipeline runs differ"};

    // CNN training: byte-identical serialized models.
    Rng rng(3);
    std::vector<nn::LabeledRaster> train, val;
    for (int i = 0; i < 8; ++i) {
        RgbImage img(16, 16,
                     static_cast<std::uint8_t>(i % 2 ? 180 + rng.below(40) : 40 + rng.below(40)));
        (i < 6 ? train : val).push_back({std::move(img), i % 2});
    }
    nn::CnnConfig ccfg;
    ccfg.input_h = ccfg.input_w = 16;
    nn::TrainOptions opt;
    opt.max_epochs = 3;
    opt.batch_size = 4;
    opt.seed = 21;
    const auto m1 = nn::train_cnn(train, val, ccfg, opt);
    const auto m2 = nn::train_cnn(train, val, ccfg, opt);
    if (nn::serialize_model(m1.model) != nn::serialize_model(m2.model))
        return {false, "CNN training not reproducible"};

    // BoF training: byte-identical serialized models.
    std::vector<bof::BofSample> bof_train;
    for (int i = 0; i < 6; ++i) {
        data::SynthParams sp;
        sp.width = sp.height = 96;
        sp.spacing = i % 2 ? 10 : 20;
        sp.seed = static_cast<std::uint64_t>(i);
        bof_train.push_back({rgb_to_luma(data::synth_network_image(sp).image), i % 2});
    }
    const bof::BofModel b1 = bof::train_bof(bof_train, 8, 13);
    const bof::BofModel b2 = bof::train_bof(bof_train, 8, 13);
    if (bof::serialize_bof(b1) != bof::serialize_bof(b2))
        return {false, "BoF training not reproducible"};

    // Batch extraction: --jobs 1 and --jobs 8 byte-identical on disk.
    const fs::path root = fs::temp_directory_path() / "pnkit_acceptance_jobs";
    fs::remove_all(root);
    fs::create_directories(root / "src");
    std::vector<data::LabeledImage> items;
    for (int i = 0; i < 6; ++i) {
        data::SynthParams sp;
        sp.width = sp.height = 96;
        sp.spacing = 16;
        sp.seed = static_cast<std::uint64_t>(i);
        const std::string id = "img" + std::to_string(i);
        save_png((root / "src" / (id + ".png")).string(), data::synth_network_image(sp).image);
        items.push_back({id, (root / "src" / (id + ".png")).string(), i % 2});
    }
    pnx::PipelineConfig small = cfg;
    small.resize_width = small.resize_height = 128;
    small.min_component_px = 40;
    data::build_pn_dataset(items, small, {}, (root / "j1").string(), 1);
    data::build_pn_dataset(items, small, {}, (root / "j8").string(), 8);
    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    };
    if (slurp(root / "j1" / "manifest.csv") != slurp(root / "j8" / "manifest.csv"))
        return {false, "manifests differ across thread counts"};
    for (const auto& item : items)
        if (slurp(root / "j1" / (item.id + "_pn.png")) != slurp(root / "j8" / (item.id + "_pn.png")))
            return {false, "PNG bytes differ across thread counts"};

    return {true, "pipeline, CNN, BoF and jobs-1/8 batch outputs byte-identical"};
}

std::pair<bool, std::string> color_roundtrip() {
    RgbImage anchors(2, 1);
    anchors.pixel(1, 0)[0] = anchors.pixel(1, 0)[1] = anchors.pixel(1, 0)[2] = 255;
    const PlanarImage lab = rgb_to_lab(anchors);
    if (std::abs(lab.at(0, 0, 0)) > 0.01) return {false, "black L* not 0"};
    if (std::abs(lab.at(0, 1, 0) - 100.0) > 0.01) return {false, "white L* not 100"};

    Rng rng(123);
    RgbImage img(1000, 1);
    for (auto& v : img.data) v = static_cast<std::uint8_t>(rng.below(256));
    const PlanarImage all = rgb_to_lab(img);
    double worst = 0.0;
    for (int x = 0; x < 1000; ++x) {
        double r, g, b;
        oracle::lab_to_srgb_ref(all.at(0, x, 0), all.at(1, x, 0), all.at(2, x, 0), r, g, b);
        const std::uint8_t* p = img.pixel(x, 0);
        worst = std::max({worst, std::abs(r - p[0]), std::abs(g - p[1]), std::abs(b - p[2])});
        if (worst > 1.0) return {false, fmt("pixel %d off by %.3f", x, worst)};
    }
    return {true, fmt("1000 pixels round-trip within +-1 (worst %.4f); anchors exact", worst)};
}

// --- dataset-dependent criteria ---------------------------------------------------

struct Ph2Env {
    std::string dir, labels, overrides;
    bool available() const { return !dir.empty() && !labels.empty(); }
};

Ph2Env ph2_env() {
    Ph2Env env;
    if (const char* d = std::getenv("PNKIT_PH2_DIR")) env.dir = d;
    if (const char* l = std::getenv("PNKIT_PH2_LABELS")) env.labels = l;
    if (const char* o = std::getenv("PNKIT_PH2_OVERRIDES")) env.overrides = o;
    return env;
}

constexpr const char* kSkipMsg =
    "set PNKIT_PH2_DIR and PNKIT_PH2_LABELS to run against the PH2 corpus";

struct ClassifierScores {
    double ac = 0.0, se = 0.0, sp = 0.0, auc = 0.0;
};

double median5(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

ClassifierScores eval_cnn(const nn::CnnModel& model, const std::vector<data::LabeledImage>& val) {
    std::vector<int> preds, truths;
    std::vector<double> scores;
    for (const auto& item : val) {
        const auto p = nn::predict(model, load_image(item.path));
        preds.push_back(p.label);
        truths.push_back(item.label);
        scores.push_back(p.probs[1]);
    }
    const auto cm = eval::confusion(preds, truths);
    const auto m = eval::metrics(cm);
    ClassifierScores out;
    out.ac = m.ac.value_or(0.0);
    out.se = m.se.value_or(0.0);
    out.sp = m.sp.value_or(0.0);
    out.auc = eval::roc_auc(scores, truths).auc;
    return out;
}

// Full protocol run of both classifiers on one labeled corpus for one seed.
struct ProtocolResult {
    ClassifierScores cnn;
    ClassifierScores bof;
};

ProtocolResult run_protocol(const std::vector<data::LabeledImage>& items, std::uint64_t seed) {
    const data::SplitResult split = data::stratified_split(items, 0.8, seed);

    std::vector<nn::LabeledRaster> train, val;
    for (const auto& item : split.train) train.push_back({load_image(item.path), item.label});
    for (const auto& item : split.val) val.push_back({load_image(item.path), item.label});

    nn::TrainOptions opt;
    opt.seed = seed;
    const nn::CnnConfig cfg;  // published architecture, 280x280x3
    const auto trained = nn::train_cnn(train, val, cfg, opt);

    ProtocolResult out;
    out.cnn = eval_cnn(trained.model, split.val);

    auto to_gray = [](const data::LabeledImage& item) {
        const RgbImage img = load_image(item.path);
        return rgb_to_luma(img.width == 512 && img.height == 512 ? img
                                                                 : resize_image(img, 512, 512));
    };
    std::vector<bof::BofSample> bof_train;
    for (const auto& item : split.train) bof_train.push_back({to_gray(item), item.label});
    const bof::BofModel bmodel = bof::train_bof(bof_train, 500, seed);
    std::vector<int> preds, truths;
    std::vector<double> scores;
    for (const auto& item : split.val) {
        const auto p = bof::predict_bof(bmodel, to_gray(item));
        preds.push_back(p.label);
        truths.push_back(item.label);
        scores.push_back(p.score);
    }
    const auto m = eval::metrics(eval::confusion(preds, truths));
    out.bof.ac = m.ac.value_or(0.0);
    out.bof.se = m.se.value_or(0.0);
    out.bof.sp = m.sp.value_or(0.0);
    out.bof.auc = eval::roc_auc(scores, truths).auc;
    return out;
}

}  // namespace

int main() {
    Harness h;

    h.run("gradient-check", gradient_check);
    h.run("threshold-oracle", threshold_oracle);
    h.run("component-filter-oracle", component_oracle);
    h.run("auc-and-metrics-oracle", auc_and_metrics_oracle);
    h.run("synthetic-end-to-end", synthetic_end_to_end);
    h.run("determinism", determinism);
    h.run("color-conversion", color_roundtrip);

    const Ph2Env env = ph2_env();
    if (!env.available()) {
        for (const char* name :
             {"ph2-detection-rate", "ph2-per-class-rates", "cnn-derived-metrics",
              "cnn-raw-vs-derived", "bof-derived-metrics", "auc-ordering"})
            h.skip(name, kSkipMsg);
    } else {
        const auto items = data::load_labeled_dataset(env.dir, env.labels);
        const fs::path derived_dir = fs::temp_directory_path() / "pnkit_acceptance_derived";
        fs::remove_all(derived_dir);

        // Detection success over the full corpus, default configuration.
        std::vector<data::ManifestRow> rows;
        h.run("ph2-detection-rate", [&]() -> std::pair<bool, std::string> {
            const auto t0 = std::chrono::steady_clock::now();
            const int jobs = std::max(1u, std::thread::hardware_concurrency());
            rows = data::build_pn_dataset(items, pnx::PipelineConfig{}, {}, derived_dir.string(),
                                          jobs);
            const double secs =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            long detected = 0;
            for (const auto& row : rows) detected += row.detected ? 1 : 0;
            const bool ok = detected >= 190 && secs <= 300.0;
            std::string detail = fmt("%ld/%zu detected in %.0fs (paper: 192/200)", detected,
                                     rows.size(), secs);
            if (!env.overrides.empty()) {
                const auto table = data::load_overrides_csv(env.overrides);
                const auto rows2 = data::build_pn_dataset(items, pnx::PipelineConfig{}, table,
                                                          derived_dir.string(), jobs);
                long det2 = 0;
                for (const auto& row : rows2) det2 += row.detected ? 1 : 0;
                detail += fmt("; with overrides %ld/%zu", det2, rows2.size());
                return {ok && det2 == static_cast<long>(rows2.size()), detail};
            }
            return {ok, detail};
        });

        h.run("ph2-per-class-rates", [&]() -> std::pair<bool, std::string> {
            std::vector<eval::DetectionFlag> flags;
            for (const auto& row : rows) flags.push_back({row.label, row.detected});
            const auto rates = eval::detection_rates(flags);
            const double tpn = rates.typical.value_or(0.0) * 100.0;
            const double apn = rates.atypical.value_or(0.0) * 100.0;
            const bool ok = std::abs(tpn - 95.18) <= 3.0 && std::abs(apn - 96.59) <= 3.0;
            return {ok, fmt("TPN %.2f%% (95.18 +-3), APN %.2f%% (96.59 +-3)", tpn, apn)};
        });

        // Derived PN corpus as a labeled dataset for the classifiers.
        std::vector<data::LabeledImage> derived_items;
        for (const auto& item : items)
            derived_items.push_back(
                {item.id, (derived_dir / (item.id + "_pn.png")).string(), item.label});

        // Each protocol run is single-threaded and deterministic, so the
        // five seeds can run concurrently.
        const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
        std::vector<ProtocolResult> on_derived(seeds.size()), on_raw(seeds.size());
        auto run_all = [&](const std::vector<data::LabeledImage>& corpus,
                           std::vector<ProtocolResult>& out) {
            std::vector<std::thread> pool;
            for (std::size_t i = 0; i < seeds.size(); ++i)
                pool.emplace_back([&, i]() { out[i] = run_protocol(corpus, seeds[i]); });
            for (auto& t : pool) t.join();
        };
        const auto t0 = std::chrono::steady_clock::now();
        run_all(derived_items, on_derived);
        const double derived_secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        run_all(items, on_raw);

        h.run("cnn-derived-metrics", [&]() -> std::pair<bool, std::string> {
            std::vector<double> ac, se, sp;
            for (const auto& r : on_derived) {
                ac.push_back(r.cnn.ac);
                se.push_back(r.cnn.se);
                sp.push_back(r.cnn.sp);
            }
            const double mac = median5(ac), mse = median5(se), msp = median5(sp);
            const bool ok = std::abs(mac - 0.90) <= 0.07 && std::abs(mse - 0.90) <= 0.07 &&
                            std::abs(msp - 0.89) <= 0.07 && derived_secs <= 3600.0;
            return {ok, fmt("median AC %.3f SE %.3f SP %.3f over 5 seeds (%.0fs)", mac, mse, msp,
                            derived_secs)};
        });

        h.run("cnn-raw-vs-derived", [&]() -> std::pair<bool, std::string> {
            std::vector<double> raw_ac;
            for (const auto& r : on_raw) raw_ac.push_back(r.cnn.ac);
            const double mraw = median5(raw_ac);
            bool all_exceed = true;
            for (std::size_t i = 0; i < seeds.size(); ++i)
                all_exceed = all_exceed && on_derived[i].cnn.ac > on_raw[i].cnn.ac;
            const bool ok = std::abs(mraw - 0.80) <= 0.07 && all_exceed;
            return {ok, fmt("raw median AC %.3f (0.80 +-0.07); derived > raw at all seeds: %s",
                            mraw, all_exceed ? "yes" : "no")};
        });

        h.run("bof-derived-metrics", [&]() -> std::pair<bool, std::string> {
            std::vector<double> ac;
            bool cnn_ge_bof = true;
            for (std::size_t i = 0; i < seeds.size(); ++i) {
                ac.push_back(on_derived[i].bof.ac);
                cnn_ge_bof = cnn_ge_bof && on_derived[i].cnn.ac >= on_derived[i].bof.ac;
            }
            const double mac = median5(ac);
            const bool ok = std::abs(mac - 0.85) <= 0.08 && cnn_ge_bof;
            return {ok, fmt("BoF median AC %.3f (0.85 +-0.08); CNN >= BoF at all seeds: %s", mac,
                            cnn_ge_bof ? "yes" : "no")};
        });

        h.run("auc-ordering", [&]() -> std::pair<bool, std::string> {
            std::vector<double> cnn_d, bof_d, cnn_r, bof_r;
            for (std::size_t i = 0; i < seeds.size(); ++i) {
                cnn_d.push_back(on_derived[i].cnn.auc);
                bof_d.push_back(on_derived[i].bof.auc);
                cnn_r.push_back(on_raw[i].cnn.auc);
                bof_r.push_back(on_raw[i].bof.auc);
            }
            const double mcd = median5(cnn_d), mbd = median5(bof_d);
            const double mcr = median5(cnn_r), mbr = median5(bof_r);
            const bool ok = mcd > mcr && mbd > mbr && std::abs(mcd - 0.84) <= 0.08 &&
                            std::abs(mbd - 0.80) <= 0.08;
            return {ok, fmt("derived CNN %.3f BoF %.3f vs raw CNN %.3f BoF %.3f", mcd, mbd, mcr,
                            mbr)};
        });
    }

    std::printf("acceptance: %d passed, %d failed, %d skipped\n", h.passed, h.failed, h.skipped);
    return h.failed == 0 ? 0 : 1;
}
