// pnkit command-line tool: pigment-network extraction, derived-dataset
// building, CNN/BoF training and evaluation.

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include <pnkit/bof.hpp>
#include <pnkit/color.hpp>
#include <pnkit/data.hpp>
#include <pnkit/eval.hpp>
#include <pnkit/imageio.hpp>
#include <pnkit/nn.hpp>
#include <pnkit/pnextract.hpp>
#include <pnkit/resize.hpp>

namespace fs = std::filesystem;
using namespace pnkit;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitIo = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDataset = 3;

int exit_code_for(const Error& e) {
    switch (e.code()) {
        case Errc::bad_config:
        case Errc::invalid_level:
            return kExitConfig;
        case Errc::missing_image:
        case Errc::bad_label:
        case Errc::duplicate_id:
        case Errc::class_too_small:
        case Errc::empty_dataset:
        case Errc::empty_class:
        case Errc::empty_input:
            return kExitDataset;
        default:
            return kExitIo;
    }
}

struct PipelineFlags {
    pnx::PipelineConfig cfg;
    std::vector<double> weights;  // set when --weights given
    std::string smoother = "box10";
    std::string colorspace = "lab";

    void apply() {
        if (!weights.empty()) {
            if (weights.size() != 3)
                raise(Errc::bad_config, "--weights needs exactly three values r,g,b");
            cfg.channel_weights.w = {weights[0], weights[1], weights[2]};
        }
        if (smoother == "box10")
            cfg.smoother = pnx::Smoother::box10;
        else if (smoother == "gaussian")
            cfg.smoother = pnx::Smoother::gaussian;
        else
            raise(Errc::bad_config, "--smoother must be box10 or gaussian");
        if (colorspace == "lab")
            cfg.colorspace = pnx::Colorspace::lab;
        else if (colorspace == "hsv")
            cfg.colorspace = pnx::Colorspace::hsv;
        else
            raise(Errc::bad_config, "--colorspace must be lab or hsv");
        cfg.validate();
    }
};

void add_pipeline_flags(CLI::App* cmd, PipelineFlags& f) {
    cmd->add_option("--threshold-offset", f.cfg.threshold_offset,
                    "Binarization offset below the computed level (0..0.05)");
    cmd->add_option("--min-component", f.cfg.min_component_px,
                    "Connected components smaller than this are noise");
    cmd->add_option("--weights", f.weights, "Channel weights r,g,b")->delimiter(',');
    cmd->add_option("--smoother", f.smoother, "Smoothing filter: box10|gaussian");
    cmd->add_option("--gaussian-sigma", f.cfg.gaussian_sigma, "Sigma for the gaussian smoother");
    cmd->add_option("--colorspace", f.colorspace, "Color space: lab|hsv");
    cmd->add_option("--clahe-clip", f.cfg.clahe_clip, "CLAHE clip fraction (0..1)");
    cmd->add_option("--clahe-bins", f.cfg.clahe_bins, "CLAHE histogram bins");
    cmd->add_option("--connectivity", f.cfg.connectivity, "Component connectivity: 4|8");
    cmd->add_flag("--subtract-flipped", f.cfg.subtract_flipped,
                  "Subtract smoothed from enhanced instead");
}

// Key=value config file applied after parsing: command-line flags win,
// unknown keys are rejected.
void apply_config_file(CLI::App* cmd, const std::string& path) {
    if (path.empty()) return;
    std::ifstream in(path);
    if (!in) raise(Errc::unreadable_file, "cannot open config file " + path);
    std::string line;
    int lineno = 0;
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return std::string();
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    };
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            raise(Errc::bad_config, path + ":" + std::to_string(lineno) + ": expected key=value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        CLI::Option* op = cmd->get_option_no_throw("--" + key);
        if (op == nullptr)
            raise(Errc::bad_config, path + ": unknown config key '" + key + "'");
        if (op->count() > 0) continue;  // explicitly given flags take precedence
        op->add_result(value);
        op->run_callback();
    }
}

std::vector<fs::path> collect_inputs(const std::string& input) {
    std::vector<fs::path> files;
    if (fs::is_directory(input)) {
        for (const auto& entry : fs::directory_iterator(input)) {
            if (!entry.is_regular_file()) continue;
            std::string ext = entry.path().extension().string();
            std::transform(ext.begin(), ext.end(), ext.begin(),
                           [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
            if (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp")
                files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        if (files.empty()) raise(Errc::empty_input, "no images in " + input);
    } else if (fs::is_regular_file(input)) {
        files.emplace_back(input);
    } else {
        raise(Errc::unreadable_file, "input not found: " + input);
    }
    return files;
}

// --- extract -----------------------------------------------------------------

int cmd_extract(const std::string& input, const std::string& out_dir, PipelineFlags& flags,
                bool emit_stages, int jobs) {
    flags.apply();
    if (jobs < 1) raise(Errc::bad_config, "--jobs must be >= 1");
    const auto files = collect_inputs(input);
    fs::create_directories(out_dir);

    struct Line {
        std::string id;
        bool detected = false;
        double threshold = 0.0;
    };
    std::vector<Line> lines(files.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= files.size()) return;
            const std::string id = files[i].stem().string();
            const RgbImage img = load_image(files[i].string());
            const pnx::PnResult res = pnx::extract_pigment_network(img, flags.cfg);
            const fs::path dir = fs::path(out_dir) / id;
            if (emit_stages) {
                pnx::write_stages(res, dir.string());
            } else {
                fs::create_directories(dir);
                save_png((dir / "09_colorized.png").string(), res.colorized);
            }
            lines[i] = {id, res.detected, res.threshold_level};
        }
    };
    if (jobs == 1 || files.size() <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < std::min<int>(jobs, static_cast<int>(files.size())); ++t)
            pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    for (const auto& l : lines)
        std::printf("%s %s %.6g\n", l.id.c_str(), l.detected ? "true" : "false", l.threshold);
    return kExitOk;
}

// --- dataset build -------------------------------------------------------------

int cmd_dataset_build(const std::string& data_dir, const std::string& labels_csv,
                      const std::string& out_dir, const std::string& overrides_csv,
                      PipelineFlags& flags, int jobs) {
    flags.apply();
    const auto items = data::load_labeled_dataset(data_dir, labels_csv);
    data::OverrideTable overrides;
    if (!overrides_csv.empty()) overrides = data::load_overrides_csv(overrides_csv);
    const auto rows = data::build_pn_dataset(items, flags.cfg, overrides, out_dir, jobs);

    long detected = 0, failed = 0;
    for (const auto& row : rows) {
        detected += row.detected ? 1 : 0;
        failed += row.failed ? 1 : 0;
    }
    std::printf("images: %zu detected: %ld failed: %ld\n", rows.size(), detected, failed);
    std::printf("manifest: %s\n", (fs::path(out_dir) / "manifest.csv").string().c_str());
    return kExitOk;
}

// --- training ------------------------------------------------------------------

std::vector<nn::LabeledRaster> load_rasters(const std::vector<data::LabeledImage>& items) {
    std::vector<nn::LabeledRaster> out;
    out.reserve(items.size());
    for (const auto& item : items) out.push_back({load_image(item.path), item.label});
    return out;
}

int cmd_train_cnn(const std::string& data_dir, const std::string& labels_csv,
                  const std::string& model_path, const std::string& log_path,
                  std::uint64_t seed, int epochs, double lr, int batch_size, int val_freq,
                  double train_fraction, int input_size) {
    std::printf("seed: %llu\n", static_cast<unsigned long long>(seed));
    const auto items = data::load_labeled_dataset(data_dir, labels_csv);
    const auto split = data::stratified_split(items, train_fraction, seed);

    nn::TrainOptions options;
    options.seed = seed;
    options.max_epochs = epochs;
    options.learning_rate = lr;
    options.batch_size = batch_size;
    options.validation_frequency = val_freq;
    if (options.learning_rate <= 0.0 || options.max_epochs < 1)
        raise(Errc::bad_config, "invalid --epochs/--lr");
    if (input_size < 8) raise(Errc::bad_config, "--input-size must be >= 8");

    nn::CnnConfig config;
    config.input_h = config.input_w = input_size;
    const auto result =
        nn::train_cnn(load_rasters(split.train), load_rasters(split.val), config, options);
    nn::save_model(result.model, model_path);
    if (!log_path.empty()) nn::write_training_log_csv(result.log, log_path);
    std::printf("final validation accuracy: %.4f\n", result.model.final_val_accuracy);
    std::printf("model: %s\n", model_path.c_str());
    return kExitOk;
}

GrayImage bof_grayscale(const RgbImage& img) {
    // The BoF path standardizes on the pipeline raster size.
    return rgb_to_luma(img.width == 512 && img.height == 512 ? img : resize_image(img, 512, 512));
}

int cmd_train_bof(const std::string& data_dir, const std::string& labels_csv,
                  const std::string& model_path, std::uint64_t seed, int vocab_size,
                  double train_fraction) {
    std::printf("seed: %llu\n", static_cast<unsigned long long>(seed));
    const auto items = data::load_labeled_dataset(data_dir, labels_csv);
    const auto split = data::stratified_split(items, train_fraction, seed);

    std::vector<bof::BofSample> train;
    for (const auto& item : split.train)
        train.push_back({bof_grayscale(load_image(item.path)), item.label});
    const bof::BofModel model = bof::train_bof(train, vocab_size, seed);
    bof::save_bof(model, model_path);

    long correct = 0;
    for (const auto& item : split.val) {
        const auto pred = bof::predict_bof(model, bof_grayscale(load_image(item.path)));
        correct += (pred.label == item.label) ? 1 : 0;
    }
    std::printf("validation accuracy: %.4f\n",
                static_cast<double>(correct) / static_cast<double>(split.val.size()));
    std::printf("model: %s\n", model_path.c_str());
    return kExitOk;
}

// --- eval ----------------------------------------------------------------------

int cmd_eval(const std::string& model_path, const std::string& data_dir,
             const std::string& labels_csv, const std::string& report_path,
             const std::string& roc_path) {
    const auto items = data::load_labeled_dataset(data_dir, labels_csv);

    std::ifstream probe(model_path, std::ios::binary);
    if (!probe) raise(Errc::unreadable_file, "cannot open " + model_path);
    char magic[9] = {};
    probe.read(magic, 9);
    probe.close();

    std::vector<int> preds, truths;
    std::vector<double> scores;
    if (std::string(magic, 9) == "PNKITCNN1") {
        const nn::CnnModel model = nn::load_model(model_path);
        for (const auto& item : items) {
            const auto pred = nn::predict(model, load_image(item.path));
            preds.push_back(pred.label);
            truths.push_back(item.label);
            scores.push_back(pred.probs[1]);  // P(atypical) drives the ROC
        }
    } else if (std::string(magic, 9) == "PNKITBOF1") {
        const bof::BofModel model = bof::load_bof(model_path);
        for (const auto& item : items) {
            const auto pred = bof::predict_bof(model, bof_grayscale(load_image(item.path)));
            preds.push_back(pred.label);
            truths.push_back(item.label);
            scores.push_back(pred.score);
        }
    } else {
        raise(Errc::unsupported_format, model_path + " is not a pnkit model container");
    }

    const auto cm = eval::confusion(preds, truths);
    const auto m = eval::metrics(cm);
    std::optional<double> auc;
    bool both_classes = false;
    {
        long pos = 0;
        for (int t : truths) pos += (t == 1);
        both_classes = pos > 0 && pos < static_cast<long>(truths.size());
    }
    if (both_classes) {
        const auto roc = eval::roc_auc(scores, truths);
        auc = roc.auc;
        if (!roc_path.empty()) eval::write_roc_csv(roc.points, roc_path);
    }
    const std::string json = eval::report_json(cm, m, auc);
    if (!report_path.empty()) {
        std::ofstream out(report_path);
        if (!out) raise(Errc::unreadable_file, "cannot write " + report_path);
        out << json;
    }
    std::fputs(json.c_str(), stdout);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"pigment-network extraction and classification toolkit"};
    app.require_subcommand(1);

    std::string ex_config, db_config, tc_config, tb_config, ev_config;

    // extract
    auto* extract = app.add_subcommand("extract", "Isolate the pigment network from images");
    std::string ex_input, ex_out = "pn_out";
    bool ex_stages = false;
    int ex_jobs = 1;
    PipelineFlags ex_flags;
    extract->add_option("input", ex_input, "Image file or directory")->required();
    extract->add_option("--out", ex_out, "Output directory");
    extract->add_flag("--emit-stages", ex_stages, "Write all nine stage images");
    extract->add_option("--jobs", ex_jobs, "Worker threads for batch input");
    add_pipeline_flags(extract, ex_flags);
    extract->add_option("--config", ex_config, "Key=value config file (flags win)");

    // dataset build
    auto* dataset = app.add_subcommand("dataset", "Dataset operations");
    dataset->require_subcommand(1);
    auto* build = dataset->add_subcommand("build", "Build the derived PN-only dataset");
    std::string db_data, db_labels, db_out = "pn_dataset", db_overrides;
    int db_jobs = 1;
    PipelineFlags db_flags;
    build->add_option("--data", db_data, "Directory with source images")->required();
    build->add_option("--labels", db_labels, "Labels CSV (image_id,pn_label)")->required();
    build->add_option("--out", db_out, "Output directory");
    build->add_option("--overrides", db_overrides, "Per-image threshold offsets CSV");
    build->add_option("--jobs", db_jobs, "Worker threads");
    add_pipeline_flags(build, db_flags);
    build->add_option("--config", db_config, "Key=value config file (flags win)");

    // train cnn / train bof
    auto* train = app.add_subcommand("train", "Train a classifier");
    train->require_subcommand(1);

    auto* tcnn = train->add_subcommand("cnn", "Train the CNN classifier");
    std::string tc_data, tc_labels, tc_model = "cnn.pnkit", tc_log;
    std::uint64_t tc_seed = 0;
    int tc_epochs = 250, tc_batch = 16, tc_valfreq = 25, tc_input = 280;
    double tc_lr = 0.01, tc_fraction = 0.8;
    tcnn->add_option("--data", tc_data, "Directory with images")->required();
    tcnn->add_option("--labels", tc_labels, "Labels CSV")->required();
    tcnn->add_option("--out", tc_model, "Model output path");
    tcnn->add_option("--log", tc_log, "Training log CSV path");
    tcnn->add_option("--seed", tc_seed, "Random seed");
    tcnn->add_option("--epochs", tc_epochs, "Training epochs");
    tcnn->add_option("--lr", tc_lr, "Learning rate");
    tcnn->add_option("--batch", tc_batch, "Mini-batch size");
    tcnn->add_option("--val-freq", tc_valfreq, "Iterations between validation passes");
    tcnn->add_option("--train-fraction", tc_fraction, "Training split fraction");
    tcnn->add_option("--input-size", tc_input, "Network input height/width");
    tcnn->add_option("--config", tc_config, "Key=value config file (flags win)");

    auto* tbof = train->add_subcommand("bof", "Train the bag-of-features classifier");
    std::string tb_data, tb_labels, tb_model = "bof.pnkit";
    std::uint64_t tb_seed = 0;
    int tb_vocab = 500;
    double tb_fraction = 0.8;
    tbof->add_option("--data", tb_data, "Directory with images")->required();
    tbof->add_option("--labels", tb_labels, "Labels CSV")->required();
    tbof->add_option("--out", tb_model, "Model output path");
    tbof->add_option("--seed", tb_seed, "Random seed");
    tbof->add_option("--vocab-size", tb_vocab, "Visual vocabulary size (K)");
    tbof->add_option("--train-fraction", tb_fraction, "Training split fraction");
    tbof->add_option("--config", tb_config, "Key=value config file (flags win)");

    // eval
    auto* ev = app.add_subcommand("eval", "Evaluate a trained model on labeled images");
    std::string ev_model, ev_data, ev_labels, ev_report = "report.json", ev_roc = "roc.csv";
    ev->add_option("--model", ev_model, "Model container (CNN or BoF)")->required();
    ev->add_option("--data", ev_data, "Directory with images")->required();
    ev->add_option("--labels", ev_labels, "Labels CSV")->required();
    ev->add_option("--report", ev_report, "Report JSON path");
    ev->add_option("--roc", ev_roc, "ROC points CSV path");
    ev->add_option("--config", ev_config, "Key=value config file (flags win)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (extract->parsed()) {
            apply_config_file(extract, ex_config);
            return cmd_extract(ex_input, ex_out, ex_flags, ex_stages, ex_jobs);
        }
        if (build->parsed()) {
            apply_config_file(build, db_config);
            return cmd_dataset_build(db_data, db_labels, db_out, db_overrides, db_flags, db_jobs);
        }
        if (tcnn->parsed()) {
            apply_config_file(tcnn, tc_config);
            return cmd_train_cnn(tc_data, tc_labels, tc_model, tc_log, tc_seed, tc_epochs, tc_lr,
                                 tc_batch, tc_valfreq, tc_fraction, tc_input);
        }
        if (tbof->parsed()) {
            apply_config_file(tbof, tb_config);
            return cmd_train_bof(tb_data, tb_labels, tb_model, tb_seed, tb_vocab, tb_fraction);
        }
        if (ev->parsed()) {
            apply_config_file(ev, ev_config);
            return cmd_eval(ev_model, ev_data, ev_labels, ev_report, ev_roc);
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "pnkit: %s\n", e.what());
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "pnkit: %s\n", e.what());
        return kExitIo;
    }
    return kExitOk;
}
