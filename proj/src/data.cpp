#include <pnkit/data.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <pnkit/imageio.hpp>
#include <pnkit/rng.hpp>

namespace fs = std::filesystem;

namespace pnkit::data {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    std::stringstream ss(line);
    while (std::getline(ss, cur, ',')) fields.push_back(cur);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::vector<std::string>> read_csv(const std::string& path,
                                               const std::string& expected_header) {
    std::ifstream in(path);
    if (!in) raise(Errc::unreadable_file, "cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) raise(Errc::empty_input, "empty CSV: " + path);
    if (trim(line) != expected_header)
        raise(Errc::bad_config, path + ": expected header '" + expected_header + "'");
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        for (auto& f : fields) f = trim(f);
        rows.push_back(std::move(fields));
    }
    return rows;
}

}  // namespace

std::vector<LabeledImage> load_labeled_dataset(const std::string& root,
                                               const std::string& labels_csv) {
    const auto rows = read_csv(labels_csv, "image_id,pn_label");
    if (rows.empty()) raise(Errc::empty_input, "no rows in " + labels_csv);

    static const char* kExtensions[] = {"", ".bmp", ".png", ".jpg", ".jpeg",
                                        ".BMP", ".PNG", ".JPG", ".JPEG"};
    std::vector<LabeledImage> items;
    std::set<std::string> seen;
    for (const auto& row : rows) {
        if (row.size() != 2) raise(Errc::bad_config, labels_csv + ": malformed row");
        LabeledImage item;
        item.id = row[0];
        if (!seen.insert(item.id).second)
            raise(Errc::duplicate_id, "duplicate image id: " + item.id);
        if (row[1] == "typical")
            item.label = 0;
        else if (row[1] == "atypical")
            item.label = 1;
        else
            raise(Errc::bad_label, "label for " + item.id + " must be typical|atypical");
        bool found = false;
        for (const char* ext : kExtensions) {
            const fs::path candidate = fs::path(root) / (item.id + ext);
            if (fs::is_regular_file(candidate)) {
                item.path = candidate.string();
                found = true;
                break;
            }
        }
        if (!found) raise(Errc::missing_image, "no image file for id " + item.id);
        items.push_back(std::move(item));
    }
    return items;
}

SplitResult stratified_split(const std::vector<LabeledImage>& items, double train_fraction,
                             std::uint64_t seed) {
    if (train_fraction <= 0.0 || train_fraction > 1.0)
        raise(Errc::bad_config, "stratified_split: fraction must be in (0,1]");
    std::vector<LabeledImage> classes[2];
    for (const auto& item : items) classes[item.label == 1 ? 1 : 0].push_back(item);
    if (classes[0].size() < 2 || classes[1].size() < 2)
        raise(Errc::class_too_small, "stratified_split: each class needs at least 2 items");

    Rng rng(seed);
    SplitResult out;
    for (auto& cls : classes) {
        rng.shuffle(cls);
        const auto n_train = static_cast<std::size_t>(
            std::lround(train_fraction * static_cast<double>(cls.size())));
        if (n_train == 0 || n_train == cls.size())
            raise(Errc::class_too_small, "stratified_split: a class would have an empty side");
        out.train.insert(out.train.end(), cls.begin(), cls.begin() + static_cast<long>(n_train));
        out.val.insert(out.val.end(), cls.begin() + static_cast<long>(n_train), cls.end());
    }
    return out;
}

OverrideTable load_overrides_csv(const std::string& path) {
    const auto rows = read_csv(path, "image_id,offset");
    OverrideTable table;
    for (const auto& row : rows) {
        if (row.size() != 2) raise(Errc::bad_config, path + ": malformed row");
        double offset = 0.0;
        try {
            offset = std::stod(row[1]);
        } catch (const std::exception&) {
            raise(Errc::bad_config, path + ": offset is not a number for " + row[0]);
        }
        if (offset < 0.001 || offset > 0.011)
            raise(Errc::bad_config, path + ": offset for " + row[0] + " outside [0.001, 0.011]");
        if (!table.emplace(row[0], offset).second)
            raise(Errc::duplicate_id, path + ": duplicate override for " + row[0]);
    }
    return table;
}

void write_manifest_csv(const std::vector<ManifestRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) raise(Errc::unreadable_file, "cannot write " + path);
    out << "image_id,label,detected,threshold_level,offset_used\n";
    char buf[64];
    for (const auto& row : rows) {
        std::snprintf(buf, sizeof(buf), "%.10g,%.10g\n", row.threshold_level, row.offset_used);
        out << row.id << ',' << (row.label == 1 ? "atypical" : "typical") << ','
            << (row.detected ? "true" : "false") << ',' << buf;
    }
}

std::vector<ManifestRow> build_pn_dataset(const std::vector<LabeledImage>& items,
                                          const pnx::PipelineConfig& cfg,
                                          const OverrideTable& overrides,
                                          const std::string& out_dir, int jobs) {
    cfg.validate();
    if (jobs < 1) raise(Errc::bad_config, "build_pn_dataset: jobs must be >= 1");
    fs::create_directories(out_dir);

    std::vector<ManifestRow> rows(items.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= items.size()) return;
            const LabeledImage& item = items[i];
            ManifestRow row;
            row.id = item.id;
            row.label = item.label;
            pnx::PipelineConfig local = cfg;
            if (const auto it = overrides.find(item.id); it != overrides.end())
                local.threshold_offset = it->second;
            row.offset_used = local.threshold_offset;
            try {
                const RgbImage img = load_image(item.path);
                const pnx::PnResult res = pnx::extract_pigment_network(img, local);
                row.detected = res.detected;
                row.threshold_level = res.threshold_level;
                save_png((fs::path(out_dir) / (item.id + "_pn.png")).string(), res.colorized);
            } catch (const Error& e) {
                row.failed = true;
                std::fprintf(stderr, "build_pn_dataset: %s: %s\n", item.id.c_str(), e.what());
            }
            rows[i] = std::move(row);
        }
    };

    if (jobs == 1 || items.size() <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        const int n = std::min<int>(jobs, static_cast<int>(items.size()));
        pool.reserve(static_cast<std::size_t>(n));
        for (int t = 0; t < n; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    std::sort(rows.begin(), rows.end(),
              [](const ManifestRow& a, const ManifestRow& b) { return a.id < b.id; });
    write_manifest_csv(rows, (fs::path(out_dir) / "manifest.csv").string());
    return rows;
}

// --- synthetic generator -----------------------------------------------------

namespace {

// Darkens the covered pixels in place (once; overlapping strokes don't
// stack) and records them in the ground-truth mask. darkness 0 leaves the
// image untouched while still defining the mask.
void paint_disc(RgbImage& img, BinaryImage& mask, double cx, double cy, double radius,
                double darkness) {
    const int x0 = std::max(0, static_cast<int>(std::floor(cx - radius)));
    const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(cx + radius)));
    const int y0 = std::max(0, static_cast<int>(std::floor(cy - radius)));
    const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(cy + radius)));
    const double r2 = radius * radius;
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            const double dx = x - cx, dy = y - cy;
            if (dx * dx + dy * dy > r2) continue;
            if (mask.at(x, y)) continue;
            std::uint8_t* p = img.pixel(x, y);
            for (int c = 0; c < 3; ++c)
                p[c] = static_cast<std::uint8_t>(std::lround(p[c] * (1.0 - darkness)));
            mask.at(x, y) = 1;
        }
    }
}

void paint_segment(RgbImage& img, BinaryImage& mask, double x0, double y0, double x1, double y1,
                   double width, double darkness) {
    const double len = std::hypot(x1 - x0, y1 - y0);
    const int steps = std::max(1, static_cast<int>(std::ceil(len * 2.0)));
    const double radius = width * 0.5;
    for (int s = 0; s <= steps; ++s) {
        const double t = static_cast<double>(s) / steps;
        paint_disc(img, mask, x0 + t * (x1 - x0), y0 + t * (y1 - y0), radius, darkness);
    }
}

}  // namespace

SynthImage synth_network_image(const SynthParams& p) {
    if (p.width < 1 || p.height < 1) raise(Errc::bad_config, "synth: dims must be >= 1");
    if (p.line_width < 1 || p.spacing <= p.line_width)
        raise(Errc::bad_config, "synth: need spacing > line_width >= 1");
    if (p.darkness < 0.0 || p.darkness > 1.0 || p.irregularity < 0.0 || p.irregularity > 1.0)
        raise(Errc::bad_config, "synth: darkness/irregularity must be in [0,1]");

    Rng rng(p.seed);
    SynthImage out;
    out.image = RgbImage(p.width, p.height);
    out.mask = BinaryImage(p.width, p.height);

    // Gently shaded background so the PCA stage has real channel spread.
    for (int y = 0; y < p.height; ++y) {
        for (int x = 0; x < p.width; ++x) {
            const double shade = 1.0 + p.noise * (2.0 * rng.uniform() - 1.0);
            std::uint8_t* px = out.image.pixel(x, y);
            px[0] = static_cast<std::uint8_t>(std::clamp(p.background.r * shade, 0.0, 255.0));
            px[1] = static_cast<std::uint8_t>(std::clamp(p.background.g * shade, 0.0, 255.0));
            px[2] = static_cast<std::uint8_t>(std::clamp(p.background.b * shade, 0.0, 255.0));
        }
    }

    // Jittered grid nodes, one column/row of margin outside the frame so the
    // mesh covers the borders.
    const int nx = p.width / p.spacing + 2;
    const int ny = p.height / p.spacing + 2;
    std::vector<double> node_x(static_cast<std::size_t>(nx) * ny);
    std::vector<double> node_y(static_cast<std::size_t>(nx) * ny);
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            const std::size_t idx = static_cast<std::size_t>(j) * nx + i;
            const double jitter = p.irregularity * p.spacing;
            node_x[idx] = (i - 0.5) * p.spacing + jitter * (rng.uniform() - 0.5);
            node_y[idx] = (j - 0.5) * p.spacing + jitter * (rng.uniform() - 0.5);
        }
    }
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            const std::size_t idx = static_cast<std::size_t>(j) * nx + i;
            if (i + 1 < nx)
                paint_segment(out.image, out.mask, node_x[idx], node_y[idx], node_x[idx + 1],
                              node_y[idx + 1], p.line_width, p.darkness);
            if (j + 1 < ny)
                paint_segment(out.image, out.mask, node_x[idx], node_y[idx],
                              node_x[idx + static_cast<std::size_t>(nx)],
                              node_y[idx + static_cast<std::size_t>(nx)], p.line_width, p.darkness);
        }
    }
    return out;
}

}  // namespace pnkit::data
