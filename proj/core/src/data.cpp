#include "uwassess/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <numeric>

namespace fs = std::filesystem;

namespace uwassess {

namespace {

std::map<std::string, std::string> stems_in(const fs::path& dir) {
    std::map<std::string, std::string> out;
    if (!fs::is_directory(dir)) return out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        out[entry.path().stem().string()] = entry.path().string();
    }
    return out;
}

}  // namespace

DatasetManifest scan_dataset(const std::string& root) {
    const fs::path images_dir = fs::path(root) / "labeled" / "images";
    const fs::path masks_dir = fs::path(root) / "labeled" / "masks";
    if (!fs::is_directory(images_dir) || !fs::is_directory(masks_dir)) {
        throw ConfigError("dataset scan: " + root + " must contain labeled/images and labeled/masks");
    }
    auto images = stems_in(images_dir);
    auto masks = stems_in(masks_dir);

    std::vector<std::string> problems;
    DatasetManifest manifest;
    manifest.root = root;
    for (const auto& [stem, img_path] : images) {
        auto it = masks.find(stem);
        if (it == masks.end()) {
            problems.push_back("missing mask for " + img_path);
            continue;
        }
        ImageBuffer img = load_image(img_path);
        ImageBuffer mask = load_mask(it->second);
        if (img.height != mask.height || img.width != mask.width) {
            problems.push_back("mask dimensions differ from image for " + it->second);
            continue;
        }
        manifest.labeled.emplace_back(img_path, it->second);
    }
    for (const auto& [stem, mask_path] : masks) {
        if (images.find(stem) == images.end()) problems.push_back("orphan mask " + mask_path);
    }
    if (!problems.empty()) {
        std::string msg = "dataset scan found " + std::to_string(problems.size()) + " problem(s):";
        for (const auto& p : problems) msg += "\n  " + p;
        throw ConfigError(msg);
    }
    for (const auto& [stem, path] : stems_in(fs::path(root) / "unlabeled" / "images")) {
        manifest.unlabeled.push_back(path);
    }
    return manifest;
}

std::vector<BatchSpec> sample_epoch(const DatasetManifest& manifest, int64_t batch_labeled,
                                    int64_t batch_unlabeled, double unlabeled_ratio, uint64_t seed,
                                    int64_t epoch) {
    const int64_t n_l = static_cast<int64_t>(manifest.labeled.size());
    const int64_t n_u = static_cast<int64_t>(manifest.unlabeled.size());
    if (n_l == 0) throw ConfigError("sample epoch: no labeled data");
    if (batch_labeled < 1 || batch_unlabeled < 0) throw ConfigError("sample epoch: bad batch sizes");
    if (unlabeled_ratio < 0.0 || unlabeled_ratio > 1.0) {
        throw ConfigError("sample epoch: unlabeled ratio must be in [0,1]");
    }

    std::vector<int64_t> labeled_order(static_cast<size_t>(n_l));
    std::iota(labeled_order.begin(), labeled_order.end(), 0);
    Rng l_rng(derive_seed(seed, "epoch-labeled", static_cast<uint64_t>(epoch)));
    l_rng.shuffle(labeled_order);

    int64_t n_batches;
    bool with_replacement = false;
    if (n_l >= batch_labeled) {
        n_batches = n_l / batch_labeled;
    } else {
        n_batches = 1;
        with_replacement = true;
        std::cerr << "warning: labeled set (" << n_l << ") smaller than batch (" << batch_labeled
                  << "), sampling with replacement\n";
    }

    // fixed pool so a ratio arm trains on the same subset every epoch
    std::vector<int64_t> pool;
    if (n_u > 0 && batch_unlabeled > 0) {
        int64_t pool_size = n_u;
        if (n_u > n_l) {
            pool_size = n_l + llround(unlabeled_ratio * static_cast<double>(n_u - n_l));
            pool_size = std::min(pool_size, n_u);
        }
        std::vector<int64_t> all(static_cast<size_t>(n_u));
        std::iota(all.begin(), all.end(), 0);
        Rng pool_rng(derive_seed(seed, "unlabeled-pool"));
        pool_rng.shuffle(all);
        pool.assign(all.begin(), all.begin() + pool_size);
    }

    std::vector<int64_t> unlabeled_seq;
    if (!pool.empty()) {
        Rng u_rng(derive_seed(seed, "epoch-unlabeled", static_cast<uint64_t>(epoch)));
        while (static_cast<int64_t>(unlabeled_seq.size()) < n_batches * batch_unlabeled) {
            std::vector<int64_t> round = pool;
            u_rng.shuffle(round);
            unlabeled_seq.insert(unlabeled_seq.end(), round.begin(), round.end());
        }
    }

    std::vector<BatchSpec> batches;
    batches.reserve(static_cast<size_t>(n_batches));
    Rng repl_rng(derive_seed(seed, "epoch-replacement", static_cast<uint64_t>(epoch)));
    for (int64_t b = 0; b < n_batches; ++b) {
        BatchSpec spec;
        for (int64_t i = 0; i < batch_labeled; ++i) {
            if (with_replacement) {
                spec.labeled.push_back(labeled_order[static_cast<size_t>(repl_rng.uniform_int(n_l))]);
            } else {
                spec.labeled.push_back(labeled_order[static_cast<size_t>(b * batch_labeled + i)]);
            }
        }
        if (!unlabeled_seq.empty()) {
            for (int64_t i = 0; i < batch_unlabeled; ++i) {
                spec.unlabeled.push_back(unlabeled_seq[static_cast<size_t>(b * batch_unlabeled + i)]);
            }
        }
        batches.push_back(std::move(spec));
    }
    return batches;
}

void ToyConfig::validate() const {
    if (n_labeled < 0 || n_unlabeled < 0 || n_val < 0) throw ConfigError("toy data: counts must be >= 0");
    if (n_labeled == 0) throw ConfigError("toy data: need at least one labeled image");
    if (image_size < 16) throw ConfigError("toy data: image size must be >= 16");
    if (!(min_coverage > 0.0 && min_coverage < max_coverage && max_coverage < 1.0)) {
        throw ConfigError("toy data: coverage band must satisfy 0 < min < max < 1");
    }
}

namespace {

struct Ellipse {
    double cy, cx, ry, rx, angle;

    bool contains(double y, double x) const {
        const double dy = y - cy, dx = x - cx;
        const double c = std::cos(angle), s = std::sin(angle);
        const double u = c * dx + s * dy, v = -s * dx + c * dy;
        return (u * u) / (rx * rx) + (v * v) / (ry * ry) <= 1.0;
    }
};

void render_scene(int64_t size, Rng& rng, double min_cov, double max_cov, ImageBuffer& image,
                  ImageBuffer& mask) {
    const double s = static_cast<double>(size);
    image = ImageBuffer(3, size, size);
    mask = ImageBuffer(1, size, size);

    double base[3];
    for (double& b : base) b = rng.uniform(0.25, 0.55);
    const double grad_amp = rng.uniform(-0.15, 0.15);
    const double grad_dir = rng.uniform(0.0, 2.0 * M_PI);
    struct Wave {
        double amp, fy, fx, phase;
    } waves[2];
    for (auto& w : waves) {
        w.amp = rng.uniform(0.02, 0.06);
        w.fy = rng.uniform(-4.0, 4.0);
        w.fx = rng.uniform(-4.0, 4.0);
        w.phase = rng.uniform(0.0, 2.0 * M_PI);
    }

    // redraw the ellipse set until the water fraction lands in the band
    std::vector<Ellipse> water;
    double coverage = 0.0;
    for (int attempt = 0; attempt < 200; ++attempt) {
        water.clear();
        const int64_t k = 1 + rng.uniform_int(3);
        for (int64_t e = 0; e < k; ++e) {
            water.push_back({rng.uniform(0.25, 0.75) * s, rng.uniform(0.25, 0.75) * s,
                             rng.uniform(0.10, 0.28) * s, rng.uniform(0.10, 0.28) * s,
                             rng.uniform(0.0, M_PI)});
        }
        int64_t inside = 0;
        for (int64_t y = 0; y < size; ++y)
            for (int64_t x = 0; x < size; ++x) {
                for (const auto& el : water) {
                    if (el.contains(y + 0.5, x + 0.5)) {
                        ++inside;
                        break;
                    }
                }
            }
        coverage = static_cast<double>(inside) / (s * s);
        if (coverage >= min_cov && coverage <= max_cov) break;
    }
    if (coverage < min_cov || coverage > max_cov) {
        throw PipelineError("toy data: could not hit the coverage band");
    }

    const double streak_amp = rng.uniform(0.05, 0.15);
    const double streak_freq = rng.uniform(2.0, 6.0);
    for (int64_t y = 0; y < size; ++y) {
        for (int64_t x = 0; x < size; ++x) {
            const double ny = y / s, nx = x / s;
            double tex = grad_amp * (std::cos(grad_dir) * nx + std::sin(grad_dir) * ny);
            for (const auto& w : waves) {
                tex += w.amp * std::sin(2.0 * M_PI * (w.fy * ny + w.fx * nx) + w.phase);
            }
            bool wet = false;
            for (const auto& el : water) {
                if (el.contains(y + 0.5, x + 0.5)) {
                    wet = true;
                    break;
                }
            }
            mask.at(0, y, x) = wet ? 1.0 : 0.0;
            for (int64_t c = 0; c < 3; ++c) {
                double v = base[c] + tex;
                if (wet) {
                    // shift toward a darker blue-green and add reflections
                    const double tint = c == 0 ? 0.55 * v : (c == 1 ? 0.9 * v + 0.06 : v + 0.14);
                    v = 0.45 * v + 0.55 * tint;
                    v += streak_amp * std::max(0.0, std::sin(2.0 * M_PI * streak_freq * ny + 3.0 * nx));
                }
                v += rng.normal(0.0, 0.02);
                image.at(c, y, x) = std::min(1.0, std::max(0.0, v));
            }
        }
    }
}

void write_split(const fs::path& root, const std::string& prefix, int64_t n, bool with_masks,
                 const ToyConfig& cfg, uint64_t seed, const char* tag) {
    const fs::path images_dir = root / "labeled" / "images";
    const fs::path masks_dir = root / "labeled" / "masks";
    const fs::path unlabeled_dir = root / "unlabeled" / "images";
    fs::create_directories(with_masks ? images_dir : unlabeled_dir);
    if (with_masks) fs::create_directories(masks_dir);

    for (int64_t i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, tag, static_cast<uint64_t>(i)));
        ImageBuffer image, mask;
        render_scene(cfg.image_size, rng, cfg.min_coverage, cfg.max_coverage, image, mask);
        char name[32];
        std::snprintf(name, sizeof(name), "%s%04lld.png", prefix.c_str(), static_cast<long long>(i));
        if (with_masks) {
            save_image((images_dir / name).string(), image);
            save_mask((masks_dir / name).string(), mask);
        } else {
            save_image((unlabeled_dir / name).string(), image);
        }
    }
}

}  // namespace

DatasetManifest generate_toy_dataset(const ToyConfig& cfg, uint64_t seed, const std::string& out_root) {
    cfg.validate();
    const fs::path train = fs::path(out_root) / "train";
    const fs::path val = fs::path(out_root) / "val";
    fs::create_directories(train / "labeled" / "images");
    fs::create_directories(train / "labeled" / "masks");
    fs::create_directories(train / "unlabeled" / "images");

    write_split(train, "l", cfg.n_labeled, true, cfg, seed, "toy-labeled");
    write_split(train, "u", cfg.n_unlabeled, false, cfg, seed, "toy-unlabeled");
    if (cfg.n_val > 0) {
        fs::create_directories(val / "labeled" / "images");
        fs::create_directories(val / "labeled" / "masks");
        write_split(val, "v", cfg.n_val, true, cfg, seed, "toy-val");
    }
    return scan_dataset(train.string());
}

}  // namespace uwassess
