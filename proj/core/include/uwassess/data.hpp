#pragma once

#include "uwassess/common.hpp"
#include "uwassess/image.hpp"

#include <string>
#include <utility>
#include <vector>

namespace uwassess {

struct DatasetManifest {
    std::vector<std::pair<std::string, std::string>> labeled;  // (image path, mask path)
    std::vector<std::string> unlabeled;
    std::string root;
};

// Expects root/labeled/images and root/labeled/masks; root/unlabeled/images is
// optional. Pairs by filename stem in lexicographic order. Any orphan mask,
// missing mask, or image/mask dimension mismatch raises one ConfigError whose
// message lists every offending file.
DatasetManifest scan_dataset(const std::string& root);

struct BatchSpec {
    std::vector<int64_t> labeled;    // indices into manifest.labeled
    std::vector<int64_t> unlabeled;  // indices into manifest.unlabeled
};

// Labeled side: one shuffled pass, batches of batch_labeled (sampling with
// replacement if the dataset is smaller than one batch). Unlabeled side: a
// fixed subsampled pool of size min(U, L + ratio*(U-L)) cycled with per-epoch
// reshuffling. Fully determined by (seed, epoch).
std::vector<BatchSpec> sample_epoch(const DatasetManifest& manifest, int64_t batch_labeled,
                                    int64_t batch_unlabeled, double unlabeled_ratio, uint64_t seed,
                                    int64_t epoch);

struct ToyConfig {
    int64_t n_labeled = 10;
    int64_t n_unlabeled = 200;
    int64_t n_val = 20;
    int64_t image_size = 64;
    double min_coverage = 0.05;  // accepted water fraction band per image
    double max_coverage = 0.40;

    void validate() const;
};

// Synthetic scenes: textured background (gradient + sinusoids + noise) with
// 1..3 elliptical water regions tinted toward blue-green plus reflection
// streaks. Masks are exact. Writes out_root/train/... and out_root/val/...
// and returns the scanned training manifest. Same seed, same bytes.
DatasetManifest generate_toy_dataset(const ToyConfig& cfg, uint64_t seed, const std::string& out_root);

}  // namespace uwassess
