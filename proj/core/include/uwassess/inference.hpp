#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uwassess/backbone.hpp"
#include "uwassess/data.hpp"
#include "uwassess/image.hpp"
#include "uwassess/metrics.hpp"

namespace uwassess {

// Water probability for one image at its original resolution. The image is
// resampled to the model input size for the forward pass and the probability
// map resampled back. Images are processed one at a time everywhere, so
// batched calls and single calls produce identical bytes by construction.
Tensor predict_probs(Model& model, const ImageBuffer& image);

struct EvalOptions {
    int64_t workers = 1;
    int64_t thresholds = 19;           // PR curve resolution
    double binarize_threshold = 0.5;
    bool macro = false;                // per-image macro average instead of pooled counts
};

struct EvalResult {
    MetricReport report;
    PRCurve curve;
    int64_t images = 0;
    std::vector<double> per_image_iou;  // dataset order, box-plot fodder
};

// Shards images across workers (each worker forwards through its own model
// replica), then merges in dataset order, so the worker count never changes
// the result.
EvalResult evaluate_dataset(const Model& model, const DatasetManifest& data, const EvalOptions& opt);

// Probability maps as npy (f64, C order) so they load with numpy directly.
void save_npy(const std::string& path, const Tensor& t);
Tensor load_npy(const std::string& path);

}  // namespace uwassess
