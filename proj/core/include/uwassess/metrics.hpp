#pragma once

#include "uwassess/tensor.hpp"

#include <cstdint>
#include <vector>

namespace uwassess {

// Dataset-global pixel counts. Shards are merged by addition.
struct ConfusionCounts {
    int64_t tp = 0;
    int64_t fp = 0;
    int64_t tn = 0;
    int64_t fn = 0;

    int64_t total() const { return tp + fp + tn + fn; }
    ConfusionCounts& operator+=(const ConfusionCounts& o) {
        tp += o.tp;
        fp += o.fp;
        tn += o.tn;
        fn += o.fn;
        return *this;
    }
    friend ConfusionCounts operator+(ConfusionCounts a, const ConfusionCounts& b) { return a += b; }
};

struct MetricReport {
    double precision = 0.0;
    double recall = 0.0;
    double specificity = 0.0;
    double dice = 0.0;
    double iou = 0.0;
    double g_mean = 0.0;
    ConfusionCounts counts;
};

struct PRPoint {
    double threshold = 0.0;
    double precision = 0.0;
    double recall = 0.0;
};

struct PRCurve {
    std::vector<PRPoint> points;
    double break_even_threshold = 0.0;
    double break_even_value = 0.0;
};

// Both masks must be binary {0,1} and congruent.
void accumulate(const Tensor& pred, const Tensor& gt, ConfusionCounts& counts);

// Ratios with a zero-denominator rule: an undefined ratio is 1 when the
// error count outside the denominator is also zero, else 0.
MetricReport compute_metrics(const ConfusionCounts& counts);

// Mean of per-shard metric values (counts are still summed).
MetricReport macro_average(const std::vector<ConfusionCounts>& per_image);

// Thresholds (j+1)/(n+1) for j in 0..n-1, strictly inside (0,1). The break
// even point interpolates linearly where precision - recall changes sign.
PRCurve pr_curve(const std::vector<Tensor>& probs, const std::vector<Tensor>& gts, int64_t n_thresholds);

// Fills break_even_* from the points already in the curve.
void compute_break_even(PRCurve& curve);

// Linearly interpolated quantile (matches numpy's default). q in [0,1].
double quantile(std::vector<double> xs, double q);

}  // namespace uwassess
