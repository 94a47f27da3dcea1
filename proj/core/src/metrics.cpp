#include "uwassess/metrics.hpp"

#include "uwassess/common.hpp"

#include <algorithm>
#include <cmath>

namespace uwassess {

void accumulate(const Tensor& pred, const Tensor& gt, ConfusionCounts& counts) {
    if (!pred.same_shape(gt)) throw InvariantViolation("confusion accumulate: shape mismatch");
    for (int64_t i = 0; i < pred.numel(); ++i) {
        const double p = pred.at(i), g = gt.at(i);
        if ((p != 0.0 && p != 1.0) || (g != 0.0 && g != 1.0)) {
            throw InvariantViolation("confusion accumulate: masks must be binary");
        }
        if (p == 1.0) {
            (g == 1.0 ? counts.tp : counts.fp) += 1;
        } else {
            (g == 1.0 ? counts.fn : counts.tn) += 1;
        }
    }
}

namespace {

double ratio(int64_t num, int64_t den, int64_t err_other) {
    if (den > 0) return static_cast<double>(num) / static_cast<double>(den);
    return err_other == 0 ? 1.0 : 0.0;
}

}  // namespace

MetricReport compute_metrics(const ConfusionCounts& c) {
    MetricReport r;
    r.counts = c;
    r.precision = ratio(c.tp, c.tp + c.fp, c.fn);
    r.recall = ratio(c.tp, c.tp + c.fn, c.fp);
    r.specificity = ratio(c.tn, c.tn + c.fp, c.fn);
    r.iou = ratio(c.tp, c.tp + c.fp + c.fn, 0);
    r.dice = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn, 0);
    r.g_mean = std::sqrt(r.recall * r.specificity);
    return r;
}

MetricReport macro_average(const std::vector<ConfusionCounts>& per_image) {
    if (per_image.empty()) throw ConfigError("macro average: empty set");
    MetricReport mean;
    for (const auto& c : per_image) {
        MetricReport r = compute_metrics(c);
        mean.precision += r.precision;
        mean.recall += r.recall;
        mean.specificity += r.specificity;
        mean.dice += r.dice;
        mean.iou += r.iou;
        mean.g_mean += r.g_mean;
        mean.counts += c;
    }
    const double n = static_cast<double>(per_image.size());
    mean.precision /= n;
    mean.recall /= n;
    mean.specificity /= n;
    mean.dice /= n;
    mean.iou /= n;
    mean.g_mean /= n;
    return mean;
}

PRCurve pr_curve(const std::vector<Tensor>& probs, const std::vector<Tensor>& gts, int64_t n_thresholds) {
    if (probs.empty() || probs.size() != gts.size()) {
        throw ConfigError("pr curve: prediction and ground truth sets must be non-empty and aligned");
    }
    if (n_thresholds < 2) throw ConfigError("pr curve: need at least 2 thresholds");

    PRCurve curve;
    curve.points.reserve(static_cast<size_t>(n_thresholds));
    for (int64_t j = 0; j < n_thresholds; ++j) {
        const double t = static_cast<double>(j + 1) / static_cast<double>(n_thresholds + 1);
        ConfusionCounts c;
        for (size_t i = 0; i < probs.size(); ++i) {
            if (!probs[i].same_shape(gts[i])) throw InvariantViolation("pr curve: shape mismatch");
            for (int64_t k = 0; k < probs[i].numel(); ++k) {
                const double p = probs[i].at(k) >= t ? 1.0 : 0.0;
                const double g = gts[i].at(k);
                if (g != 0.0 && g != 1.0) throw InvariantViolation("pr curve: ground truth must be binary");
                if (p == 1.0) {
                    (g == 1.0 ? c.tp : c.fp) += 1;
                } else {
                    (g == 1.0 ? c.fn : c.tn) += 1;
                }
            }
        }
        MetricReport r = compute_metrics(c);
        curve.points.push_back({t, r.precision, r.recall});
    }
    compute_break_even(curve);
    return curve;
}

void compute_break_even(PRCurve& curve) {
    if (curve.points.empty()) throw ConfigError("break-even point needs at least one PR point");
    // interpolate where the precision-recall gap crosses zero; if it never
    // does, fall back to the point with the smallest gap
    size_t best = 0;
    double best_gap = std::abs(curve.points[0].precision - curve.points[0].recall);
    bool crossed = false;
    for (size_t j = 0; j + 1 < curve.points.size(); ++j) {
        const double d0 = curve.points[j].precision - curve.points[j].recall;
        const double d1 = curve.points[j + 1].precision - curve.points[j + 1].recall;
        if ((d0 <= 0.0 && d1 >= 0.0) || (d0 >= 0.0 && d1 <= 0.0)) {
            const double denom = d0 - d1;
            const double alpha = denom == 0.0 ? 0.0 : d0 / denom;
            curve.break_even_threshold =
                curve.points[j].threshold + alpha * (curve.points[j + 1].threshold - curve.points[j].threshold);
            curve.break_even_value =
                curve.points[j].precision + alpha * (curve.points[j + 1].precision - curve.points[j].precision);
            crossed = true;
            break;
        }
        const double gap1 = std::abs(d1);
        if (gap1 < best_gap) {
            best_gap = gap1;
            best = j + 1;
        }
    }
    if (!crossed) {
        curve.break_even_threshold = curve.points[best].threshold;
        curve.break_even_value = 0.5 * (curve.points[best].precision + curve.points[best].recall);
    }
}

double quantile(std::vector<double> xs, double q) {
    if (xs.empty()) throw ConfigError("quantile of an empty list");
    if (q < 0.0 || q > 1.0) throw ConfigError("quantile fraction must lie in [0, 1]");
    std::sort(xs.begin(), xs.end());
    const double pos = q * static_cast<double>(xs.size() - 1);
    const size_t lo = static_cast<size_t>(pos);
    if (lo + 1 >= xs.size()) return xs.back();
    const double frac = pos - static_cast<double>(lo);
    return xs[lo] + frac * (xs[lo + 1] - xs[lo]);
}

}  // namespace uwassess
