#pragma once

#include "uwassess/augment.hpp"
#include "uwassess/backbone.hpp"
#include "uwassess/optim.hpp"

#include <memory>
#include <utility>
#include <vector>

namespace uwassess {

struct S2MatchConfig {
    double tau = 0.95;             // weak-to-strong confidence threshold
    double tau_s = 0.8;            // relaxed threshold for the strong-to-strong term
    double lambda_u = 1.0;         // weight on the unlabeled losses
    double p_skip = 0.5;           // skip probability of the deep branch
    double gamma_cap = 0.996;      // EMA momentum ceiling
    int64_t batch_labeled = 2;
    int64_t batch_unlabeled = 2;
    double lr0 = 2e-4;
    int64_t epochs = 30;
    double poly_power = 0.9;
    double binarize_threshold = 0.5;
    bool sc_enabled = true;        // strong-to-strong consistency loss
    bool sd_enabled = true;        // stochastic depth on the fuse

    void validate() const;
};

// 1 where p >= threshold else 0, same shape.
Tensor binarize(const Tensor& p, double threshold);

// Survival-scaled multiplier for the deep branch: draws b with
// P(b=1) = 1 - p_skip and returns b/(1-p_skip); eval mode returns 1.
double draw_sd_multiplier(double p_skip, bool train, Rng& rng);
Var stochastic_depth_fuse(Graph& g, Var f3_hat, Var f4_hat, double p_skip, bool train, Rng& rng);

struct DropoutMaskPair {
    std::vector<Tensor> masks;  // one per scale, exactly half ones; stream 2 uses 1 - mask
};

Tensor draw_half_mask(int64_t channels, Rng& rng);
DropoutMaskPair draw_dropout_masks(const std::vector<int64_t>& channel_counts, Rng& rng);

// Masks each scale of the two strong streams with complementary halves,
// rescaled by 2 to preserve the expected activation.
std::pair<std::vector<Var>, std::vector<Var>> complementary_dropout_pair(
    Graph& g, const std::vector<Var>& s1, const std::vector<Var>& s2, Rng& rng,
    DropoutMaskPair* masks_out = nullptr);

// Mean per-pixel cross entropy per image, averaged over the batch.
Var supervised_loss(Graph& g, Var p_l, const Tensor& y_l);

// Weak-to-strong: both strong predictions against the binarized teacher map,
// restricted to pixels where the teacher is confident at tau.
Var ws_consistency_loss(Graph& g, Var p_s1, Var p_s2, const Tensor& p_w, const S2MatchConfig& cfg);

// Strong-to-strong: each stream against the other's binarized prediction,
// gated by teacher confidence at the relaxed threshold tau_s.
Var ss_consistency_loss(Graph& g, Var p_s1, Var p_s2, const Tensor& p_w, const S2MatchConfig& cfg);

Var total_loss(Graph& g, Var l_sup, Var l_ws, Var l_ss, double lambda_u);

double ema_gamma(int64_t iter, double gamma_cap);
// Teacher <- gamma * teacher + (1-gamma) * student over every parameter.
// Returns the gamma that was applied.
double ema_update(ParamStore& teacher, const ParamStore& student, int64_t iter, double gamma_cap);

double poly_lr(int64_t iter, int64_t total_iters, double lr0, double power);

struct LabeledSample {
    ImageBuffer image;
    ImageBuffer mask;
};

struct StepStats {
    int64_t iter = 0;
    double loss_sup = 0.0;
    double loss_ws = 0.0;
    double loss_ss = 0.0;
    double loss_total = 0.0;
    double gamma = 0.0;
    double lr = 0.0;
};

// Owns student, teacher, optimizer and the iteration counter. One train_step
// consumes raw (unaugmented) samples and performs augmentation, both student
// forwards, the teacher forward, the backward pass, the optimizer step and
// the EMA update.
class Engine {
public:
    Engine(BackboneConfig bb, AdaptationConfig ad, AugmentConfig aug, S2MatchConfig cfg,
           uint64_t seed, int64_t total_iters);

    StepStats train_step(const std::vector<LabeledSample>& labeled,
                         const std::vector<ImageBuffer>& unlabeled, Rng& rng);

    Model& student() { return *student_; }
    Model& teacher() { return *teacher_; }
    AdamW& optimizer() { return opt_; }
    const S2MatchConfig& config() const { return cfg_; }
    const AugmentConfig& augment_config() const { return aug_; }
    int64_t iteration() const { return iter_; }
    void set_iteration(int64_t iter) { iter_ = iter; }
    int64_t total_iters() const { return total_iters_; }
    int64_t selected_blocks() const { return selected_blocks_; }

private:
    S2MatchConfig cfg_;
    AugmentConfig aug_;
    std::unique_ptr<Model> student_;
    std::unique_ptr<Model> teacher_;
    AdamW opt_;
    int64_t iter_ = 0;
    int64_t total_iters_ = 0;
    int64_t selected_blocks_ = 0;
};

}  // namespace uwassess
