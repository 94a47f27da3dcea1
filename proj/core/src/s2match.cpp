#include "uwassess/s2match.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace uwassess {

void S2MatchConfig::validate() const {
    // 0.5 is the degenerate-but-legal endpoint: max(p, 1-p) >= 0.5 always
    // holds, so the confidence gate admits every pixel (the "filter off"
    // ablation arm of the threshold sweep)
    if (!(tau_s >= 0.5 && tau_s <= tau && tau < 1.0)) {
        throw ConfigError("s2match: need 0.5 <= tau_s <= tau < 1");
    }
    if (p_skip < 0.0 || p_skip >= 1.0) throw ConfigError("s2match: p_skip must be in [0,1)");
    if (lambda_u < 0.0) throw ConfigError("s2match: lambda must be >= 0");
    if (gamma_cap < 0.0 || gamma_cap >= 1.0) throw ConfigError("s2match: gamma cap must be in [0,1)");
    if (batch_labeled < 1 || batch_unlabeled < 0) throw ConfigError("s2match: bad batch sizes");
    if (lr0 <= 0.0) throw ConfigError("s2match: lr0 must be positive");
    if (epochs < 1) throw ConfigError("s2match: epochs must be >= 1");
    if (poly_power < 0.0) throw ConfigError("s2match: poly power must be >= 0");
    if (binarize_threshold <= 0.0 || binarize_threshold >= 1.0) {
        throw ConfigError("s2match: binarize threshold must be in (0,1)");
    }
}

Tensor binarize(const Tensor& p, double threshold) {
    if (threshold <= 0.0 || threshold >= 1.0) throw ConfigError("binarize: threshold must be in (0,1)");
    Tensor out(p.shape());
    for (int64_t i = 0; i < p.numel(); ++i) out.at(i) = p.at(i) >= threshold ? 1.0 : 0.0;
    return out;
}

double draw_sd_multiplier(double p_skip, bool train, Rng& rng) {
    if (p_skip < 0.0 || p_skip >= 1.0) throw ConfigError("stochastic depth: p_skip must be in [0,1)");
    if (!train) return 1.0;
    const bool survive = rng.bernoulli(1.0 - p_skip);
    return survive ? 1.0 / (1.0 - p_skip) : 0.0;
}

Var stochastic_depth_fuse(Graph& g, Var f3_hat, Var f4_hat, double p_skip, bool train, Rng& rng) {
    const auto& s3 = f3_hat->value.shape();
    const auto& s4 = f4_hat->value.shape();
    if (s3.size() != 4 || s4.size() != 4 || s3[1] != s4[1] || s3[2] != 2 * s4[2] || s3[3] != 2 * s4[3]) {
        throw InvariantViolation("stochastic depth fuse: deep branch must be half resolution, same channels");
    }
    const double mult = draw_sd_multiplier(p_skip, train, rng);
    Var up = ag::upsample_bilinear(g, f4_hat, 2);
    if (mult != 1.0) up = ag::scale(g, up, mult);
    return ag::add(g, f3_hat, up);
}

Tensor draw_half_mask(int64_t channels, Rng& rng) {
    if (channels < 2 || channels % 2 != 0) {
        throw ConfigError("complementary dropout: channel count must be even");
    }
    std::vector<int64_t> order(static_cast<size_t>(channels));
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    Tensor mask = Tensor::zeros({channels});
    for (int64_t i = 0; i < channels / 2; ++i) mask.at(order[static_cast<size_t>(i)]) = 1.0;
    return mask;
}

DropoutMaskPair draw_dropout_masks(const std::vector<int64_t>& channel_counts, Rng& rng) {
    DropoutMaskPair pair;
    pair.masks.reserve(channel_counts.size());
    for (int64_t c : channel_counts) pair.masks.push_back(draw_half_mask(c, rng));
    return pair;
}

std::pair<std::vector<Var>, std::vector<Var>> complementary_dropout_pair(
    Graph& g, const std::vector<Var>& s1, const std::vector<Var>& s2, Rng& rng,
    DropoutMaskPair* masks_out) {
    if (s1.size() != s2.size()) throw InvariantViolation("complementary dropout: stream length mismatch");
    std::vector<Var> out1, out2;
    DropoutMaskPair masks;
    for (size_t k = 0; k < s1.size(); ++k) {
        if (!s1[k]->value.same_shape(s2[k]->value)) {
            throw InvariantViolation("complementary dropout: scale shape mismatch");
        }
        const int64_t c = s1[k]->value.dim(1);
        Tensor mask = draw_half_mask(c, rng);
        Tensor eff1({c}), eff2({c});
        for (int64_t i = 0; i < c; ++i) {
            eff1.at(i) = 2.0 * mask.at(i);
            eff2.at(i) = 2.0 * (1.0 - mask.at(i));
        }
        out1.push_back(ag::mul_channel_mask(g, s1[k], eff1));
        out2.push_back(ag::mul_channel_mask(g, s2[k], eff2));
        masks.masks.push_back(std::move(mask));
    }
    if (masks_out) *masks_out = std::move(masks);
    return {std::move(out1), std::move(out2)};
}

Var supervised_loss(Graph& g, Var p_l, const Tensor& y_l) {
    if (!p_l->value.same_shape(y_l)) throw InvariantViolation("supervised loss: shape mismatch");
    Var bce = ag::bce_elem(g, p_l, y_l);
    return ag::mean_all(g, ag::per_image_mean(g, bce));
}

namespace {

// Two stream cross entropies against fixed targets, gated per pixel by a
// confidence indicator on the teacher map, normalized by 1/(4 B_u).
Var gated_pair_loss(Graph& g, Var p_s1, Var p_s2, const Tensor& t1, const Tensor& t2,
                    const Tensor& p_w, double threshold) {
    const int64_t b = p_w.dim(0);
    Tensor ind(p_w.shape());
    for (int64_t i = 0; i < p_w.numel(); ++i) {
        const double v = p_w.at(i);
        ind.at(i) = (v >= threshold || v <= 1.0 - threshold) ? 1.0 : 0.0;
    }
    Var both = ag::add(g, ag::bce_elem(g, p_s1, t1), ag::bce_elem(g, p_s2, t2));
    Var gated = ag::mul_const(g, both, ind);
    Var summed = ag::batch_sum(g, ag::per_image_mean(g, gated));
    return ag::scale(g, summed, 1.0 / (4.0 * static_cast<double>(b)));
}

}  // namespace

Var ws_consistency_loss(Graph& g, Var p_s1, Var p_s2, const Tensor& p_w, const S2MatchConfig& cfg) {
    if (p_w.dim(0) == 0) return g.constant(Tensor::zeros({1}));
    if (!p_s1->value.same_shape(p_w) || !p_s2->value.same_shape(p_w)) {
        throw InvariantViolation("consistency loss: shape mismatch");
    }
    Tensor pseudo = binarize(p_w, cfg.binarize_threshold);
    return gated_pair_loss(g, p_s1, p_s2, pseudo, pseudo, p_w, cfg.tau);
}

Var ss_consistency_loss(Graph& g, Var p_s1, Var p_s2, const Tensor& p_w, const S2MatchConfig& cfg) {
    if (p_w.dim(0) == 0) return g.constant(Tensor::zeros({1}));
    if (!p_s1->value.same_shape(p_w) || !p_s2->value.same_shape(p_w)) {
        throw InvariantViolation("consistency loss: shape mismatch");
    }
    // each stream learns from the other's binarized prediction
    Tensor pseudo1 = binarize(p_s2->value, cfg.binarize_threshold);
    Tensor pseudo2 = binarize(p_s1->value, cfg.binarize_threshold);
    return gated_pair_loss(g, p_s1, p_s2, pseudo1, pseudo2, p_w, cfg.tau_s);
}

Var total_loss(Graph& g, Var l_sup, Var l_ws, Var l_ss, double lambda_u) {
    return ag::add(g, l_sup, ag::scale(g, ag::add(g, l_ws, l_ss), lambda_u));
}

double ema_gamma(int64_t iter, double gamma_cap) {
    return std::min(1.0 - 1.0 / static_cast<double>(iter + 1), gamma_cap);
}

double ema_update(ParamStore& teacher, const ParamStore& student, int64_t iter, double gamma_cap) {
    if (teacher.size() != student.size()) {
        throw InvariantViolation("ema update: parameter count mismatch");
    }
    const double gamma = ema_gamma(iter, gamma_cap);
    auto ti = teacher.all().begin();
    for (const auto& [name, sp] : student.all()) {
        if (ti->first != name || !ti->second.value.same_shape(sp.value)) {
            throw InvariantViolation("ema update: parameter mismatch at " + name);
        }
        Tensor& tv = ti->second.value;
        for (int64_t i = 0; i < tv.numel(); ++i) {
            tv.at(i) = gamma * tv.at(i) + (1.0 - gamma) * sp.value.at(i);
        }
        ++ti;
    }
    return gamma;
}

double poly_lr(int64_t iter, int64_t total_iters, double lr0, double power) {
    if (total_iters < 1 || iter < 0 || iter > total_iters) {
        throw InvariantViolation("poly lr: iteration out of range");
    }
    const double frac = static_cast<double>(iter) / static_cast<double>(total_iters);
    return lr0 * std::pow(1.0 - frac, power);
}

Engine::Engine(BackboneConfig bb, AdaptationConfig ad, AugmentConfig aug, S2MatchConfig cfg,
               uint64_t seed, int64_t total_iters)
    : cfg_(cfg), aug_(aug), total_iters_(total_iters) {
    cfg_.validate();
    aug_.validate();
    if (total_iters_ < 1) throw ConfigError("engine: total iterations must be >= 1");
    if (aug_.crop_h != bb.input_h || aug_.crop_w != bb.input_w) {
        throw ConfigError("engine: augment crop size must match the model input size");
    }
    student_ = std::make_unique<Model>(bb, ad, seed);
    teacher_ = std::make_unique<Model>(bb, ad, seed);
    copy_param_values(student_->params(), teacher_->params());
    selected_blocks_ = apply_freeze_policy(student_->params(), bb.stage_depths, ad.encoder_tune_ratio);
}

namespace {

Tensor stack_images(const std::vector<ImageBuffer>& images) {
    const int64_t b = static_cast<int64_t>(images.size());
    const int64_t h = images[0].height, w = images[0].width;
    Tensor out({b, 3, h, w});
    for (int64_t i = 0; i < b; ++i) {
        if (images[i].channels != 3 || images[i].height != h || images[i].width != w) {
            throw InvariantViolation("train step: inconsistent augmented image shapes");
        }
        std::copy(images[i].pixels.begin(), images[i].pixels.end(), out.data() + i * 3 * h * w);
    }
    return out;
}

Tensor stack_masks(const std::vector<ImageBuffer>& masks) {
    const int64_t b = static_cast<int64_t>(masks.size());
    const int64_t h = masks[0].height, w = masks[0].width;
    Tensor out({b, h, w});
    for (int64_t i = 0; i < b; ++i) {
        std::copy(masks[i].pixels.begin(), masks[i].pixels.end(), out.data() + i * h * w);
    }
    return out;
}

}  // namespace

StepStats Engine::train_step(const std::vector<LabeledSample>& labeled,
                             const std::vector<ImageBuffer>& unlabeled, Rng& rng) {
    if (labeled.empty()) throw InvariantViolation("train step: labeled batch is empty");

    // Fixed substream split: the caller stream always advances by exactly
    // three draws, so a supervised-only arm consumes identically.
    Rng aug_labeled(rng.next_u64());
    Rng aug_unlabeled(rng.next_u64());
    Rng perturb(rng.next_u64());

    std::vector<ImageBuffer> l_images, l_masks;
    for (const auto& sample : labeled) {
        auto res = weak_augment(sample.image, &sample.mask, aug_, aug_labeled);
        l_images.push_back(std::move(res.image));
        l_masks.push_back(std::move(res.mask));
    }
    Tensor x_l = stack_images(l_images);
    Tensor y_l = stack_masks(l_masks);

    const bool use_unlabeled = !unlabeled.empty() && cfg_.lambda_u > 0.0;
    Tensor x_w, x_s1, x_s2;
    if (use_unlabeled) {
        std::vector<ImageBuffer> weak, strong1, strong2;
        for (const auto& img : unlabeled) {
            auto res = weak_augment(img, nullptr, aug_, aug_unlabeled);
            strong1.push_back(strong_augment(res.image, aug_, aug_unlabeled));
            strong2.push_back(strong_augment(res.image, aug_, aug_unlabeled));
            weak.push_back(std::move(res.image));
        }
        x_w = stack_images(weak);
        x_s1 = stack_images(strong1);
        x_s2 = stack_images(strong2);
    }

    StepStats stats;
    stats.iter = iter_;
    stats.lr = poly_lr(iter_, total_iters_, cfg_.lr0, cfg_.poly_power);

    // teacher prediction on the clean weak view, outside the student graph
    Tensor p_w;
    if (use_unlabeled) {
        Graph tg;
        p_w = teacher_->forward(tg, x_w)->value;
    }

    Graph g;
    FwdOptions l_opt;
    l_opt.sd_multiplier = cfg_.sd_enabled ? draw_sd_multiplier(cfg_.p_skip, true, perturb) : 1.0;
    Var p_l = student_->forward(g, x_l, l_opt);
    Var l_sup = supervised_loss(g, p_l, y_l);

    Var l_ws = g.constant(Tensor::zeros({1}));
    Var l_ss = g.constant(Tensor::zeros({1}));
    if (use_unlabeled) {
        FwdOptions s1_opt, s2_opt;
        s1_opt.sd_multiplier = cfg_.sd_enabled ? draw_sd_multiplier(cfg_.p_skip, true, perturb) : 1.0;
        s2_opt.sd_multiplier = cfg_.sd_enabled ? draw_sd_multiplier(cfg_.p_skip, true, perturb) : 1.0;
        DropoutMaskPair masks = draw_dropout_masks(
            {student_->config().neck_channels, student_->config().neck_channels,
             student_->config().neck_channels},
            perturb);
        s1_opt.cd_masks = &masks.masks;
        s1_opt.cd_complement = false;
        s2_opt.cd_masks = &masks.masks;
        s2_opt.cd_complement = true;
        Var p_s1 = student_->forward(g, x_s1, s1_opt);
        Var p_s2 = student_->forward(g, x_s2, s2_opt);
        l_ws = ws_consistency_loss(g, p_s1, p_s2, p_w, cfg_);
        if (cfg_.sc_enabled) l_ss = ss_consistency_loss(g, p_s1, p_s2, p_w, cfg_);
    }
    Var total = total_loss(g, l_sup, l_ws, l_ss, cfg_.lambda_u);

    student_->params().zero_grads();
    g.backward(total);
    opt_.step(student_->params(), stats.lr);
    stats.gamma = ema_update(teacher_->params(), student_->params(), iter_, cfg_.gamma_cap);

    stats.loss_sup = l_sup->value.at(0);
    stats.loss_ws = l_ws->value.at(0);
    stats.loss_ss = l_ss->value.at(0);
    stats.loss_total = total->value.at(0);
    ++iter_;
    return stats;
}

}  // namespace uwassess
