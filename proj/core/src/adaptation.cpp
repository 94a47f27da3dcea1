#include "uwassess/adaptation.hpp"

#include "uwassess/common.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <complex>

namespace uwassess {

void AdaptationConfig::validate() const {
    if (lora_rank <= 0) throw ConfigError("adaptation: lora_rank must be positive");
    if (lora_scale < 0.0) throw ConfigError("adaptation: lora_scale must be non-negative");
    if (adapter_hidden <= 0) throw ConfigError("adaptation: adapter_hidden must be positive");
    if (signal_mask_ratio < 0.0 || signal_mask_ratio > 1.0) throw ConfigError("adaptation: mask ratio outside [0,1]");
    if (encoder_tune_ratio < 0.0 || encoder_tune_ratio > 1.0) {
        throw ConfigError("adaptation: encoder_tune_ratio outside [0,1]");
    }
}

namespace {

Eigen::MatrixXcd dft_matrix(int64_t n) {
    Eigen::MatrixXcd w(n, n);
    const double step = -2.0 * M_PI / static_cast<double>(n);
    for (int64_t j = 0; j < n; ++j)
        for (int64_t k = 0; k < n; ++k) {
            const double a = step * static_cast<double>(j * k % n);
            w(j, k) = std::complex<double>(std::cos(a), std::sin(a));
        }
    return w;
}

int64_t centered_freq(int64_t f, int64_t n) { return f <= n / 2 ? f : f - n; }

}  // namespace

Tensor extract_task_signal(const Tensor& images, double mask_ratio) {
    if (images.rank() != 4) throw InvariantViolation("extract_task_signal: expected (B,C,H,W)");
    const int64_t b = images.dim(0), c = images.dim(1), h = images.dim(2), w = images.dim(3);
    const Eigen::MatrixXcd wh = dft_matrix(h);
    const Eigen::MatrixXcd ww = dft_matrix(w);
    const double cut_h = static_cast<double>(h) * mask_ratio / 2.0;
    const double cut_w = static_cast<double>(w) * mask_ratio / 2.0;

    Tensor out{images.shape()};
    Eigen::MatrixXd x(h, w);
    for (int64_t bc = 0; bc < b * c; ++bc) {
        const double* src = images.data() + bc * h * w;
        for (int64_t y = 0; y < h; ++y)
            for (int64_t xx = 0; xx < w; ++xx) x(y, xx) = src[y * w + xx];
        Eigen::MatrixXcd f = wh * x * ww.transpose();
        for (int64_t fy = 0; fy < h; ++fy) {
            if (std::abs(static_cast<double>(centered_freq(fy, h))) >= cut_h) continue;
            for (int64_t fx = 0; fx < w; ++fx) {
                if (std::abs(static_cast<double>(centered_freq(fx, w))) < cut_w) f(fy, fx) = 0.0;
            }
        }
        Eigen::MatrixXcd y = wh.conjugate() * f * ww.adjoint();
        const double inv = 1.0 / static_cast<double>(h * w);
        double* dst = out.data() + bc * h * w;
        for (int64_t yy = 0; yy < h; ++yy)
            for (int64_t xx = 0; xx < w; ++xx) dst[yy * w + xx] = y(yy, xx).real() * inv;
    }
    return out;
}

Var adaptation_gate(Graph& g, Var tokens, Var w, Var b) {
    Var pooled = ag::token_mean(g, tokens);               // (B,C)
    Var logit = ag::linear(g, pooled, w, b);              // (B,1)
    Var sig = ag::sigmoid(g, logit);
    return ag::reshape(g, sig, {tokens->value.dim(0)});   // (B)
}

int64_t apply_freeze_policy(ParamStore& params, const std::vector<int64_t>& stage_depths, double tune_ratio) {
    if (tune_ratio < 0.0 || tune_ratio > 1.0) throw ConfigError("freeze policy: tune ratio outside [0,1]");
    int64_t total_blocks = 0;
    for (int64_t d : stage_depths) total_blocks += d;
    const int64_t selected = std::llround(tune_ratio * static_cast<double>(total_blocks));

    // Depth order: stage 4 block (d4-1) is deepest. A block is selected when
    // its global depth index falls in the last `selected` positions.
    auto block_rank = [&](int64_t stage, int64_t block) {
        int64_t r = 0;
        for (int64_t s = 0; s < stage; ++s) r += stage_depths[s];
        return r + block;
    };
    const int64_t cutoff = total_blocks - selected;

    for (auto& [name, p] : params.all()) {
        if (name.rfind("adaptation/", 0) == 0 || name.rfind("backbone/dec/", 0) == 0) {
            p.trainable = true;
            continue;
        }
        if (name.rfind("backbone/stage", 0) == 0) {
            // backbone/stage<k>/block<i>/...
            const int64_t stage = std::stoll(name.substr(14)) - 1;
            const size_t bpos = name.find("/block");
            const int64_t block = std::stoll(name.substr(bpos + 6));
            p.trainable = block_rank(stage, block) >= cutoff;
            continue;
        }
        // stem, pos_embed, merges, neck: only full fine-tuning touches them
        p.trainable = tune_ratio >= 1.0;
    }
    return selected;
}

}  // namespace uwassess
