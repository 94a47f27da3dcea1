#pragma once

#include "uwassess/adaptation.hpp"
#include "uwassess/graph.hpp"

#include <string>
#include <vector>

namespace uwassess {

struct BackboneConfig {
    std::vector<int64_t> stage_depths{1, 1, 2, 1};
    std::vector<int64_t> stage_channels{8, 16, 32, 64};
    int64_t neck_channels = 32;
    int64_t patch_stride = 4;
    int64_t attention_heads = 2;
    int64_t mlp_ratio = 4;
    int64_t input_h = 64;
    int64_t input_w = 64;
    double norm_mean = 0.5;
    double norm_std = 0.5;

    void validate() const;
    // Stage spatial sizes, k in 0..3 (stride patch_stride * 2^k).
    int64_t stage_h(int64_t k) const { return (input_h / patch_stride) >> k; }
    int64_t stage_w(int64_t k) const { return (input_w / patch_stride) >> k; }
};

struct FwdOptions {
    bool use_adaptation = true;   // effective only when the model was built with adaptation
    double sd_multiplier = 1.0;   // factor on the upsampled f4 branch; 1 = deterministic fuse
    // Channel masks for the three decoder inputs [f_hat_1, f_hat_2, f3_fuse], each
    // of size neck_channels with values in {0,1}. The model applies (M or 1-M) x 2.
    const std::vector<Tensor>* cd_masks = nullptr;
    bool cd_complement = false;
};

// Four-stage transformer encoder + channel-unifying neck + top-down decoder,
// with the hybrid adaptation hooks (gated LoRA on q/v, gated adapter injection).
class Model {
public:
    Model(BackboneConfig bb, AdaptationConfig ad, uint64_t seed);

    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    const BackboneConfig& config() const { return bb_; }
    const AdaptationConfig& adaptation_config() const { return ad_; }

    Tensor normalize(const Tensor& image) const;

    // image is a raw [0,1] (B,3,H,W) batch; outputs are (B,C_k,H_k,W_k) maps.
    std::vector<Var> encode(Graph& g, const Tensor& image, bool use_adaptation = true);
    std::vector<Var> neck(Graph& g, const std::vector<Var>& feats);
    Var fuse(Graph& g, Var f3_hat, Var f4_hat, double multiplier = 1.0);
    Var decode(Graph& g, Var f1_hat, Var f2_hat, Var f3_fuse);  // (B,H,W) in [0,1]
    Var forward(Graph& g, const Tensor& image, const FwdOptions& opt = {});

private:
    Var encoder_block(Graph& g, Var x, int64_t stage, int64_t block, bool adapt, Var signal_tok);
    Var conv1x1(Graph& g, Var x, const std::string& prefix);
    Var p(Graph& g, const std::string& name) { return g.param(params_.at(name)); }

    BackboneConfig bb_;
    AdaptationConfig ad_;
    ParamStore params_;
};

// Copies values elementwise; parameter sets must be congruent (names + shapes).
void copy_param_values(const ParamStore& src, ParamStore& dst);

}  // namespace uwassess
