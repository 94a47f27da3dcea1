#pragma once

#include "uwassess/graph.hpp"

#include <vector>

namespace uwassess {

struct AdaptationConfig {
    bool enabled = true;
    int64_t lora_rank = 4;
    double lora_scale = 0.0;       // 0 means the 1/rank default
    int64_t adapter_hidden = 8;
    double signal_mask_ratio = 0.25;
    bool gates_enabled = true;     // false pins every gate to 1 (plain stacked arm)
    double encoder_tune_ratio = 0.0;

    void validate() const;
    double effective_lora_scale() const { return lora_scale > 0.0 ? lora_scale : 1.0 / static_cast<double>(lora_rank); }
};

// High-frequency component of a normalized image batch (B,C,H,W): 2-D DFT,
// zero the centered low-frequency block (|freq| < dim*ratio/2 on both axes),
// inverse DFT, real part. Linear in the input; constants map to (near) zero.
Tensor extract_task_signal(const Tensor& images, double mask_ratio);

// Per-sample gate: sigmoid(linear(mean over tokens)). tokens (B,T,C) -> (B).
Var adaptation_gate(Graph& g, Var tokens, Var w, Var b);

// Marks trainable flags: adaptation/* and backbone/dec/* always trainable;
// encoder transformer blocks trainable only when selected by the top-fraction
// rule (deepest stage first, later blocks within a stage are deeper); stem,
// positional embedding, merges and neck unfreeze only at ratio 1. Returns the
// number of selected blocks.
int64_t apply_freeze_policy(ParamStore& params, const std::vector<int64_t>& stage_depths, double tune_ratio);

}  // namespace uwassess
