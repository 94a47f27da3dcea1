#pragma once

#include "uwassess/graph.hpp"

#include <cstdint>

namespace uwassess {

// Decoupled weight decay Adam. Steps only the trainable parameters; first and
// second moment buffers live in their own store so a checkpoint can carry them.
class AdamW {
public:
    struct Hyper {
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
        double weight_decay = 0.01;
    };

    AdamW() = default;
    explicit AdamW(Hyper hyper) : hyper_(hyper) {}

    const Hyper& hyper() const { return hyper_; }
    int64_t step_count() const { return step_; }
    void set_step_count(int64_t step) { step_ = step; }

    // One update with the given learning rate. Lazily creates moment buffers
    // keyed optim/m/<param> and optim/v/<param>; skips frozen parameters and
    // parameters that never received a gradient.
    void step(ParamStore& params, double lr);

    ParamStore& state() { return state_; }
    const ParamStore& state() const { return state_; }

private:
    Hyper hyper_;
    ParamStore state_;
    int64_t step_ = 0;
};

}  // namespace uwassess
