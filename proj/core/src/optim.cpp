#include "uwassess/optim.hpp"

#include "uwassess/common.hpp"

#include <cmath>

namespace uwassess {

void AdamW::step(ParamStore& params, double lr) {
    ++step_;
    const double bc1 = 1.0 - std::pow(hyper_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(hyper_.beta2, static_cast<double>(step_));
    for (auto& [name, param] : params.all()) {
        if (!param.trainable || !param.grad.defined()) continue;
        const std::string mkey = "optim/m/" + name;
        const std::string vkey = "optim/v/" + name;
        if (!state_.contains(mkey)) {
            state_.add(mkey, Tensor::zeros(param.value.shape()));
            state_.add(vkey, Tensor::zeros(param.value.shape()));
        }
        Tensor& m = state_.at(mkey).value;
        Tensor& v = state_.at(vkey).value;
        if (!m.same_shape(param.value)) {
            throw InvariantViolation("optimizer state shape mismatch for " + name);
        }
        for (int64_t i = 0; i < param.value.numel(); ++i) {
            const double g = param.grad.at(i);
            m.at(i) = hyper_.beta1 * m.at(i) + (1.0 - hyper_.beta1) * g;
            v.at(i) = hyper_.beta2 * v.at(i) + (1.0 - hyper_.beta2) * g * g;
            const double m_hat = m.at(i) / bc1;
            const double v_hat = v.at(i) / bc2;
            double w = param.value.at(i);
            w -= lr * hyper_.weight_decay * w;  // decoupled decay
            w -= lr * m_hat / (std::sqrt(v_hat) + hyper_.eps);
            param.value.at(i) = w;
        }
    }
}

}  // namespace uwassess
