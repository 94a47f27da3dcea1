#pragma once

#include <deque>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "uwassess/tensor.hpp"

namespace uwassess {

// A named trainable (or frozen) weight. Gradients accumulate into `grad`
// during Graph::backward; frozen parameters never receive updates but may
// still carry gradients (the optimizer skips them).
struct Parameter {
    Tensor value;
    Tensor grad;
    bool trainable = true;

    void zero_grad() {
        if (grad.defined()) grad.zero();
    }
    void ensure_grad() {
        if (!grad.defined()) grad = Tensor::zeros(value.shape());
    }
};

// Ordered name -> Parameter map. Iteration order is lexicographic, which keeps
// optimizer updates and checkpoints deterministic.
class ParamStore {
public:
    Parameter& add(const std::string& name, Tensor value, bool trainable = true);
    Parameter& at(const std::string& name);
    const Parameter& at(const std::string& name) const;
    bool contains(const std::string& name) const { return params_.count(name) > 0; }

    std::map<std::string, Parameter>& all() { return params_; }
    const std::map<std::string, Parameter>& all() const { return params_; }

    size_t size() const { return params_.size(); }
    int64_t total_elements() const;
    void zero_grads();

private:
    std::map<std::string, Parameter> params_;
};

// Define-by-run reverse-mode autodiff tape. Nodes are owned by the graph;
// Var is a stable pointer into it. One graph per forward/backward pass.
class Graph {
public:
    struct Node {
        Tensor value;
        Tensor grad;  // allocated on demand
        std::function<void(Node&)> backward;
        Parameter* param = nullptr;
        bool needs_grad = false;
    };
    using Var = Node*;

    Var constant(Tensor value);
    Var leaf(Tensor value, bool needs_grad);
    Var param(Parameter& p);

    // Seeds root->grad with ones and runs the tape in reverse. Root must be
    // scalar. Parameter gradients are accumulated into their stores.
    void backward(Var root);

    size_t size() const { return nodes_.size(); }

    Node& make(Tensor value, bool needs_grad);
    static void ensure_grad(Node& n) {
        if (!n.grad.defined()) n.grad = Tensor::zeros(n.value.shape());
    }
    static void accumulate(Node& n, const Tensor& g);

private:
    std::deque<Node> nodes_;
};

using Var = Graph::Var;

// Op vocabulary. All ops validate shapes and register exact backward rules.
namespace ag {

Var add(Graph& g, Var a, Var b);
Var sub(Graph& g, Var a, Var b);
Var mul(Graph& g, Var a, Var b);
Var scale(Graph& g, Var a, double s);
Var add_bias(Graph& g, Var x, Var bias);                  // bias over last dim
Var add_broadcast_batch(Graph& g, Var x, Var p);          // x (B,...), p (...)
Var mul_const(Graph& g, Var x, const Tensor& m);          // same-shape constant
Var mul_channel_mask(Graph& g, Var x, const Tensor& mask);  // x (B,C,H,W), mask (C)
Var mul_sample_scalar(Graph& g, Var x, Var s);            // x (B,...), s (B)

Var linear(Graph& g, Var x, Var w);                        // x (...,Cin) @ w (Cin,Cout)
Var linear(Graph& g, Var x, Var w, Var bias);
Var layernorm(Graph& g, Var x, Var gamma, Var beta, double eps = 1e-5);
Var softmax_last(Graph& g, Var x);
Var sigmoid(Graph& g, Var x);
Var gelu(Graph& g, Var x);
Var relu(Graph& g, Var x);

// (B,H,M,K) x (B,H,K,N) -> (B,H,M,N), optional per-slice transposes.
Var bmm(Graph& g, Var a, Var b, bool trans_a = false, bool trans_b = false);
Var split_heads(Graph& g, Var x, int64_t heads);           // (B,T,C)->(B,H,T,C/H)
Var merge_heads(Graph& g, Var x);                          // inverse

Var reshape(Graph& g, Var x, std::vector<int64_t> shape);
Var token_mean(Graph& g, Var x);                           // (B,T,C)->(B,C)
Var mean_all(Graph& g, Var x);                             // -> (1)
Var per_image_mean(Graph& g, Var x);                       // (B,...)->(B)
Var batch_sum(Graph& g, Var x);                            // (B)->(1)

// Elementwise binary cross-entropy against a constant target; probabilities
// are clamped to [eps, 1-eps] before the logs.
Var bce_elem(Graph& g, Var p, const Tensor& target, double eps = 1e-7);

Var upsample_bilinear(Graph& g, Var x, int64_t factor);    // (B,C,H,W)
Var avgpool2x(Graph& g, Var x);                            // (B,C,H,W)
Var patchify(Graph& g, Var x, int64_t k);                  // (B,C,H,W)->(B,T,C*k*k)
Var map_to_tokens(Graph& g, Var x);                        // (B,C,H,W)->(B,HW,C)
Var tokens_to_map(Graph& g, Var x, int64_t h, int64_t w);  // inverse

Var detach(Graph& g, Var x);

}  // namespace ag

// Bilinear sampling weights for one axis, half-pixel convention with edge
// clamping. Shared by the autodiff upsampler and the plain image resizer.
struct BilinearAxis {
    std::vector<int64_t> i0, i1;
    std::vector<double> frac;
};
BilinearAxis bilinear_axis(int64_t src_n, int64_t dst_n);

}  // namespace uwassess
