#include "uwassess/graph.hpp"

#include <Eigen/Core>

#include <cmath>

namespace uwassess {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using CMapM = Eigen::Map<const MatRM>;

Parameter& ParamStore::add(const std::string& name, Tensor value, bool trainable) {
    auto [it, inserted] = params_.try_emplace(name);
    if (!inserted) throw InvariantViolation("ParamStore: duplicate parameter " + name);
    it->second.value = std::move(value);
    it->second.trainable = trainable;
    return it->second;
}

Parameter& ParamStore::at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw InvariantViolation("ParamStore: unknown parameter " + name);
    return it->second;
}

const Parameter& ParamStore::at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw InvariantViolation("ParamStore: unknown parameter " + name);
    return it->second;
}

int64_t ParamStore::total_elements() const {
    int64_t n = 0;
    for (const auto& [name, p] : params_) n += p.value.numel();
    return n;
}

void ParamStore::zero_grads() {
    for (auto& [name, p] : params_) p.zero_grad();
}

Graph::Node& Graph::make(Tensor value, bool needs_grad) {
    nodes_.emplace_back();
    Node& n = nodes_.back();
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    return n;
}

Var Graph::constant(Tensor value) { return &make(std::move(value), false); }

Var Graph::leaf(Tensor value, bool needs_grad) { return &make(std::move(value), needs_grad); }

Var Graph::param(Parameter& p) {
    Node& n = make(p.value, true);
    n.param = &p;
    return &n;
}

void Graph::accumulate(Node& n, const Tensor& g) {
    ensure_grad(n);
    double* dst = n.grad.data();
    const double* src = g.data();
    const int64_t count = n.grad.numel();
    for (int64_t i = 0; i < count; ++i) dst[i] += src[i];
}

void Graph::backward(Var root) {
    if (root->value.numel() != 1) {
        throw InvariantViolation("Graph::backward: root must be scalar, got " + root->value.shape_str());
    }
    ensure_grad(*root);
    root->grad.fill(1.0);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        Node& n = *it;
        if (!n.needs_grad || !n.grad.defined()) continue;
        if (n.backward) n.backward(n);
        if (n.param) {
            n.param->ensure_grad();
            double* dst = n.param->grad.data();
            const double* src = n.grad.data();
            for (int64_t i = 0; i < n.grad.numel(); ++i) dst[i] += src[i];
        }
    }
}

BilinearAxis bilinear_axis(int64_t src_n, int64_t dst_n) {
    BilinearAxis ax;
    ax.i0.resize(dst_n);
    ax.i1.resize(dst_n);
    ax.frac.resize(dst_n);
    const double scale = static_cast<double>(src_n) / static_cast<double>(dst_n);
    for (int64_t d = 0; d < dst_n; ++d) {
        double src = (static_cast<double>(d) + 0.5) * scale - 0.5;
        if (src < 0.0) {
            ax.i0[d] = 0;
            ax.i1[d] = 0;
            ax.frac[d] = 0.0;
            continue;
        }
        int64_t i0 = static_cast<int64_t>(src);
        if (i0 > src_n - 1) i0 = src_n - 1;
        ax.i0[d] = i0;
        ax.i1[d] = std::min<int64_t>(i0 + 1, src_n - 1);
        ax.frac[d] = src - static_cast<double>(i0);
    }
    return ax;
}

namespace ag {

namespace {

void check_same_shape(const Var a, const Var b, const char* op) {
    if (!a->value.same_shape(b->value)) {
        throw InvariantViolation(std::string(op) + ": shape mismatch " + a->value.shape_str() + " vs " +
                                 b->value.shape_str());
    }
}

// Flatten all leading dims of a (..., C) tensor.
int64_t leading(const Tensor& t) { return t.numel() / t.shape().back(); }

// Elements per batch entry, safe for zero-sized batches.
int64_t per_batch(const Tensor& t) {
    int64_t n = 1;
    for (size_t i = 1; i < t.rank(); ++i) n *= t.dim(i);
    return n;
}

}  // namespace

Var add(Graph& g, Var a, Var b) {
    check_same_shape(a, b, "add");
    Tensor out = a->value.clone();
    const double* pb = b->value.data();
    for (int64_t i = 0; i < out.numel(); ++i) out.at(i) += pb[i];
    Graph::Node& n = g.make(std::move(out), a->needs_grad || b->needs_grad);
    if (n.needs_grad) {
        n.backward = [a, b](Graph::Node& self) {
            if (a->needs_grad) Graph::accumulate(*a, self.grad);
            if (b->needs_grad) Graph::accumulate(*b, self.grad);
        };
    }
    return &n;
}

Var sub(Graph& g, Var a, Var b) {
    check_same_shape(a, b, "sub");
    Tensor out = a->value.clone();
    const double* pb = b->value.data();
    for (int64_t i = 0; i < out.numel(); ++i) out.at(i) -= pb[i];
    Graph::Node& n = g.make(std::move(out), a->needs_grad || b->needs_grad);
    if (n.needs_grad) {
        n.backward = [a, b](Graph::Node& self) {
            if (a->needs_grad) Graph::accumulate(*a, self.grad);
            if (b->needs_grad) {
                Graph::ensure_grad(*b);
                for (int64_t i = 0; i < self.grad.numel(); ++i) b->grad.at(i) -= self.grad.at(i);
            }
        };
    }
    return &n;
}

Var mul(Graph& g, Var a, Var b) {
    check_same_shape(a, b, "mul");
    Tensor out = a->value.clone();
    const double* pb = b->value.data();
    for (int64_t i = 0; i < out.numel(); ++i) out.at(i) *= pb[i];
    Graph::Node& n = g.make(std::move(out), a->needs_grad || b->needs_grad);
    if (n.needs_grad) {
        Tensor av = a->value, bv = b->value;
        n.backward = [a, b, av, bv](Graph::Node& self) {
            if (a->needs_grad) {
                Graph::ensure_grad(*a);
                for (int64_t i = 0; i < self.grad.numel(); ++i) a->grad.at(i) += self.grad.at(i) * bv.at(i);
            }
            if (b->needs_grad) {
                Graph::ensure_grad(*b);
                for (int64_t i = 0; i < self.grad.numel(); ++i) b->grad.at(i) += self.grad.at(i) * av.at(i);
            }
        };
    }
    return &n;
}

Var scale(Graph& g, Var a, double s) {
    Tensor out = a->value.clone();
    for (int64_t i = 0; i < out.numel(); ++i) out.at(i) *= s;
    Graph::Node& n = g.make(std::move(out), a->needs_grad);
    if (n.needs_grad) {
        n.backward = [a, s](Graph::Node& self) {
            Graph::ensure_grad(*a);
            for (int64_t i = 0; i < self.grad.numel(); ++i) a->grad.at(i) += s * self.grad.at(i);
        };
    }
    return &n;
}

Var add_bias(Graph& g, Var x, Var bias) {
    const int64_t c = x->value.shape().back();
    if (bias->value.numel() != c) {
        throw InvariantViolation("add_bias: bias size " + bias->value.shape_str() + " vs channels " +
                                 std::to_string(c));
    }
    Tensor out = x->value.clone();
    const double* pb = bias->value.data();
    const int64_t rows = leading(x->value);
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t j = 0; j < c; ++j) out.at(r * c + j) += pb[j];
    Graph::Node& n = g.make(std::move(out), x->needs_grad || bias->needs_grad);
    if (n.needs_grad) {
        n.backward = [x, bias, rows, c](Graph::Node& self) {
            if (x->needs_grad) Graph::accumulate(*x, self.grad);
            if (bias->needs_grad) {
                Graph::ensure_grad(*bias);
                for (int64_t r = 0; r < rows; ++r)
                    for (int64_t j = 0; j < c; ++j) bias->grad.at(j) += self.grad.at(r * c + j);
            }
        };
    }
    return &n;
}

Var add_broadcast_batch(Graph& g, Var x, Var p) {
    const int64_t b = x->value.dim(0);
    const int64_t per = per_batch(x->value);
    if (p->value.numel() != per) {
        throw InvariantViolation("add_broadcast_batch: " + p->value.shape_str() + " does not tile " +
                                 x->value.shape_str());
    }
    Tensor out = x->value.clone();
    const double* pp = p->value.data();
    for (int64_t bi = 0; bi < b; ++bi) {
        double* dst = out.data() + bi * per;
        for (int64_t i = 0; i < per; ++i) dst[i] += pp[i];
    }
    Graph::Node& n = g.make(std::move(out), x->needs_grad || p->needs_grad);
    if (n.needs_grad) {
        n.backward = [x, p, b, per](Graph::Node& self) {
            if (x->needs_grad) Graph::accumulate(*x, self.grad);
            if (p->needs_grad) {
                Graph::ensure_grad(*p);
                for (int64_t bi = 0; bi < b; ++bi) {
                    const double* gp = self.grad.data() + bi * per;
                    for (int64_t i = 0; i < per; ++i) p->grad.at(i) += gp[i];
                }
            }
        };
    }
    return &n;
}

Var mul_const(Graph& g, Var x, const Tensor& m) {
    if (!x->value.same_shape(m)) {
        throw InvariantViolation("mul_const: shape mismatch " + x->value.shape_str() + " vs " + m.shape_str());
    }
    Tensor out = x->value.clone();
    for (int64_t i = 0; i < out.numel(); ++i) out.at(i) *= m.at(i);
    Graph::Node& n = g.make(std::move(out), x->needs_grad);
    if (n.needs_grad) {
        Tensor mv = m;
        n.backward = [x, mv](Graph::Node& self) {
            Graph::ensure_grad(*x);
            for (int64_t i = 0; i < self.grad.numel(); ++i) x->grad.at(i) += self.grad.at(i) * mv.at(i);
        };
    }
    return &n;
}

Var mul_channel_mask(Graph& g, Var x, const Tensor& mask) {
    if (x->value.rank() != 4 || mask.numel() != x->value.dim(1)) {
        throw InvariantViolation("mul_channel_mask: expected (B,C,H,W) with mask of size C");
    }
    const int64_t b = x->value.dim(0), c = x->value.dim(1), hw = x->value.dim(2) * x->value.dim(3);
    Tensor out = x->value.clone();
    for (int64_t bi = 0; bi < b; ++bi)
        for (int64_t ci = 0; ci < c; ++ci) {
            const double m = mask.at(ci);
            double* p = out.data() + (bi * c + ci) * hw;
            for (int64_t i = 0; i < hw; ++i) p[i] *= m;
        }
    Graph::Node& n = g.make(std::move(out), x->needs_grad);
    if (n.needs_grad) {
        Tensor mv = mask;
        n.backward = [x, mv, b, c, hw](Graph::Node& self) {
            Graph::ensure_grad(*x);
            for (int64_t bi = 0; bi < b; ++bi)
                for (int64_t ci = 0; ci < c; ++ci) {
                    const double m = mv.at(ci);
                    const double* gp = self.grad.data() + (bi * c + ci) * hw;
                    double* xp = x->grad.data() + (bi * c + ci) * hw;
                    for (int64_t i = 0; i < hw; ++i) xp[i] += gp[i] * m;
                }
        };
    }
    return &n;
}

Var mul_sample_scalar(Graph& g, Var x, Var s) {
    const int64_t b = x->value.dim(0);
    if (s->value.numel() != b) {
        throw InvariantViolation("mul_sample_scalar: scalar count " + s->value.shape_str() + " vs batch " +
                                 std::to_string(b));
    }
    const int64_t per = per_batch(x->value);
    Tensor out = x->value.clone();
    for (int64_t bi = 0; bi < b; ++bi) {
        const double sv = s->value.at(bi);
        double* p = out.data() + bi * per;
        for (int64_t i = 0; i < per; ++i) p[i] *= sv;
    }
    Graph::Node& n = g.make(std::move(out), x->needs_grad || s->needs_grad);
    if (n.needs_grad) {
        Tensor xv = x->value, sv = s->value;
        n.backward = [x, s, xv, sv, b, per](Graph::Node& self) {
            if (x->needs_grad) {
                Graph::ensure_grad(*x);
                for (int64_t bi = 0; bi < b; ++bi) {
                    const double sc = sv.at(bi);
                    const double* gp = self.grad.data() + bi * per;
                    double* xp = x->grad.data() + bi * per;
                    for (int64_t i = 0; i < per; ++i) xp[i] += gp[i] * sc;
                }
            }
            if (s->needs_grad) {
                Graph::ensure_grad(*s);
                for (int64_t bi = 0; bi < b; ++bi) {
                    const double* gp = self.grad.data() + bi * per;
                    const double* xp = xv.data() + bi * per;
                    double acc = 0.0;
                    for (int64_t i = 0; i < per; ++i) acc += gp[i] * xp[i];
                    s->grad.at(bi) += acc;
                }
            }
        };
    }
    return &n;
}

Var linear(Graph& g, Var x, Var w) {
    const int64_t cin = x->value.shape().back();
    if (w->value.rank() != 2 || w->value.dim(0) != cin) {
        throw InvariantViolation("linear: weight " + w->value.shape_str() + " incompatible with input " +
                                 x->value.shape_str());
    }
    const int64_t m = leading(x->value);
    const int64_t cout = w->value.dim(1);
    std::vector<int64_t> out_shape = x->value.shape();
    out_shape.back() = cout;
    Tensor out{out_shape};
    {
        CMapM xm(x->value.data(), m, cin);
        CMapM wm(w->value.data(), cin, cout);
        MapM om(out.data(), m, cout);
        om.noalias() = xm * wm;
    }
    Graph::Node& n = g.make(std::move(out), x->needs_grad || w->needs_grad);
    if (n.needs_grad) {
        Tensor xv = x->value, wv = w->value;
        n.backward = [x, w, xv, wv, m, cin, cout](Graph::Node& self) {
            CMapM gm(self.grad.data(), m, cout);
            if (x->needs_grad) {
                Graph::ensure_grad(*x);
                CMapM wm(wv.data(), cin, cout);
                MapM xg(x->grad.data(), m, cin);
                xg.noalias() += gm * wm.transpose();
            }
            if (w->needs_grad) {
                Graph::ensure_grad(*w);
                CMapM xm(xv.data(), m, cin);
                MapM wg(w->grad.data(), cin, cout);
                wg.noalias() += xm.transpose() * gm;
            }
        };
    }
    return &n;
}

Var linear(Graph& g, Var x, Var w, Var bias) { return add_bias(g, linear(g, x, w), bias); }

Var layernorm(Graph& g, Var x, Var gamma, Var beta, double eps) {
    const int64_t c = x->value.shape().back();
    if (gamma->value.numel() != c || beta->value.numel() != c) {
        throw InvariantViolation("layernorm: affine parameter size mismatch");
    }
    const int64_t rows = leading(x->value);
    Tensor out{x->value.shape()};
    Tensor xhat{x->value.shape()};
    Tensor inv_std{{rows}};
    for (int64_t r = 0; r < rows; ++r) {
        const double* xp = x->value.data() + r * c;
        double mu = 0.0;
        for (int64_t j = 0; j < c; ++j) mu += xp[j];
        mu /= static_cast<double>(c);
        double var = 0.0;
        for (int64_t j = 0; j < c; ++j) var += (xp[j] - mu) * (xp[j] - mu);
        var /= static_cast<double>(c);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std.at(r) = is;
        for (int64_t j = 0; j < c; ++j) {
            const double xh = (xp[j] - mu) * is;
            xhat.at(r * c + j) = xh;
            out.at(r * c + j) = gamma->value.at(j) * xh + beta->value.at(j);
        }
    }
    Graph::Node& n = g.make(std::move(out), x->needs_grad || gamma->needs_grad || beta->needs_grad);
    if (n.needs_grad) {
        Tensor gm = gamma->value;
        n.backward = [x, gamma, beta, xhat, inv_std, gm, rows, c](Graph::Node& self) {
            for (int64_t r = 0; r < rows; ++r) {
                const double* gp = self.grad.data() + r * c;
                const double* xh = xhat.data() + r * c;
                if (gamma->needs_grad) {
                    Graph::ensure_grad(*gamma);
                    for (int64_t j = 0; j < c; ++j) gamma->grad.at(j) += gp[j] * xh[j];
                }
                if (beta->needs_grad) {
                    Graph::ensure_grad(*beta);
                    for (int64_t j = 0; j < c; ++j) beta->grad.at(j) += gp[j];
                }
                if (x->needs_grad) {
                    Graph::ensure_grad(*x);
                    double mean_gy = 0.0, mean_gy_xh = 0.0;
                    for (int64_t j = 0; j < c; ++j) {
                        const double gy = gp[j] * gm.at(j);
                        mean_gy += gy;
                        mean_gy_xh += gy * xh[j];
                    }
                    mean_gy /= static_cast<double>(c);
                    mean_gy_xh /= static_cast<double>(c);
                    const double is = inv_std.at(r);
                    double* xg = x->grad.data() + r * c;
                    for (int64_t j = 0; j < c; ++j) {
                        const double gy = gp[j] * gm.at(j);
                        xg[j] += is * (gy - mean_gy - xh[j] * mean_gy_xh);
                    }
                }
            }
        };
    }
    return &n;
}

Var softmax_last(Graph& g, Var x) {
    const int64_t c = x->value.shape().back();
    const int64_t rows = leading(x->value);
    Tensor out{x->value.shape()};
    for (int64_t r = 0; r < rows; ++r) {
        const double* xp = x->value.data() + r * c;
        double m = xp[0];
        for (int64_t j = 1; j < c; ++j) m = std::max(m, xp[j]);
        double sum = 0.0;
        for (int64_t j = 0; j < c; ++j) {
            const double e = std::exp(xp[j] - m);
            out.at(r * c + j) = e;
            sum += e;
        }
        for (int64_t j = 0; j < c; ++j) out.at(r * c + j) /= sum;
    }
    Graph::Node& n = g.make(std::move(out), x->needs_grad);
    if (n.needs_grad) {
        Tensor y = n.value;
        n.backward = [x, y, rows, c](Graph::Node& self) {
            Graph::ensure_grad(*x);
            for (int64_t r = 0; r < rows; ++r) {
                const double* gp = self.grad.data() + r * c;
                const double* yp = y.data() + r * c;
                double dot = 0.0;
                for (int64_t j = 0; j < c; ++j) dot += gp[j] * yp[j];
                double* xg = x->grad.data() + r * c;
                for (int64_t j = 0; j < c; ++j) xg[j] += yp[j] * (gp[j] - dot);
            }
        };
    }
    return &n;
}

Var sigmoid(Graph& g, Var x) {
    Tensor out{x->value.shape()};
    for (int64_t i = 0; i < out.numel(); ++i) out.at(i) = 1.0 / (1.0 + std::exp(-x->value.at(i)));
    Graph::Node& n = g.make(std::move(out), x->needs_grad);
    if (n.needs_grad) {
        Tensor y = n.value;
        n.backward = [x, y](Graph::Node& self) {
            Graph::ensure_grad(*x);
            for (int64_t i = 0; i < self.grad.numel(); ++i) {
                const double yv = y.at(i);
                x->grad.at(i) += self.grad.at(i) * yv * (1.0 - yv);
            }
        };
    }
    return &n;
}

Var gelu(Graph& g, Var x) {
    constexpr double inv_sqrt2 = 0.7071067811865475244;
    constexpr double inv_sqrt2pi = 0.3989422804014326779;
    Tensor out{x->value.shape()};
    for (int64_t i = 0; i < out.numel(); ++i) {
        const double v = x->value.at(i);
        out.at(i) = 0.5 * v * (1.0 + std::erf(v * inv_sqrt2));
    }
    Graph::Node& n = g.make(std::move(out), x->needs_grad);
    if (n.needs_grad) {
        Tensor xv = x->value;
        n.backward = [x, xv](Graph::Node& self) {
            Graph::ensure_grad(*x);
            for (int64_t i = 0; i < self.grad.numel(); ++i) {
                const double v = xv.at(i);
                const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
                const double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
                x->grad.at(i) += self.grad.at(i) * (cdf + v * pdf);
            }
        };
    }
    return &n;
}

Var relu(Graph& g, Var x) {
    Tensor out{x->value.shape()};
    for (int64_t i = 0; i < out.numel(); ++i) out.at(i) = x->value.at(i) > 0.0 ? x->value.at(i) : 0.0;
    Graph::Node& n = g.make(std::move(out), x->needs_grad);
    if (n.needs_grad) {
        Tensor xv = x->value;
        n.backward = [x, xv](Graph::Node& self) {
            Graph::ensure_grad(*x);
            for (int64_t i = 0; i < self.grad.numel(); ++i)
                if (xv.at(i) > 0.0) x->grad.at(i) += self.grad.at(i);
        };
    }
    return &n;
}

Var bmm(Graph& g, Var a, Var b, bool trans_a, bool trans_b) {
    if (a->value.rank() != 4 || b->value.rank() != 4) throw InvariantViolation("bmm: expects rank-4 inputs");
    const int64_t bb = a->value.dim(0), hh = a->value.dim(1);
    if (b->value.dim(0) != bb || b->value.dim(1) != hh) throw InvariantViolation("bmm: batch dims mismatch");
    const int64_t ar = a->value.dim(2), ac = a->value.dim(3);
    const int64_t br = b->value.dim(2), bc = b->value.dim(3);
    const int64_t m = trans_a ? ac : ar;
    const int64_t k = trans_a ? ar : ac;
    const int64_t k2 = trans_b ? bc : br;
    const int64_t nn = trans_b ? br : bc;
    if (k != k2) throw InvariantViolation("bmm: inner dims mismatch");
    Tensor out{{bb, hh, m, nn}};
    const int64_t a_stride = ar * ac, b_stride = br * bc, o_stride = m * nn;
    for (int64_t s = 0; s < bb * hh; ++s) {
        CMapM am(a->value.data() + s * a_stride, ar, ac);
        CMapM bm(b->value.data() + s * b_stride, br, bc);
        MapM om(out.data() + s * o_stride, m, nn);
        if (!trans_a && !trans_b) om.noalias() = am * bm;
        else if (!trans_a && trans_b) om.noalias() = am * bm.transpose();
        else if (trans_a && !trans_b) om.noalias() = am.transpose() * bm;
        else om.noalias() = am.transpose() * bm.transpose();
    }
    Graph::Node& n = g.make(std::move(out), a->needs_grad || b->needs_grad);
    if (n.needs_grad) {
        Tensor av = a->value, bv = b->value;
        n.backward = [a, b, av, bv, trans_a, trans_b, bb, hh, ar, ac, br, bc, m, nn](Graph::Node& self) {
            const int64_t a_stride = ar * ac, b_stride = br * bc, o_stride = m * nn;
            for (int64_t s = 0; s < bb * hh; ++s) {
                CMapM gm(self.grad.data() + s * o_stride, m, nn);
                CMapM am(av.data() + s * a_stride, ar, ac);
                CMapM bm(bv.data() + s * b_stride, br, bc);
                if (a->needs_grad) {
                    Graph::ensure_grad(*a);
                    MapM agm(a->grad.data() + s * a_stride, ar, ac);
                    // dA' = g * B'^T with A' = op(A)
                    if (!trans_a) {
                        if (!trans_b) agm.noalias() += gm * bm.transpose();
                        else agm.noalias() += gm * bm;
                    } else {
                        if (!trans_b) agm.noalias() += bm * gm.transpose();
                        else agm.noalias() += bm.transpose() * gm.transpose();
                    }
                }
                if (b->needs_grad) {
                    Graph::ensure_grad(*b);
                    MapM bgm(b->grad.data() + s * b_stride, br, bc);
                    // dB' = A'^T * g
                    if (!trans_b) {
                        if (!trans_a) bgm.noalias() += am.transpose() * gm;
                        else bgm.noalias() += am * gm;
                    } else {
                        if (!trans_a) bgm.noalias() += gm.transpose() * am;
                        else bgm.noalias() += (am * gm).transpose();
                    }
                }
            }
        };
    }
    return &n;
}

Var split_heads(Graph& g, Var x, int64_t heads) {
    if (x->value.rank() != 3) throw InvariantViolation("split_heads: expects (B,T,C)");
    const int64_t b = x->value.dim(0), t = x->value.dim(1), c = x->value.dim(2);
    if (c % heads != 0) throw ConfigError("split_heads: channels not divisible by head count");
    const int64_t dh = c / heads;
    Tensor out{{b, heads, t, dh}};
    for (int64_t bi = 0; bi < b; ++bi)
        for (int64_t ti = 0; ti < t; ++ti)
            for (int64_t hi = 0; hi < heads; ++hi)
                for (int64_t di = 0; di < dh; ++di)
                    out.at(((bi * heads + hi) * t + ti) * dh + di) = x->value.at((bi * t + ti) * c + hi * dh + di);
    Graph::Node& n = g.make(std::move(out), x->needs_grad);
    if (n.needs_grad) {
        n.backward = [x, b, t, c, heads, dh](Graph::Node& self) {
            Graph::ensure_grad(*x);
            for (int64_t bi = 0; bi < b; ++bi)
                for (int64_t ti = 0; ti < t; ++ti)
                    for (int64_t hi = 0; hi < heads; ++hi)
                        for (int64_t di = 0; di < dh; ++di)
                            x->grad.at((bi * t + ti) * c + hi * dh + di) +=
                                self.grad.at(((bi * heads + hi) * t + ti) * dh + di);
        };
    }
    return &n;
}

Var merge_heads(Graph& g, Var x) {
    if (x->value.rank() != 4) throw InvariantViolation("merge_heads: expects (B,H,T,dh)");
    const int64_t b = x->value.dim(0), heads = x->value.dim(1), t = x->value.dim(2), dh = x->value.dim(3);
    const int64_t c = heads * dh;
    Tensor out{{b, t, c}};
    for (int64_t bi = 0; bi < b; ++bi)
        for (int64_t hi = 0; hi < heads; ++hi)
            for (int64_t ti = 0; ti < t; ++ti)
                for (int64_t di = 0; di < dh; ++di)
                    out.at((bi * t + ti) * c + hi * dh + di) = x->value.at(((bi * heads + hi) * t + ti) * dh + di);
    Graph::Node& n = g.make(std::move(out), x->needs_grad);
    if (n.needs_grad) {
        n.backward = [x, b, t, c, heads, dh](Graph::Node& self) {
            Graph::ensure_grad(*x);
            for (int64_t bi = 0; bi < b; ++bi)
                for (int64_t hi = 0; hi < heads; ++hi)
                    for (int64_t ti = 0; ti < t; ++ti)
                        for (int64_t di = 0; di < dh; ++di)
                            x->grad.at(((bi * heads + hi) * t + ti) * dh + di) +=
                                self.grad.at((bi * t + ti) * c + hi * dh + di);
        };
    }
    return &n;
}

Var reshape(Graph& g, Var x, std::vector<int64_t> shape) {
    Graph::Node& n = g.make(x->value.reshaped(shape), x->needs_grad);
    if (n.needs_grad) {
        n.backward = [x](Graph::Node& self) {
            Graph::ensure_grad(*x);
            for (int64_t i = 0; i < self.grad.numel(); ++i) x->grad.at(i) += self.grad.at(i);
        };
    }
    return &n;
}

Var token_mean(Graph& g, Var x) {
    if (x->value.rank() != 3) throw InvariantViolation("token_mean: expects (B,T,C)");
    const int64_t b = x->value.dim(0), t = x->value.dim(1), c = x->value.dim(2);
    Tensor out{{b, c}};
    for (int64_t bi = 0; bi < b; ++bi)
        for (int64_t ti = 0; ti < t; ++ti)
            for (int64_t ci = 0; ci < c; ++ci) out.at(bi * c + ci) += x->value.at((bi * t + ti) * c + ci);
    for (int64_t i = 0; i < out.numel(); ++i) out.at(i) /= static_cast<double>(t);
    Graph::Node& n = g.make(std::move(out), x->needs_grad);
    if (n.needs_grad) {
        n.backward = [x, b, t, c](Graph::Node& self) {
            Graph::ensure_grad(*x);
            const double inv = 1.0 / static_cast<double>(t);
            for (int64_t bi = 0; bi < b; ++bi)
                for (int64_t ti = 0; ti < t; ++ti)
                    for (int64_t ci = 0; ci < c; ++ci)
                        x->grad.at((bi * t + ti) * c + ci) += self.grad.at(bi * c + ci) * inv;
        };
    }
    return &n;
}

Var mean_all(Graph& g, Var x) {
    const int64_t count = x->value.numel();
    Tensor out{{1}};
    double acc = 0.0;
    for (int64_t i = 0; i < count; ++i) acc += x->value.at(i);
    out.at(0) = acc / static_cast<double>(count);
    Graph::Node& n = g.make(std::move(out), x->needs_grad);
    if (n.needs_grad) {
        n.backward = [x, count](Graph::Node& self) {
            Graph::ensure_grad(*x);
            const double gv = self.grad.at(0) / static_cast<double>(count);
            for (int64_t i = 0; i < count; ++i) x->grad.at(i) += gv;
        };
    }
    return &n;
}

Var per_image_mean(Graph& g, Var x) {
    const int64_t b = x->value.dim(0);
    const int64_t per = per_batch(x->value);
    Tensor out{{b}};
    for (int64_t bi = 0; bi < b; ++bi) {
        double acc = 0.0;
        const double* p = x->value.data() + bi * per;
        for (int64_t i = 0; i < per; ++i) acc += p[i];
        out.at(bi) = acc / static_cast<double>(per);
    }
    Graph::Node& n = g.make(std::move(out), x->needs_grad);
    if (n.needs_grad) {
        n.backward = [x, b, per](Graph::Node& self) {
            Graph::ensure_grad(*x);
            for (int64_t bi = 0; bi < b; ++bi) {
                const double gv = self.grad.at(bi) / static_cast<double>(per);
                double* p = x->grad.data() + bi * per;
                for (int64_t i = 0; i < per; ++i) p[i] += gv;
            }
        };
    }
    return &n;
}

Var batch_sum(Graph& g, Var x) {
    const int64_t count = x->value.numel();
    Tensor out{{1}};
    for (int64_t i = 0; i < count; ++i) out.at(0) += x->value.at(i);
    Graph::Node& n = g.make(std::move(out), x->needs_grad);
    if (n.needs_grad) {
        n.backward = [x, count](Graph::Node& self) {
            Graph::ensure_grad(*x);
            for (int64_t i = 0; i < count; ++i) x->grad.at(i) += self.grad.at(0);
        };
    }
    return &n;
}

Var bce_elem(Graph& g, Var p, const Tensor& target, double eps) {
    if (!p->value.same_shape(target)) {
        throw InvariantViolation("bce_elem: prediction/target shape mismatch " + p->value.shape_str() + " vs " +
                                 target.shape_str());
    }
    const int64_t count = p->value.numel();
    Tensor out{p->value.shape()};
    Tensor clamped{p->value.shape()};
    for (int64_t i = 0; i < count; ++i) {
        double pc = p->value.at(i);
        pc = pc < eps ? eps : (pc > 1.0 - eps ? 1.0 - eps : pc);
        clamped.at(i) = pc;
        const double t = target.at(i);
        out.at(i) = -(t * std::log(pc) + (1.0 - t) * std::log(1.0 - pc));
    }
    Graph::Node& n = g.make(std::move(out), p->needs_grad);
    if (n.needs_grad) {
        Tensor pv = p->value, tv = target, cv = clamped;
        n.backward = [p, pv, tv, cv, eps, count](Graph::Node& self) {
            Graph::ensure_grad(*p);
            for (int64_t i = 0; i < count; ++i) {
                const double raw = pv.at(i);
                if (raw < eps || raw > 1.0 - eps) continue;  // clamped: zero slope
                const double pc = cv.at(i), t = tv.at(i);
                p->grad.at(i) += self.grad.at(i) * (-t / pc + (1.0 - t) / (1.0 - pc));
            }
        };
    }
    return &n;
}

Var upsample_bilinear(Graph& g, Var x, int64_t factor) {
    if (x->value.rank() != 4) throw InvariantViolation("upsample_bilinear: expects (B,C,H,W)");
    const int64_t b = x->value.dim(0), c = x->value.dim(1), h = x->value.dim(2), w = x->value.dim(3);
    const int64_t oh = h * factor, ow = w * factor;
    const BilinearAxis ay = bilinear_axis(h, oh);
    const BilinearAxis axx = bilinear_axis(w, ow);
    Tensor out{{b, c, oh, ow}};
    for (int64_t bc = 0; bc < b * c; ++bc) {
        const double* src = x->value.data() + bc * h * w;
        double* dst = out.data() + bc * oh * ow;
        for (int64_t y = 0; y < oh; ++y) {
            const int64_t y0 = ay.i0[y], y1 = ay.i1[y];
            const double fy = ay.frac[y];
            for (int64_t xx = 0; xx < ow; ++xx) {
                const int64_t x0 = axx.i0[xx], x1 = axx.i1[xx];
                const double fx = axx.frac[xx];
                dst[y * ow + xx] = (1 - fy) * ((1 - fx) * src[y0 * w + x0] + fx * src[y0 * w + x1]) +
                                   fy * ((1 - fx) * src[y1 * w + x0] + fx * src[y1 * w + x1]);
            }
        }
    }
    Graph::Node& n = g.make(std::move(out), x->needs_grad);
    if (n.needs_grad) {
        n.backward = [x, ay, axx, b, c, h, w, oh, ow](Graph::Node& self) {
            Graph::ensure_grad(*x);
            for (int64_t bc = 0; bc < b * c; ++bc) {
                double* src_g = x->grad.data() + bc * h * w;
                const double* dst_g = self.grad.data() + bc * oh * ow;
                for (int64_t y = 0; y < oh; ++y) {
                    const int64_t y0 = ay.i0[y], y1 = ay.i1[y];
                    const double fy = ay.frac[y];
                    for (int64_t xx = 0; xx < ow; ++xx) {
                        const int64_t x0 = axx.i0[xx], x1 = axx.i1[xx];
                        const double fx = axx.frac[xx];
                        const double gv = dst_g[y * ow + xx];
                        src_g[y0 * w + x0] += (1 - fy) * (1 - fx) * gv;
                        src_g[y0 * w + x1] += (1 - fy) * fx * gv;
                        src_g[y1 * w + x0] += fy * (1 - fx) * gv;
                        src_g[y1 * w + x1] += fy * fx * gv;
                    }
                }
            }
        };
    }
    return &n;
}

Var avgpool2x(Graph& g, Var x) {
    if (x->value.rank() != 4) throw InvariantViolation("avgpool2x: expects (B,C,H,W)");
    const int64_t b = x->value.dim(0), c = x->value.dim(1), h = x->value.dim(2), w = x->value.dim(3);
    if (h % 2 != 0 || w % 2 != 0) throw InvariantViolation("avgpool2x: odd spatial size");
    const int64_t oh = h / 2, ow = w / 2;
    Tensor out{{b, c, oh, ow}};
    for (int64_t bc = 0; bc < b * c; ++bc) {
        const double* src = x->value.data() + bc * h * w;
        double* dst = out.data() + bc * oh * ow;
        for (int64_t y = 0; y < oh; ++y)
            for (int64_t xx = 0; xx < ow; ++xx)
                dst[y * ow + xx] = 0.25 * (src[(2 * y) * w + 2 * xx] + src[(2 * y) * w + 2 * xx + 1] +
                                           src[(2 * y + 1) * w + 2 * xx] + src[(2 * y + 1) * w + 2 * xx + 1]);
    }
    Graph::Node& n = g.make(std::move(out), x->needs_grad);
    if (n.needs_grad) {
        n.backward = [x, b, c, h, w, oh, ow](Graph::Node& self) {
            Graph::ensure_grad(*x);
            for (int64_t bc = 0; bc < b * c; ++bc) {
                double* src_g = x->grad.data() + bc * h * w;
                const double* dst_g = self.grad.data() + bc * oh * ow;
                for (int64_t y = 0; y < oh; ++y)
                    for (int64_t xx = 0; xx < ow; ++xx) {
                        const double gv = 0.25 * dst_g[y * ow + xx];
                        src_g[(2 * y) * w + 2 * xx] += gv;
                        src_g[(2 * y) * w + 2 * xx + 1] += gv;
                        src_g[(2 * y + 1) * w + 2 * xx] += gv;
                        src_g[(2 * y + 1) * w + 2 * xx + 1] += gv;
                    }
            }
        };
    }
    return &n;
}

Var patchify(Graph& g, Var x, int64_t k) {
    if (x->value.rank() != 4) throw InvariantViolation("patchify: expects (B,C,H,W)");
    const int64_t b = x->value.dim(0), c = x->value.dim(1), h = x->value.dim(2), w = x->value.dim(3);
    if (h % k != 0 || w % k != 0) throw ConfigError("patchify: spatial size not divisible by patch size");
    const int64_t ph = h / k, pw = w / k, t = ph * pw, pc = c * k * k;
    Tensor out{{b, t, pc}};
    for (int64_t bi = 0; bi < b; ++bi)
        for (int64_t ci = 0; ci < c; ++ci)
            for (int64_t y = 0; y < h; ++y)
                for (int64_t xx = 0; xx < w; ++xx) {
                    const int64_t ti = (y / k) * pw + (xx / k);
                    const int64_t pi = ci * k * k + (y % k) * k + (xx % k);
                    out.at((bi * t + ti) * pc + pi) = x->value.at(((bi * c + ci) * h + y) * w + xx);
                }
    Graph::Node& n = g.make(std::move(out), x->needs_grad);
    if (n.needs_grad) {
        n.backward = [x, b, c, h, w, k, pw, t, pc](Graph::Node& self) {
            Graph::ensure_grad(*x);
            for (int64_t bi = 0; bi < b; ++bi)
                for (int64_t ci = 0; ci < c; ++ci)
                    for (int64_t y = 0; y < h; ++y)
                        for (int64_t xx = 0; xx < w; ++xx) {
                            const int64_t ti = (y / k) * pw + (xx / k);
                            const int64_t pi = ci * k * k + (y % k) * k + (xx % k);
                            x->grad.at(((bi * c + ci) * h + y) * w + xx) += self.grad.at((bi * t + ti) * pc + pi);
                        }
        };
    }
    return &n;
}

Var map_to_tokens(Graph& g, Var x) {
    if (x->value.rank() != 4) throw InvariantViolation("map_to_tokens: expects (B,C,H,W)");
    const int64_t b = x->value.dim(0), c = x->value.dim(1), h = x->value.dim(2), w = x->value.dim(3);
    const int64_t t = h * w;
    Tensor out{{b, t, c}};
    for (int64_t bi = 0; bi < b; ++bi)
        for (int64_t ci = 0; ci < c; ++ci)
            for (int64_t i = 0; i < t; ++i) out.at((bi * t + i) * c + ci) = x->value.at((bi * c + ci) * t + i);
    Graph::Node& n = g.make(std::move(out), x->needs_grad);
    if (n.needs_grad) {
        n.backward = [x, b, c, t](Graph::Node& self) {
            Graph::ensure_grad(*x);
            for (int64_t bi = 0; bi < b; ++bi)
                for (int64_t ci = 0; ci < c; ++ci)
                    for (int64_t i = 0; i < t; ++i)
                        x->grad.at((bi * c + ci) * t + i) += self.grad.at((bi * t + i) * c + ci);
        };
    }
    return &n;
}

Var tokens_to_map(Graph& g, Var x, int64_t h, int64_t w) {
    if (x->value.rank() != 3) throw InvariantViolation("tokens_to_map: expects (B,T,C)");
    const int64_t b = x->value.dim(0), t = x->value.dim(1), c = x->value.dim(2);
    if (t != h * w) throw InvariantViolation("tokens_to_map: token count does not match h*w");
    Tensor out{{b, c, h, w}};
    for (int64_t bi = 0; bi < b; ++bi)
        for (int64_t ci = 0; ci < c; ++ci)
            for (int64_t i = 0; i < t; ++i) out.at((bi * c + ci) * t + i) = x->value.at((bi * t + i) * c + ci);
    Graph::Node& n = g.make(std::move(out), x->needs_grad);
    if (n.needs_grad) {
        n.backward = [x, b, c, t](Graph::Node& self) {
            Graph::ensure_grad(*x);
            for (int64_t bi = 0; bi < b; ++bi)
                for (int64_t ci = 0; ci < c; ++ci)
                    for (int64_t i = 0; i < t; ++i)
                        x->grad.at((bi * t + i) * c + ci) += self.grad.at((bi * c + ci) * t + i);
        };
    }
    return &n;
}

Var detach(Graph& g, Var x) { return g.constant(x->value); }

}  // namespace ag

}  // namespace uwassess
