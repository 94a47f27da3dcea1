#include "uwassess/backbone.hpp"

#include "uwassess/common.hpp"

#include <cmath>

namespace uwassess {

void BackboneConfig::validate() const {
    if (stage_depths.size() != 4 || stage_channels.size() != 4) {
        throw ConfigError("backbone: need exactly 4 stage depths and channels");
    }
    for (int64_t d : stage_depths)
        if (d < 1) throw ConfigError("backbone: stage depths must be >= 1");
    for (size_t k = 0; k < 4; ++k) {
        if (stage_channels[k] < 1) throw ConfigError("backbone: stage channels must be positive");
        if (k > 0 && stage_channels[k] <= stage_channels[k - 1]) {
            throw ConfigError("backbone: stage channels must be strictly increasing");
        }
        if (stage_channels[k] % attention_heads != 0) {
            throw ConfigError("backbone: stage channels must be divisible by attention heads");
        }
    }
    if (neck_channels < 1) throw ConfigError("backbone: neck channels must be positive");
    if (patch_stride < 1) throw ConfigError("backbone: patch stride must be positive");
    if (attention_heads < 1) throw ConfigError("backbone: attention heads must be positive");
    if (mlp_ratio < 1) throw ConfigError("backbone: mlp ratio must be positive");
    if (input_h < 1 || input_w < 1) throw ConfigError("backbone: input size must be positive");
    const int64_t total_stride = patch_stride * 8;
    if (input_h % total_stride != 0 || input_w % total_stride != 0) {
        throw ConfigError("backbone: input size must be divisible by patch_stride * 8");
    }
    if (norm_std <= 0.0) throw ConfigError("backbone: norm std must be positive");
}

namespace {

std::string stage_block(const char* root, int64_t stage, int64_t block) {
    return std::string(root) + "/stage" + std::to_string(stage + 1) + "/block" + std::to_string(block) + "/";
}

}  // namespace

Model::Model(BackboneConfig bb, AdaptationConfig ad, uint64_t seed) : bb_(std::move(bb)), ad_(ad) {
    bb_.validate();
    ad_.validate();

    const int64_t ps = bb_.patch_stride;
    const int64_t patch_dim = 3 * ps * ps;
    const int64_t c1 = bb_.stage_channels[0];
    const int64_t t1 = bb_.stage_h(0) * bb_.stage_w(0);

    // Backbone weights draw from their own stream so the base model is
    // identical whether or not adaptation parameters exist.
    Rng rng(derive_seed(seed, "init-backbone"));
    auto w_init = [&](std::vector<int64_t> shape) { return Tensor::randn(std::move(shape), rng, 0.02); };

    params_.add("backbone/stem/w", w_init({patch_dim, c1}));
    params_.add("backbone/stem/b", Tensor::zeros({c1}));
    params_.add("backbone/pos_embed", w_init({t1, c1}));

    for (int64_t s = 0; s < 4; ++s) {
        const int64_t c = bb_.stage_channels[s];
        const int64_t hidden = c * bb_.mlp_ratio;
        for (int64_t blk = 0; blk < bb_.stage_depths[s]; ++blk) {
            const std::string base = stage_block("backbone", s, blk);
            params_.add(base + "ln1/gamma", Tensor::full({c}, 1.0));
            params_.add(base + "ln1/beta", Tensor::zeros({c}));
            for (const char* proj : {"q", "k", "v", "o"}) {
                params_.add(base + "attn/w" + std::string(proj), w_init({c, c}));
                params_.add(base + "attn/b" + std::string(proj), Tensor::zeros({c}));
            }
            params_.add(base + "ln2/gamma", Tensor::full({c}, 1.0));
            params_.add(base + "ln2/beta", Tensor::zeros({c}));
            params_.add(base + "mlp/w1", w_init({c, hidden}));
            params_.add(base + "mlp/b1", Tensor::zeros({hidden}));
            params_.add(base + "mlp/w2", w_init({hidden, c}));
            params_.add(base + "mlp/b2", Tensor::zeros({c}));
        }
        if (s < 3) {
            const std::string m = "backbone/merge" + std::to_string(s + 1);
            params_.add(m + "/w", w_init({4 * c, bb_.stage_channels[s + 1]}));
            params_.add(m + "/b", Tensor::zeros({bb_.stage_channels[s + 1]}));
        }
    }
    for (int64_t s = 0; s < 4; ++s) {
        const std::string n = "backbone/neck" + std::to_string(s + 1);
        params_.add(n + "/w", w_init({bb_.stage_channels[s], bb_.neck_channels}));
        params_.add(n + "/b", Tensor::zeros({bb_.neck_channels}));
    }
    for (const char* dec : {"conv2", "conv1"}) {
        params_.add("backbone/dec/" + std::string(dec) + "/w", w_init({bb_.neck_channels, bb_.neck_channels}));
        params_.add("backbone/dec/" + std::string(dec) + "/b", Tensor::zeros({bb_.neck_channels}));
    }
    params_.add("backbone/dec/head/w", w_init({bb_.neck_channels, 1}));
    params_.add("backbone/dec/head/b", Tensor::zeros({1}));

    if (!ad_.enabled) return;

    Rng arng(derive_seed(seed, "init-adaptation"));
    auto a_init = [&](std::vector<int64_t> shape) { return Tensor::randn(std::move(shape), arng, 0.02); };

    params_.add("adaptation/signal_embed/w", a_init({patch_dim, c1}));
    params_.add("adaptation/signal_embed/b", Tensor::zeros({c1}));
    params_.add("adaptation/shared_adapter/w", a_init({ad_.adapter_hidden, ad_.adapter_hidden}));
    params_.add("adaptation/shared_adapter/b", Tensor::zeros({ad_.adapter_hidden}));

    for (int64_t s = 0; s < 4; ++s) {
        const int64_t c = bb_.stage_channels[s];
        if (ad_.lora_rank > c) throw ConfigError("adaptation: lora rank exceeds stage channels");
        for (int64_t blk = 0; blk < bb_.stage_depths[s]; ++blk) {
            const std::string base = stage_block("adaptation", s, blk);
            for (const char* proj : {"q", "v"}) {
                params_.add(base + "lora/" + std::string(proj) + "/a", a_init({c, ad_.lora_rank}));
                // zero-init B: the low-rank delta starts exactly at zero
                params_.add(base + "lora/" + std::string(proj) + "/b", Tensor::zeros({ad_.lora_rank, c}));
            }
            params_.add(base + "lora_gate/w", Tensor::zeros({c, 1}));
            params_.add(base + "lora_gate/b", Tensor::zeros({1}));
            params_.add(base + "adapter/down/w", a_init({c1, ad_.adapter_hidden}));
            params_.add(base + "adapter/down/b", Tensor::zeros({ad_.adapter_hidden}));
            // zero-init the up projection: injection is exactly zero at start
            params_.add(base + "adapter/up/w", Tensor::zeros({ad_.adapter_hidden, c}));
            params_.add(base + "adapter/up/b", Tensor::zeros({c}));
            params_.add(base + "adapter_gate/w", Tensor::zeros({c, 1}));
            params_.add(base + "adapter_gate/b", Tensor::zeros({1}));
        }
    }
}

Tensor Model::normalize(const Tensor& image) const {
    Tensor out = image.clone();
    const double inv = 1.0 / bb_.norm_std;
    for (int64_t i = 0; i < out.numel(); ++i) out.at(i) = (out.at(i) - bb_.norm_mean) * inv;
    return out;
}

Var Model::encoder_block(Graph& g, Var x, int64_t stage, int64_t block, bool adapt, Var signal_tok) {
    const std::string base = stage_block("backbone", stage, block);
    const std::string abase = stage_block("adaptation", stage, block);
    const int64_t c = bb_.stage_channels[stage];

    if (adapt) {
        Var t = ag::linear(g, signal_tok, p(g, abase + "adapter/down/w"), p(g, abase + "adapter/down/b"));
        t = ag::gelu(g, t);
        t = ag::linear(g, t, p(g, "adaptation/shared_adapter/w"), p(g, "adaptation/shared_adapter/b"));
        t = ag::gelu(g, t);
        t = ag::linear(g, t, p(g, abase + "adapter/up/w"), p(g, abase + "adapter/up/b"));
        if (ad_.gates_enabled) {
            Var ga = adaptation_gate(g, x, p(g, abase + "adapter_gate/w"), p(g, abase + "adapter_gate/b"));
            t = ag::mul_sample_scalar(g, t, ga);
        }
        x = ag::add(g, x, t);
    }

    Var h = ag::layernorm(g, x, p(g, base + "ln1/gamma"), p(g, base + "ln1/beta"));
    Var q = ag::linear(g, h, p(g, base + "attn/wq"), p(g, base + "attn/bq"));
    Var k = ag::linear(g, h, p(g, base + "attn/wk"), p(g, base + "attn/bk"));
    Var v = ag::linear(g, h, p(g, base + "attn/wv"), p(g, base + "attn/bv"));

    if (adapt) {
        Var gl = nullptr;
        if (ad_.gates_enabled) {
            gl = adaptation_gate(g, x, p(g, abase + "lora_gate/w"), p(g, abase + "lora_gate/b"));
        }
        const double lscale = ad_.effective_lora_scale();
        const std::pair<const char*, Var*> sites[] = {{"q", &q}, {"v", &v}};
        for (const auto& [proj, target] : sites) {
            Var delta = ag::linear(g, h, p(g, abase + "lora/" + std::string(proj) + "/a"));
            delta = ag::linear(g, delta, p(g, abase + "lora/" + std::string(proj) + "/b"));
            delta = ag::scale(g, delta, lscale);
            if (gl) delta = ag::mul_sample_scalar(g, delta, gl);
            *target = ag::add(g, *target, delta);
        }
    }

    const int64_t heads = bb_.attention_heads;
    Var qh = ag::split_heads(g, q, heads);
    Var kh = ag::split_heads(g, k, heads);
    Var vh = ag::split_heads(g, v, heads);
    Var logits = ag::bmm(g, qh, kh, false, true);
    logits = ag::scale(g, logits, 1.0 / std::sqrt(static_cast<double>(c / heads)));
    Var attn = ag::softmax_last(g, logits);
    Var ctx = ag::merge_heads(g, ag::bmm(g, attn, vh));
    ctx = ag::linear(g, ctx, p(g, base + "attn/wo"), p(g, base + "attn/bo"));
    x = ag::add(g, x, ctx);

    Var h2 = ag::layernorm(g, x, p(g, base + "ln2/gamma"), p(g, base + "ln2/beta"));
    Var m = ag::linear(g, h2, p(g, base + "mlp/w1"), p(g, base + "mlp/b1"));
    m = ag::gelu(g, m);
    m = ag::linear(g, m, p(g, base + "mlp/w2"), p(g, base + "mlp/b2"));
    return ag::add(g, x, m);
}

std::vector<Var> Model::encode(Graph& g, const Tensor& image, bool use_adaptation) {
    if (image.rank() != 4 || image.dim(1) != 3 || image.dim(2) != bb_.input_h || image.dim(3) != bb_.input_w) {
        throw ConfigError("encode: image shape " + image.shape_str() + " does not match configured input");
    }
    const bool adapt = use_adaptation && ad_.enabled;
    const Tensor norm = normalize(image);

    std::vector<Var> signal_tokens(4, nullptr);
    if (adapt) {
        const Tensor sig = extract_task_signal(norm, ad_.signal_mask_ratio);
        Var tok = ag::patchify(g, g.constant(sig), bb_.patch_stride);
        tok = ag::linear(g, tok, p(g, "adaptation/signal_embed/w"), p(g, "adaptation/signal_embed/b"));
        Var map = ag::tokens_to_map(g, tok, bb_.stage_h(0), bb_.stage_w(0));
        for (int64_t s = 0; s < 4; ++s) {
            signal_tokens[s] = ag::map_to_tokens(g, map);
            if (s < 3) map = ag::avgpool2x(g, map);
        }
    }

    Var tok = ag::patchify(g, g.constant(norm), bb_.patch_stride);
    tok = ag::linear(g, tok, p(g, "backbone/stem/w"), p(g, "backbone/stem/b"));
    tok = ag::add_broadcast_batch(g, tok, p(g, "backbone/pos_embed"));

    std::vector<Var> feats;
    feats.reserve(4);
    for (int64_t s = 0; s < 4; ++s) {
        for (int64_t blk = 0; blk < bb_.stage_depths[s]; ++blk) {
            tok = encoder_block(g, tok, s, blk, adapt, signal_tokens[s]);
        }
        feats.push_back(ag::tokens_to_map(g, tok, bb_.stage_h(s), bb_.stage_w(s)));
        if (s < 3) {
            const std::string m = "backbone/merge" + std::to_string(s + 1);
            Var patches = ag::patchify(g, feats.back(), 2);
            tok = ag::linear(g, patches, p(g, m + "/w"), p(g, m + "/b"));
        }
    }
    return feats;
}

Var Model::conv1x1(Graph& g, Var x, const std::string& prefix) {
    const int64_t h = x->value.dim(2), w = x->value.dim(3);
    Var tok = ag::map_to_tokens(g, x);
    tok = ag::linear(g, tok, p(g, prefix + "/w"), p(g, prefix + "/b"));
    return ag::tokens_to_map(g, tok, h, w);
}

std::vector<Var> Model::neck(Graph& g, const std::vector<Var>& feats) {
    if (feats.size() != 4) throw InvariantViolation("neck: expected four feature scales");
    std::vector<Var> out;
    out.reserve(4);
    for (int64_t s = 0; s < 4; ++s) out.push_back(conv1x1(g, feats[s], "backbone/neck" + std::to_string(s + 1)));
    return out;
}

Var Model::fuse(Graph& g, Var f3_hat, Var f4_hat, double multiplier) {
    if (f3_hat->value.dim(1) != f4_hat->value.dim(1)) throw InvariantViolation("fuse: channel mismatch");
    if (f3_hat->value.dim(2) != 2 * f4_hat->value.dim(2) || f3_hat->value.dim(3) != 2 * f4_hat->value.dim(3)) {
        throw InvariantViolation("fuse: f4 must be half the spatial size of f3");
    }
    Var up = ag::upsample_bilinear(g, f4_hat, 2);
    if (multiplier != 1.0) up = ag::scale(g, up, multiplier);
    return ag::add(g, f3_hat, up);
}

Var Model::decode(Graph& g, Var f1_hat, Var f2_hat, Var f3_fuse) {
    Var d = ag::add(g, f2_hat, ag::upsample_bilinear(g, f3_fuse, 2));
    d = ag::relu(g, conv1x1(g, d, "backbone/dec/conv2"));
    d = ag::add(g, f1_hat, ag::upsample_bilinear(g, d, 2));
    d = ag::relu(g, conv1x1(g, d, "backbone/dec/conv1"));
    Var logits = conv1x1(g, d, "backbone/dec/head");
    logits = ag::upsample_bilinear(g, logits, bb_.patch_stride);
    Var prob = ag::sigmoid(g, logits);
    const int64_t b = prob->value.dim(0);
    return ag::reshape(g, prob, {b, bb_.input_h, bb_.input_w});
}

Var Model::forward(Graph& g, const Tensor& image, const FwdOptions& opt) {
    std::vector<Var> feats = encode(g, image, opt.use_adaptation);
    std::vector<Var> hats = neck(g, feats);
    Var fused = fuse(g, hats[2], hats[3], opt.sd_multiplier);
    std::vector<Var> dec_in{hats[0], hats[1], fused};
    if (opt.cd_masks) {
        if (opt.cd_masks->size() != 3) throw InvariantViolation("forward: expected three CD masks");
        for (size_t i = 0; i < 3; ++i) {
            const Tensor& m = (*opt.cd_masks)[i];
            if (m.numel() != bb_.neck_channels) throw InvariantViolation("forward: CD mask channel mismatch");
            Tensor eff{{bb_.neck_channels}};
            for (int64_t cidx = 0; cidx < bb_.neck_channels; ++cidx) {
                const double mv = opt.cd_complement ? 1.0 - m.at(cidx) : m.at(cidx);
                eff.at(cidx) = 2.0 * mv;
            }
            dec_in[i] = ag::mul_channel_mask(g, dec_in[i], eff);
        }
    }
    return decode(g, dec_in[0], dec_in[1], dec_in[2]);
}

void copy_param_values(const ParamStore& src, ParamStore& dst) {
    if (src.size() != dst.size()) throw InvariantViolation("copy_param_values: parameter count mismatch");
    auto it = dst.all().begin();
    for (const auto& [name, sp] : src.all()) {
        if (it->first != name || !it->second.value.same_shape(sp.value)) {
            throw InvariantViolation("copy_param_values: mismatch at " + name);
        }
        std::copy(sp.value.data(), sp.value.data() + sp.value.numel(), it->second.value.data());
        ++it;
    }
}

}  // namespace uwassess
