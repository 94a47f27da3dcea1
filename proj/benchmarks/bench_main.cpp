#include <benchmark/benchmark.h>

#include "uwassess/adaptation.hpp"
#include "uwassess/augment.hpp"
#include "uwassess/backbone.hpp"
#include "uwassess/graph.hpp"
#include "uwassess/metrics.hpp"
#include "uwassess/report.hpp"
#include "uwassess/s2match.hpp"

using namespace uwassess;

namespace {

BackboneConfig bench_backbone(int64_t size) {
    BackboneConfig bb;
    bb.stage_depths = {1, 1, 1, 1};
    bb.stage_channels = {4, 6, 8, 10};
    bb.neck_channels = 4;
    bb.patch_stride = size <= 16 ? 2 : 4;
    bb.attention_heads = 2;
    bb.mlp_ratio = 1;
    bb.input_h = size;
    bb.input_w = size;
    return bb;
}

AdaptationConfig bench_adaptation() {
    AdaptationConfig ad;
    ad.lora_rank = 2;
    ad.adapter_hidden = 4;
    return ad;
}

ImageBuffer bench_image(int64_t size, Rng& rng) {
    ImageBuffer img(3, size, size);
    for (auto& v : img.pixels) v = rng.uniform();
    return img;
}

ImageBuffer bench_mask(int64_t size) {
    ImageBuffer m(1, size, size);
    for (int64_t y = size / 4; y < 3 * size / 4; ++y)
        for (int64_t x = size / 4; x < 3 * size / 4; ++x) m.at(0, y, x) = 1.0;
    return m;
}

}  // namespace

static void bm_linear_forward_backward(benchmark::State& state) {
    Rng r(1);
    const int64_t t = state.range(0);
    Tensor x = Tensor::randn({2, t, 64}, r);
    Tensor w = Tensor::randn({64, 64}, r, 0.05);
    for (auto _ : state) {
        Graph g;
        Var out = ag::mean_all(g, ag::linear(g, g.leaf(x, true), g.leaf(w, true)));
        g.backward(out);
        benchmark::DoNotOptimize(out->value.at(0));
    }
}
BENCHMARK(bm_linear_forward_backward)->Arg(64)->Arg(256);

static void bm_model_forward(benchmark::State& state) {
    const int64_t size = state.range(0);
    Model model(bench_backbone(size), bench_adaptation(), 2);
    Rng r(3);
    Tensor img({1, 3, size, size});
    for (int64_t i = 0; i < img.numel(); ++i) img.at(i) = r.uniform();
    for (auto _ : state) {
        Graph g;
        benchmark::DoNotOptimize(model.forward(g, img)->value.at(0));
    }
}
BENCHMARK(bm_model_forward)->Arg(16)->Arg(32)->Arg(64);

static void bm_model_forward_backward(benchmark::State& state) {
    const int64_t size = state.range(0);
    Model model(bench_backbone(size), bench_adaptation(), 4);
    Rng r(5);
    Tensor img({1, 3, size, size});
    for (int64_t i = 0; i < img.numel(); ++i) img.at(i) = r.uniform();
    for (auto _ : state) {
        Graph g;
        Var loss = ag::mean_all(g, model.forward(g, img));
        model.params().zero_grads();
        g.backward(loss);
        benchmark::DoNotOptimize(loss->value.at(0));
    }
}
BENCHMARK(bm_model_forward_backward)->Arg(16)->Arg(32);

// one full optimization step: augment, three student forwards, the teacher
// forward, backward, AdamW and the EMA update
static void bm_engine_train_step(benchmark::State& state) {
    const int64_t size = state.range(0);
    AugmentConfig aug;
    aug.crop_h = aug.crop_w = size;
    S2MatchConfig cfg;
    Engine engine(bench_backbone(size), bench_adaptation(), aug, cfg, 6, 1000);
    Rng data(7);
    std::vector<LabeledSample> labeled;
    for (int i = 0; i < 2; ++i) labeled.push_back({bench_image(size, data), bench_mask(size)});
    std::vector<ImageBuffer> unlabeled{bench_image(size, data), bench_image(size, data)};
    Rng step(8);
    for (auto _ : state) {
        benchmark::DoNotOptimize(engine.train_step(labeled, unlabeled, step).loss_total);
    }
}
BENCHMARK(bm_engine_train_step)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

static void bm_weak_strong_augment(benchmark::State& state) {
    AugmentConfig cfg;
    cfg.crop_h = cfg.crop_w = 64;
    Rng data(9);
    ImageBuffer img = bench_image(64, data);
    ImageBuffer mask = bench_mask(64);
    Rng r(10);
    for (auto _ : state) {
        WeakAugmentResult weak = weak_augment(img, &mask, cfg, r);
        ImageBuffer strong = strong_augment(weak.image, cfg, r);
        benchmark::DoNotOptimize(strong.pixels.data());
    }
}
BENCHMARK(bm_weak_strong_augment);

static void bm_task_signal_extraction(benchmark::State& state) {
    const int64_t size = state.range(0);
    Rng r(11);
    Tensor batch({2, 3, size, size});
    for (int64_t i = 0; i < batch.numel(); ++i) batch.at(i) = r.uniform(-1.0, 1.0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(extract_task_signal(batch, 0.25).at(0));
    }
}
BENCHMARK(bm_task_signal_extraction)->Arg(32)->Arg(64);

static void bm_metrics_accumulate(benchmark::State& state) {
    const int64_t size = state.range(0);
    Rng r(12);
    Tensor pred({size, size}), gt({size, size});
    for (int64_t i = 0; i < pred.numel(); ++i) pred.at(i) = r.bernoulli(0.3) ? 1.0 : 0.0;
    for (int64_t i = 0; i < gt.numel(); ++i) gt.at(i) = r.bernoulli(0.3) ? 1.0 : 0.0;
    for (auto _ : state) {
        ConfusionCounts counts;
        accumulate(pred, gt, counts);
        benchmark::DoNotOptimize(counts.tp);
    }
}
BENCHMARK(bm_metrics_accumulate)->Arg(64)->Arg(512);

static void bm_pr_curve(benchmark::State& state) {
    Rng r(13);
    std::vector<Tensor> probs, gts;
    for (int i = 0; i < 8; ++i) {
        Tensor p({64, 64}), g({64, 64});
        for (int64_t j = 0; j < p.numel(); ++j) p.at(j) = r.uniform();
        for (int64_t j = 0; j < g.numel(); ++j) g.at(j) = r.bernoulli(0.3) ? 1.0 : 0.0;
        probs.push_back(std::move(p));
        gts.push_back(std::move(g));
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(pr_curve(probs, gts, 19).points.size());
    }
}
BENCHMARK(bm_pr_curve);

static void bm_spatial_prompt(benchmark::State& state) {
    const int64_t size = state.range(0);
    ImageBuffer mask(1, size, size);
    Rng r(14);
    // speckled mask: many connected regions, the worst case for the labeling pass
    for (auto& v : mask.pixels) v = r.bernoulli(0.2) ? 1.0 : 0.0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(build_spatial_prompt(mask).size());
    }
}
BENCHMARK(bm_spatial_prompt)->Arg(64)->Arg(256);

BENCHMARK_MAIN();
