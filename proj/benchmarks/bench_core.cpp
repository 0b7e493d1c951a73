#include <benchmark/benchmark.h>

#include "trg/model.hpp"
#include "trg/rng.hpp"

namespace {

using namespace trg;

std::vector<float> random_floats(size_t n, uint64_t seed) {
    rng::Stream s(seed);
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(s.uniform(-1.0, 1.0));
    return v;
}

void bm_conv3x3_forward(benchmark::State& state) {
    const int C = static_cast<int>(state.range(0));
    Tape<float> t;
    auto x = t.constant(Shape{8, C, 8, 8}, random_floats(8 * C * 64, 1));
    auto k = t.constant(Shape{C, C, 3, 3}, random_floats(C * C * 9, 2));
    for (auto _ : state) {
        Tape<float> s;
        auto xs = s.constant(Shape{8, C, 8, 8}, x.values());
        auto ks = s.constant(Shape{C, C, 3, 3}, k.values());
        benchmark::DoNotOptimize(s.conv2d(xs, ks, Conv2dSpec::k3p1()).values().data());
    }
}
BENCHMARK(bm_conv3x3_forward)->Arg(8)->Arg(16);

void bm_build_adjacency(benchmark::State& state) {
    const int T = static_cast<int>(state.range(0));
    TrgLayerOptions opt;
    opt.heads = 1;
    opt.channels = 8;
    opt.height = opt.width = 4;
    TrgLayerParams<float> params(opt, "trg0", 3, false);
    auto xv = random_floats(static_cast<size_t>(T) * 8 * 16, 4);
    for (auto _ : state) {
        Tape<float> s;
        ParamBinder<float> bind(s, false);
        auto x = s.constant(Shape{T, 8, 4, 4}, xv);
        benchmark::DoNotOptimize(build_adjacency(bind, x, params, 0, BnMode::Eval).values().data());
    }
}
BENCHMARK(bm_build_adjacency)->Arg(8)->Arg(16);

void bm_trg_layer_forward(benchmark::State& state) {
    const int heads = static_cast<int>(state.range(0));
    TrgLayerOptions opt;
    opt.heads = heads;
    opt.channels = 8;
    opt.height = opt.width = 4;
    TrgLayerParams<float> params(opt, "trg0", 5, false);
    auto xv = random_floats(8 * 8 * 16, 6);
    for (auto _ : state) {
        Tape<float> s;
        ParamBinder<float> bind(s, false);
        auto x = s.constant(Shape{8, 8, 4, 4}, xv);
        benchmark::DoNotOptimize(trg_layer_forward(bind, x, params, BnMode::Eval).values().data());
    }
}
BENCHMARK(bm_trg_layer_forward)->Arg(1)->Arg(3)->Arg(8);

void bm_model_train_step(benchmark::State& state) {
    ModelConfig cfg;
    Model<float> model(cfg, 7);
    auto frames = random_floats(static_cast<size_t>(cfg.frames) * cfg.in_channels *
                                    cfg.in_height * cfg.in_width,
                                8);
    for (auto _ : state) {
        for (auto* p : model.parameters()) p->zero_grad();
        Tape<float> tape;
        ParamBinder<float> bind(tape, true);
        auto logits = model.forward(bind, frames, BnMode::Training);
        auto loss = model.loss(tape, logits, Label(0));
        tape.backward(loss);
        benchmark::DoNotOptimize(model.parameters()[0]->grad.data());
    }
}
BENCHMARK(bm_model_train_step);

}  // namespace

BENCHMARK_MAIN();
