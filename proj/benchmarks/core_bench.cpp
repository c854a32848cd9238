#include <benchmark/benchmark.h>

#include <random>

#include "sphnet/autodiff.hpp"
#include "sphnet/model.hpp"
#include "sphnet/train.hpp"

namespace {

sphnet::Tensor random_tensor(std::vector<int> shape, std::mt19937_64& rng) {
    sphnet::Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) {
        t[i] = static_cast<double>(rng() >> 11) * 0x1.0p-53 - 0.5;
    }
    return t;
}

void BM_matmul(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    std::mt19937_64 rng(1);
    sphnet::Tensor a = random_tensor({n, n}, rng);
    sphnet::Tensor b = random_tensor({n, n}, rng);
    for (auto _ : state) {
        sphnet::Tensor c = sphnet::matmul_values(a, b);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(state.iterations() * 2LL * n * n * n);
}
BENCHMARK(BM_matmul)->Arg(32)->Arg(128)->Arg(256);

void BM_softmax_rows(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    std::mt19937_64 rng(2);
    sphnet::Tensor a = random_tensor({n, n}, rng);
    for (auto _ : state) {
        sphnet::Tensor s = sphnet::softmax_rows_values(a);
        benchmark::DoNotOptimize(s.data());
    }
}
BENCHMARK(BM_softmax_rows)->Arg(16)->Arg(128);

sphnet::ModelConfig profile_config(bool paper) {
    sphnet::ModelConfig cfg;
    cfg.d_model = paper ? 128 : 32;
    cfg.vit_layers = paper ? 4 : 2;
    cfg.trf_layers = paper ? 4 : 2;
    cfg.ffn_dim = 4 * cfg.d_model;
    return cfg;
}

void BM_forward(benchmark::State& state) {
    const sphnet::ModelConfig cfg = profile_config(state.range(0) == 1);
    const sphnet::SphNetParams params = sphnet::init_params(cfg);
    std::mt19937_64 rng(3);
    const sphnet::Tensor window = random_tensor({cfg.T, cfg.d}, rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(sphnet::forward(cfg, params, window));
    }
}
BENCHMARK(BM_forward)->ArgNames({"paper"})->Arg(0)->Arg(1);

void BM_train_batch(benchmark::State& state) {
    const sphnet::ModelConfig cfg = profile_config(state.range(0) == 1);
    sphnet::SphNetParams params = sphnet::init_params(cfg);
    sphnet::AdamState adam = sphnet::init_adam(params.store);
    sphnet::TrainConfig tc;
    std::mt19937_64 rng(4);
    std::vector<std::pair<sphnet::Tensor, double>> batch;
    for (int i = 0; i < 32; ++i) {
        batch.emplace_back(random_tensor({cfg.T, cfg.d}, rng), 0.5);
    }
    for (auto _ : state) {
        sphnet::Tape tape;
        sphnet::ModelVars vars = sphnet::bind_params(tape, params, true);
        sphnet::Var acc;
        for (std::size_t i = 0; i < batch.size(); ++i) {
            sphnet::Var pred = sphnet::forward_on_tape(tape, cfg, vars, batch[i].first);
            sphnet::Var diff = sphnet::sub(pred, tape.constant(sphnet::Tensor({1, 1}, {batch[i].second})));
            sphnet::Var sq = sphnet::mul(diff, diff);
            acc = i == 0 ? sq : sphnet::add(acc, sq);
        }
        sphnet::Var loss = sphnet::scale(acc, 1.0 / static_cast<double>(batch.size()));
        tape.backward(loss);
        sphnet::ParamStore grads;
        for (std::size_t i = 0; i < params.store.size(); ++i) {
            const sphnet::Tensor& g = tape.grad(sphnet::Var{&tape, static_cast<int>(i)});
            grads.add(params.store.items()[i].first,
                      g.empty() ? sphnet::Tensor::zeros(params.store.items()[i].second.shape()) : g);
        }
        sphnet::adam_step(params.store, grads, adam, tc);
        benchmark::DoNotOptimize(params.store.items()[0].second.data());
    }
}
BENCHMARK(BM_train_batch)->ArgNames({"paper"})->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
