#include "ctxkoop/latent_kalman.hpp"
#include "ctxkoop/optim.hpp"
#include "ctxkoop/piae.hpp"
#include "ctxkoop/scenario.hpp"
#include "ctxkoop/vkae.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace ctxkoop;

namespace {

Window standardized_window(Eigen::Index T) {
    const Trace tr = generate_trace(scenario_config("5G_5W_28GHz", 1), 400);
    std::vector<double> csi(tr.csi.begin(), tr.csi.begin() + T);
    const Matrix ctx = tr.context_matrix(0, static_cast<std::size_t>(T));
    Standardizer s;
    s.fit(csi, ctx);
    Window w{Matrix(T, 1), s.apply_ctx(ctx)};
    for (Eigen::Index t = 0; t < T; ++t) w.csi(t, 0) = s.apply_csi(csi[static_cast<std::size_t>(t)]);
    return w;
}

void BM_MlpForwardBackward(benchmark::State& state) {
    std::mt19937_64 rng(1);
    const Mlp2 m = Mlp2::glorot(19, 256, 950, rng);
    Matrix x = Matrix::Random(state.range(0), 19);
    const Matrix dy = Matrix::Random(state.range(0), 950);
    for (auto _ : state) {
        const MlpTape tape = mlp_forward(m, x);
        benchmark::DoNotOptimize(mlp_backward(m, tape, dy));
    }
}
BENCHMARK(BM_MlpForwardBackward)->Arg(1)->Arg(200);

void BM_PiaeGradients(benchmark::State& state) {
    const PiaeModel m = PiaeModel::init({}, 1);
    const Window w = standardized_window(200);
    const ParamGroups groups = state.range(0) ? ParamGroups::all() : ParamGroups{true, false, true, false};
    const LossWeights lw{1.0, state.range(0) ? 1.0 : 0.0, 1.0, 1.0};
    for (auto _ : state) benchmark::DoNotOptimize(piae_gradients(m, w, lw, groups));
}
BENCHMARK(BM_PiaeGradients)->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond);

void BM_VkaeGradients(benchmark::State& state) {
    const VkaeModel m = VkaeModel::init({}, 1);
    const Window w = standardized_window(200);
    std::mt19937_64 rng(2);
    for (auto _ : state) benchmark::DoNotOptimize(vkae_gradients(m, w, {}, rng));
}
BENCHMARK(BM_VkaeGradients)->Unit(benchmark::kMillisecond);

void BM_Rollout(benchmark::State& state) {
    PiaeModel m = PiaeModel::init({}, 1);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 0.01);
    for (Eigen::Index i = 0; i < m.B.size(); ++i) m.B.data()[i] = n(rng);
    const Window w = standardized_window(200);
    std::vector<Vector> ctx;
    for (Eigen::Index t = 0; t < 200; ++t) ctx.emplace_back(w.ctx.row(t).transpose());
    const Vector z0 = encode_csi(m, w.csi(199, 0));
    for (auto _ : state) benchmark::DoNotOptimize(rollout_silence(m, z0, ctx));
}
BENCHMARK(BM_Rollout)->Unit(benchmark::kMillisecond);

void BM_EkfStep(benchmark::State& state) {
    const PiaeModel m = PiaeModel::init({}, 1);
    const Eigen::Index n = m.K.rows();
    NoiseConfig noise{1e-4 * Matrix::Identity(n, n), 0.01, {Vector::Zero(m.B.cols())}, {}};
    const LatentSystem sys = latent_system(m);
    const LatentBelief b{encode_csi(m, 0.1), Matrix::Identity(n, n)};
    for (auto _ : state) {
        const LatentBelief p = ekf_predict(b, sys, noise, 0);
        benchmark::DoNotOptimize(ekf_update(p, 0.2, sys, noise.R));
    }
}
BENCHMARK(BM_EkfStep);

void BM_TrainEpisode(benchmark::State& state) {
    const Trace tr = generate_trace(scenario_config("5G_5W_28GHz", 1), 400);
    std::vector<double> csi(tr.csi.begin(), tr.csi.begin() + 200);
    const Matrix ctx = tr.context_matrix(0, 200);
    TrainConfig cfg;
    cfg.epochs_per_window = 10;
    cfg.use_context = state.range(0) != 0;
    for (auto _ : state) {
        Trainer t({}, cfg);
        benchmark::DoNotOptimize(t.train_episode(csi, ctx));
    }
}
BENCHMARK(BM_TrainEpisode)->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
