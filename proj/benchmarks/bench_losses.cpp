#include <benchmark/benchmark.h>

#include <random>

#include "sepl/losses.hpp"

namespace {

sepl::Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n;
    sepl::Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    return m;
}

sepl::Labels alternating(Eigen::Index n) {
    sepl::Labels y(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i % 2);
    return y;
}

void BM_LossPre(benchmark::State& state) {
    const auto n = state.range(0);
    const auto a = random_matrix(n, 32, 1), b = random_matrix(n, 32, 2);
    for (auto _ : state) benchmark::DoNotOptimize(sepl::loss_pre(a, b, 0.07));
}
BENCHMARK(BM_LossPre)->Arg(16)->Arg(64)->Arg(256);

void BM_LossCon(benchmark::State& state) {
    const auto n = state.range(0);
    const auto f = random_matrix(n, 32, 3);
    const auto y = alternating(n);
    for (auto _ : state) benchmark::DoNotOptimize(sepl::loss_con(f, y, 0.07));
}
BENCHMARK(BM_LossCon)->Arg(16)->Arg(64)->Arg(256);

void BM_LossAlign(benchmark::State& state) {
    const auto n = state.range(0);
    const auto fa = random_matrix(n, 32, 4), fb = random_matrix(n, 32, 5);
    const auto ta = random_matrix(n, 32, 6), tb = random_matrix(n, 32, 7);
    const auto y = alternating(n);
    for (auto _ : state) benchmark::DoNotOptimize(sepl::loss_align(fa, fb, ta, tb, y, 0.08, 0.12));
}
BENCHMARK(BM_LossAlign)->Arg(16)->Arg(256);

}  // namespace
