#include <benchmark/benchmark.h>

#include <random>

#include "sepl/eval.hpp"

namespace {

struct Scores {
    std::vector<double> s;
    sepl::Labels y;
};

Scores make_scores(std::size_t n) {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> noise(0.0, 1.0);
    Scores out;
    for (std::size_t i = 0; i < n; ++i) {
        const int y = static_cast<int>(i % 2);
        out.y.push_back(y);
        out.s.push_back(noise(rng) + y);
    }
    return out;
}

void BM_Auc(benchmark::State& state) {
    const auto d = make_scores(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(sepl::auc(d.s, d.y));
}
BENCHMARK(BM_Auc)->Arg(1000)->Arg(100000);

void BM_AveragePrecision(benchmark::State& state) {
    const auto d = make_scores(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(sepl::average_precision(d.s, d.y));
}
BENCHMARK(BM_AveragePrecision)->Arg(1000)->Arg(100000);

void BM_Eer(benchmark::State& state) {
    const auto d = make_scores(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(sepl::eer(d.s, d.y));
}
BENCHMARK(BM_Eer)->Arg(1000)->Arg(100000);

void BM_VideoMetrics(benchmark::State& state) {
    const auto d = make_scores(static_cast<std::size_t>(state.range(0)));
    sepl::ScoreTable table;
    for (std::size_t i = 0; i < d.s.size(); ++i)
        table.push_back({"v" + std::to_string(i / 4), static_cast<int>(i % 4), d.s[i], static_cast<int>((i / 4) % 2)});
    for (auto _ : state) benchmark::DoNotOptimize(sepl::video_metrics(table));
}
BENCHMARK(BM_VideoMetrics)->Arg(4000);

}  // namespace
