#include <benchmark/benchmark.h>

#include "sepl/data.hpp"
#include "sepl/trainer.hpp"

namespace {

sepl::RunConfig toy_run_config() {
    sepl::RunConfig c;
    c.model = sepl::ModelConfig::toy();
    c.train.augment = false;
    c.train.batch_size = 16;
    return c;
}

sepl::TrainBatch toy_batch(int n) {
    sepl::ToyDatasetOptions o;
    o.n_videos = n;
    o.frames_per_video = 1;
    const auto data = sepl::generate_toy_dataset(o);
    sepl::TrainBatch b;
    b.images = data.images;
    b.labels = data.labels();
    return b;
}

void BM_Stage1Step(benchmark::State& state) {
    sepl::SeplModel model(toy_run_config());
    sepl::Trainer trainer(model);
    model.parameters().set_trainable(sepl::SeplModel::is_stage1_trainable);
    const auto batch = toy_batch(static_cast<int>(state.range(0)));
    for (auto _ : state) {
        model.parameters().zero_grad();
        benchmark::DoNotOptimize(trainer.stage1_loss(batch));
    }
}
BENCHMARK(BM_Stage1Step)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_Stage2Step(benchmark::State& state) {
    sepl::SeplModel model(toy_run_config());
    sepl::Trainer trainer(model);
    model.parameters().set_trainable([](const std::string& n) { return !sepl::SeplModel::is_base(n); });
    const auto batch = toy_batch(static_cast<int>(state.range(0)));
    for (auto _ : state) {
        model.parameters().zero_grad();
        benchmark::DoNotOptimize(trainer.stage2_loss(batch, 1000));
    }
}
BENCHMARK(BM_Stage2Step)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_Predict(benchmark::State& state) {
    sepl::SeplModel model(toy_run_config());
    const auto batch = toy_batch(64);
    std::vector<const sepl::Image*> images;
    for (const auto& img : batch.images) images.push_back(&img);
    for (auto _ : state) benchmark::DoNotOptimize(model.predict(images));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(images.size()));
}
BENCHMARK(BM_Predict)->Unit(benchmark::kMillisecond);

}  // namespace
