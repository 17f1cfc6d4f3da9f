#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <vector>

#include "sepl/checkpoint.hpp"
#include "sepl/data.hpp"
#include "sepl/losses.hpp"
#include "sepl/model.hpp"
#include "sepl/optimizer.hpp"

namespace sepl {

struct TrainBatch {
    std::vector<Image> images;
    Labels labels;
};

// A stream of training batches whose position can be saved and restored so
// interrupted runs resume on the same batch sequence.
class BatchSource {
public:
    virtual ~BatchSource() = default;
    // nullopt once the stream is exhausted.
    virtual std::optional<TrainBatch> next() = 0;
    virtual nlohmann::json state() const = 0;
    virtual void restore(const nlohmann::json& state) = 0;
};

// Endless label-agnostic shuffled epochs over a dataset. The permutation of
// epoch e depends only on (seed, e); augmentation seeds depend on the sample's
// position in the stream.
class ShuffledBatches final : public BatchSource {
public:
    ShuffledBatches(const Dataset& data, int batch_size, std::uint64_t seed,
                    std::optional<AugmentOptions> augment = std::nullopt);

    std::optional<TrainBatch> next() override;
    nlohmann::json state() const override;
    void restore(const nlohmann::json& state) override;

private:
    void shuffle_epoch();

    const Dataset* data_;
    int batch_size_;
    std::uint64_t seed_;
    std::optional<AugmentOptions> augment_;
    std::int64_t epoch_ = 0;
    std::size_t cursor_ = 0;
    std::int64_t drawn_ = 0;
    std::vector<std::size_t> order_;
};

struct StopPoint {
    int stage = 2;
    std::int64_t step = 0;
};

struct TrainHooks {
    std::function<void(const LossReport&)> on_step;
    // Periodic checkpoints (every TrainConfig::checkpoint_every steps).
    std::function<void(const Checkpoint&)> on_checkpoint;
    // Optional validation metric (higher is better) for the best-metric tracker,
    // evaluated at each periodic checkpoint and at the end of stage 2.
    std::function<double(const SeplModel&)> validate;
    // Halt after completing `step` steps of `stage`, returning a resumable checkpoint.
    std::optional<StopPoint> stop_at;
};

// Trainable parameter sets of the two stages.
std::vector<std::string> stage_trainable(const SeplModel& model, int stage);

class Trainer {
public:
    explicit Trainer(SeplModel& model, TrainHooks hooks = {});

    // First stage: only stream B's meta-network and context vectors learn, by
    // the image/text contrastive objective.
    Checkpoint run_stage1(BatchSource& data, const Checkpoint& from);
    // Second stage: every non-base parameter learns the weighted joint objective.
    Checkpoint run_stage2(BatchSource& data, const Checkpoint& from);

    // Single-batch objectives; they build the graph and run backward.
    LossReport stage1_loss(const TrainBatch& batch);
    LossReport stage2_loss(const TrainBatch& batch, std::int64_t step);

    Checkpoint snapshot(int stage, std::int64_t step, bool stage_complete,
                        const BatchSource* data) const;

private:
    Checkpoint run_stage(int stage, BatchSource& data, const Checkpoint& from);

    SeplModel& model_;
    TrainHooks hooks_;
    AdamOptimizer adam_;
    std::optional<double> best_metric_;
    bool stage1_done_ = false;
};

// Parameters of a freshly built model (stage 0).
Checkpoint initial_checkpoint(const SeplModel& model);

// Builds a model from the configuration stored in a checkpoint and loads its
// parameters.
std::unique_ptr<SeplModel> model_from_checkpoint(const Checkpoint& checkpoint);

// Runs both stages (stage 1 only when pretraining is enabled). With `resume`,
// continues from wherever that checkpoint left off.
Checkpoint train(SeplModel& model, BatchSource& data, const TrainHooks& hooks = {},
                 const Checkpoint* resume = nullptr);

}  // namespace sepl
