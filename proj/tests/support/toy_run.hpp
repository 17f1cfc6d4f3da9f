#pragma once

// The reference toy experiment: 600 synthetic videos x 3 frames trained with
// configs/toy.cfg. Trained checkpoints are cached in the build tree so the
// suites that only inspect a trained model do not retrain it.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "sepl/checkpoint.hpp"
#include "sepl/error.hpp"
#include "sepl/hash.hpp"
#include "sepl/trainer.hpp"

namespace toy_run {

struct Recipe {
    sepl::RunConfig config;
    sepl::ToyDatasetOptions data;
    bool shuffle_labels = false;
};

inline Recipe reference(std::int64_t seed = 0) {
    Recipe r;
    r.config = sepl::load_config(std::filesystem::path(SEPL_SOURCE_DIR) / "configs" / "toy.cfg");
    r.config.train.seed = seed;
    r.config.train.checkpoint_every = 0;
    r.data.n_videos = 600;
    r.data.frames_per_video = 3;
    r.data.seed = 0;
    return r;
}

struct Splits {
    sepl::Dataset train, val, test;
};

inline Splits splits(const Recipe& r) {
    const sepl::Dataset all = sepl::generate_toy_dataset(r.data);
    Splits s{sepl::filter_split(all, sepl::Split::kTrain), sepl::filter_split(all, sepl::Split::kVal),
             sepl::filter_split(all, sepl::Split::kTest)};
    if (r.shuffle_labels) s.train = sepl::shuffle_labels_by_video(s.train, 1);
    return s;
}

struct Result {
    sepl::Checkpoint checkpoint;
    double seconds = 0.0;  // training wall time; 0 when loaded from the cache
    bool cached = false;
};

inline std::filesystem::path cache_path(const Recipe& r) {
    sepl::Fnv1a h;
    h.update(sepl::serialize_config(r.config));
    const std::string data = std::to_string(r.data.n_videos) + "/" +
                             std::to_string(r.data.frames_per_video) + "/" +
                             std::to_string(r.data.seed) + "/" +
                             std::to_string(r.data.watermark_amplitude) +
                             (r.shuffle_labels ? "/shuffled" : "");
    h.update(data);
    // A rebuilt library invalidates every entry.
    std::error_code ec;
    const auto stamp = std::filesystem::last_write_time(SEPL_CORE_LIBRARY, ec);
    const auto ticks = ec ? 0 : stamp.time_since_epoch().count();
    h.update(&ticks, sizeof(ticks));
    char name[40];
    std::snprintf(name, sizeof(name), "toy_%016llx.ckpt", static_cast<unsigned long long>(h.digest()));
    return std::filesystem::path(SEPL_TEST_CACHE_DIR) / name;
}

struct FreezeViolation : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::uint64_t base_checksum(const sepl::SeplModel& m) {
    return m.parameters().checksum(sepl::SeplModel::is_base);
}

// Both stages, as sepl::train runs them, asserting that stage 1 moves only
// stream B's meta-network and context and that no stage moves the base encoder.
inline sepl::Checkpoint checked_train(sepl::SeplModel& model, sepl::BatchSource& batches) {
    const auto outside_stage1 = [](const std::string& n) { return !sepl::SeplModel::is_stage1_trainable(n); };
    const std::uint64_t base = base_checksum(model);
    sepl::Trainer trainer(model);
    sepl::Checkpoint current = sepl::initial_checkpoint(model);
    if (model.config().train.pretrain) {
        const std::uint64_t frozen = model.parameters().checksum(outside_stage1);
        current = trainer.run_stage1(batches, current);
        if (model.parameters().checksum(outside_stage1) != frozen)
            throw FreezeViolation("stage 1 changed a parameter outside prompt.B.meta / prompt.B.context");
        if (base_checksum(model) != base) throw FreezeViolation("stage 1 changed the base encoder");
    }
    current = trainer.run_stage2(batches, current);
    if (base_checksum(model) != base) throw FreezeViolation("stage 2 changed the base encoder");
    return current;
}

// Trains from scratch (timed) and refreshes the cache entry.
inline Result train_fresh(const Recipe& r, const Splits& s) {
    sepl::SeplModel model(r.config);
    sepl::ShuffledBatches batches(s.train, r.config.train.batch_size,
                                  static_cast<std::uint64_t>(r.config.train.seed));
    const auto t0 = std::chrono::steady_clock::now();
    Result out;
    out.checkpoint = checked_train(model, batches);
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const auto path = cache_path(r);
    std::filesystem::create_directories(path.parent_path());
    const auto tmp = path.string() + ".tmp" + std::to_string(std::chrono::steady_clock::now().time_since_epoch().count());
    sepl::save_checkpoint(out.checkpoint, tmp);
    std::filesystem::rename(tmp, path);
    return out;
}

inline Result trained(const Recipe& r, const Splits& s) {
    const auto path = cache_path(r);
    if (std::filesystem::exists(path)) {
        try {
            Result out{sepl::load_checkpoint(path), 0.0, true};
            const sepl::SeplModel fresh(r.config);
            if (base_checksum(*sepl::model_from_checkpoint(out.checkpoint)) != base_checksum(fresh))
                throw FreezeViolation("cached checkpoint " + path.string() + " has a modified base encoder");
            return out;
        } catch (const sepl::Error&) {
            // Stale or partial entry: retrain below.
        }
    }
    return train_fresh(r, s);
}

}  // namespace toy_run
