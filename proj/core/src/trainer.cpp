#include "sepl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "sepl/error.hpp"
#include "sepl/hash.hpp"

namespace sepl {

// ─── Batches ───────────────────────────────────────────────────────────────

ShuffledBatches::ShuffledBatches(const Dataset& data, int batch_size, std::uint64_t seed,
                                 std::optional<AugmentOptions> augment)
    : data_(&data), batch_size_(batch_size), seed_(seed), augment_(std::move(augment)) {
    if (batch_size < 1) throw ConfigError("batch_size must be positive");
    shuffle_epoch();
}

void ShuffledBatches::shuffle_epoch() {
    order_.resize(data_->size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::mt19937_64 rng(derive_seed(seed_, "epoch" + std::to_string(epoch_)));
    std::shuffle(order_.begin(), order_.end(), rng);
}

std::optional<TrainBatch> ShuffledBatches::next() {
    if (data_->size() == 0) return std::nullopt;
    TrainBatch batch;
    batch.images.reserve(static_cast<std::size_t>(batch_size_));
    for (int i = 0; i < batch_size_; ++i) {
        if (cursor_ == order_.size()) {
            ++epoch_;
            cursor_ = 0;
            shuffle_epoch();
        }
        const std::size_t idx = order_[cursor_++];
        const Image& img = data_->images[idx];
        if (augment_)
            batch.images.push_back(
                sepl::augment(img, derive_seed(seed_, "aug" + std::to_string(drawn_)), *augment_));
        else
            batch.images.push_back(img);
        batch.labels.push_back(data_->samples[idx].label);
        ++drawn_;
    }
    return batch;
}

nlohmann::json ShuffledBatches::state() const {
    return {{"epoch", epoch_}, {"cursor", cursor_}, {"drawn", drawn_}};
}

void ShuffledBatches::restore(const nlohmann::json& state) {
    try {
        epoch_ = state.at("epoch").get<std::int64_t>();
        shuffle_epoch();
        cursor_ = state.at("cursor").get<std::size_t>();
        drawn_ = state.at("drawn").get<std::int64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("bad sampler state: ") + e.what());
    }
    if (cursor_ > order_.size()) throw CheckpointError("sampler cursor out of range");
}

// ─── Trainer ───────────────────────────────────────────────────────────────

std::vector<std::string> stage_trainable(const SeplModel& model, int stage) {
    std::vector<std::string> out;
    const auto& store = model.parameters();
    for (const auto& name : store.names()) {
        if (store.role(name) == ParamRole::kFrozenBase) continue;
        if (stage == 1 && !SeplModel::is_stage1_trainable(name)) continue;
        out.push_back(name);
    }
    return out;
}

namespace {

Matrix image_rows(const SeplModel& model, const std::vector<Image>& images) {
    std::vector<const Image*> ptrs;
    ptrs.reserve(images.size());
    for (const auto& img : images) ptrs.push_back(&img);
    return model.backend().images_to_rows(ptrs);
}

void check_finite(const LossReport& r) {
    const auto& t = r.terms;
    for (double v : {t.pre, t.cls, t.dis, t.div, t.align_specific, t.align_irrelevant, t.con,
                     r.total}) {
        if (!std::isfinite(v))
            throw TrainingError("non-finite loss at stage " + std::to_string(r.stage) +
                                " step " + std::to_string(r.step) + ": " + to_log_line(r));
    }
}

void check_batch(const TrainBatch& batch) {
    if (batch.images.size() < 2) throw TrainingError("training batches need at least 2 samples");
    if (batch.images.size() != batch.labels.size())
        throw TrainingError("batch images and labels differ in length");
}

std::int64_t meta_int(const nlohmann::json& meta, const char* key, std::int64_t fallback) {
    return meta.contains(key) ? meta.at(key).get<std::int64_t>() : fallback;
}

}  // namespace

Trainer::Trainer(SeplModel& model, TrainHooks hooks)
    : model_(model), hooks_(std::move(hooks)), adam_(model.config().train) {}

LossReport Trainer::stage1_loss(const TrainBatch& batch) {
    check_batch(batch);
    model_.parameters().zero_grad();
    const auto pass =
        model_.forward(ag::constant(image_rows(model_, batch.images)), ForwardMode::kPretrain);
    ag::Var loss = node::loss_pre(pass.vision.joint, pass.b.pooled, model_.config().loss.temperature);

    LossReport report;
    report.stage = 1;
    report.learning_rate = model_.config().train.learning_rate;
    report.terms.pre = loss.value()(0, 0);
    report.total = report.terms.pre;
    check_finite(report);
    ag::backward(loss);
    return report;
}

LossReport Trainer::stage2_loss(const TrainBatch& batch, std::int64_t step) {
    check_batch(batch);
    const RunConfig& cfg = model_.config();
    const LossSwitches switches{cfg.train.use_dis, cfg.train.use_div, cfg.train.use_align,
                                cfg.train.use_con};
    model_.parameters().zero_grad();
    const auto pass =
        model_.forward(ag::constant(image_rows(model_, batch.images)), ForwardMode::kFull);

    LossTerms terms;
    ag::Var cls = node::cross_entropy(pass.logits, batch.labels);
    terms.cls = cls.value()(0, 0);
    std::optional<ag::Var> dis, div, spec, irr, con;
    if (switches.dis) {
        dis = node::loss_dis(pass.f_a, pass.f_b);
        terms.dis = dis->value()(0, 0);
    }
    if (switches.div) {
        div = node::loss_div(pass.a.pooled, pass.b.pooled);
        terms.div = div->value()(0, 0);
    }
    if (switches.align) {
        auto [s, i] = node::loss_align(pass.f_a, pass.f_b, model_.sigma().project_text(pass.a.pooled),
                                       model_.sigma().project_text(pass.b.pooled), batch.labels);
        spec = s;
        irr = i;
        terms.align_specific = s.value()(0, 0);
        terms.align_irrelevant = i.value()(0, 0);
    }
    if (switches.con) {
        con = node::loss_con(pass.vision.joint, batch.labels, cfg.loss.temperature);
        terms.con = con->value()(0, 0);
    }

    LossReport report = loss_total(terms, cfg.loss, step, cfg.train.stage2_steps, switches);
    report.stage = 2;
    report.learning_rate = cfg.train.learning_rate;
    check_finite(report);

    ag::Var total = cls;
    const auto add = [&total](const std::optional<ag::Var>& term, double w) {
        if (term && w != 0.0) total = total + ag::scale(*term, w);
    };
    add(dis, report.weights.dis);
    add(div, report.weights.div);
    add(spec, report.weights.align_specific);
    add(irr, report.weights.align_irrelevant);
    add(con, report.weights.con);
    ag::backward(total);
    return report;
}

Checkpoint Trainer::snapshot(int stage, std::int64_t step, bool stage_complete,
                             const BatchSource* data) const {
    const RunConfig& cfg = model_.config();
    Checkpoint c;
    c.arrays = model_.parameters().snapshot();
    adam_.save(c);
    c.meta["format"] = "sepl-checkpoint";
    c.meta["config"] = serialize_config(cfg);
    c.meta["config_hash"] = config_hash(cfg);
    c.meta["seed"] = cfg.train.seed;
    c.meta["stage"] = stage;
    c.meta["step"] = step;
    c.meta["stage_complete"] = stage_complete;
    c.meta["pretrain"] = cfg.train.pretrain;
    c.meta["skip_pretrain"] = !cfg.train.pretrain;
    c.meta["stage1_done"] = stage1_done_;
    c.meta["sampler"] = data ? data->state() : nlohmann::json(nullptr);
    c.meta["best_metric"] = best_metric_ ? nlohmann::json(*best_metric_) : nlohmann::json(nullptr);
    return c;
}

Checkpoint Trainer::run_stage1(BatchSource& data, const Checkpoint& from) {
    return run_stage(1, data, from);
}

Checkpoint Trainer::run_stage2(BatchSource& data, const Checkpoint& from) {
    return run_stage(2, data, from);
}

Checkpoint Trainer::run_stage(int stage, BatchSource& data, const Checkpoint& from) {
    const RunConfig& cfg = model_.config();
    const std::int64_t total = stage == 1 ? cfg.train.stage1_steps : cfg.train.stage2_steps;
    const std::int64_t from_stage = meta_int(from.meta, "stage", 0);
    const bool from_complete = from.meta.value("stage_complete", true);
    const bool resuming = from_stage == stage && !from_complete;

    if (from.meta.contains("config_hash") &&
        from.meta.at("config_hash").get<std::uint64_t>() != config_hash(cfg))
        throw CheckpointError("checkpoint was written by a different configuration");
    model_.parameters().load(from.arrays);
    stage1_done_ = from.meta.value("stage1_done", false);
    if (from.meta.contains("best_metric") && !from.meta.at("best_metric").is_null())
        best_metric_ = from.meta.at("best_metric").get<double>();
    if (from.meta.contains("sampler") && !from.meta.at("sampler").is_null())
        data.restore(from.meta.at("sampler"));

    std::int64_t step = 0;
    if (resuming) {
        adam_.load(from);
        step = meta_int(from.meta, "step", 0);
    } else {
        adam_.reset();
        if (total == 0) return from;
    }

    const auto names = stage_trainable(model_, stage);
    model_.parameters().set_trainable([stage](const std::string& n) {
        return stage == 2 || SeplModel::is_stage1_trainable(n);
    });

    const auto update_best = [this] {
        if (!hooks_.validate) return;
        const double m = hooks_.validate(model_);
        if (!best_metric_ || m > *best_metric_) best_metric_ = m;
    };

    while (step < total) {
        if (hooks_.stop_at && hooks_.stop_at->stage == stage && hooks_.stop_at->step == step)
            return snapshot(stage, step, false, &data);
        auto batch = data.next();
        if (!batch)
            throw TrainingError("data exhausted at stage " + std::to_string(stage) + " step " +
                                std::to_string(step));
        LossReport report = stage == 1 ? stage1_loss(*batch) : stage2_loss(*batch, step);
        report.step = step;
        adam_.step(model_.parameters(), names);
        if (hooks_.on_step) hooks_.on_step(report);
        ++step;
        const auto every = cfg.train.checkpoint_every;
        if (every > 0 && step % every == 0 && step < total) {
            if (stage == 2) update_best();
            if (hooks_.on_checkpoint) hooks_.on_checkpoint(snapshot(stage, step, false, &data));
        }
    }
    if (stage == 1) stage1_done_ = true;
    if (stage == 2) update_best();
    model_.parameters().set_trainable([](const std::string&) { return false; });
    return snapshot(stage, total, true, &data);
}

Checkpoint initial_checkpoint(const SeplModel& model) {
    Trainer t(const_cast<SeplModel&>(model));
    Checkpoint c = t.snapshot(0, 0, true, nullptr);
    return c;
}

std::unique_ptr<SeplModel> model_from_checkpoint(const Checkpoint& checkpoint) {
    if (!checkpoint.meta.contains("config"))
        throw CheckpointError("checkpoint carries no configuration");
    const RunConfig cfg = parse_config(checkpoint.meta.at("config").get<std::string>());
    if (checkpoint.meta.contains("config_hash") &&
        checkpoint.meta.at("config_hash").get<std::uint64_t>() != config_hash(cfg))
        throw CheckpointError("checkpoint configuration hash mismatch");
    auto model = std::make_unique<SeplModel>(cfg);
    try {
        model->parameters().load(checkpoint.arrays);
    } catch (const Error& e) {
        throw CheckpointError(std::string("checkpoint does not match its configuration: ") +
                              e.what());
    }
    return model;
}

Checkpoint train(SeplModel& model, BatchSource& data, const TrainHooks& hooks,
                 const Checkpoint* resume) {
    Trainer trainer(model, hooks);
    Checkpoint current = resume ? *resume : initial_checkpoint(model);
    const auto stage = [&] { return meta_int(current.meta, "stage", 0); };
    const auto complete = [&] { return current.meta.value("stage_complete", true); };

    if (stage() == 2 && complete()) return current;
    if (model.config().train.pretrain && stage() <= 1 && !(stage() == 1 && complete())) {
        current = trainer.run_stage1(data, current);
        if (!complete()) return current;
    }
    current = trainer.run_stage2(data, current);
    return current;
}

}  // namespace sepl
