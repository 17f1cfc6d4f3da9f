#include "cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>

#include "sepl/checkpoint.hpp"
#include "sepl/data.hpp"
#include "sepl/error.hpp"
#include "sepl/eval.hpp"
#include "sepl/trainer.hpp"

namespace fs = std::filesystem;

namespace sepl::cli {

namespace {

fs::path output_dir(const std::string& out, const std::string& subcommand) {
    if (!out.empty()) return out;
    const char* root = std::getenv("SEPL_OUTPUT_ROOT");
    return fs::path(root && *root ? root : ".") / subcommand;
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write " + path.string());
    f << text;
    if (!f) throw DataError("failed writing " + path.string());
}

Split split_arg(const std::string& name) {
    try {
        return parse_split(name);
    } catch (const Error&) {
        throw ConfigError("--split must be train, val or test");
    }
}

PerturbationFamily family_arg(const std::string& name) {
    try {
        return parse_family(name);
    } catch (const Error&) {
        throw ConfigError("--families: unknown perturbation family '" + name + "'");
    }
}

std::unique_ptr<SeplModel> load_model(const std::string& path) {
    return model_from_checkpoint(load_checkpoint(path));
}

Dataset load_split(const std::string& manifest, Split split) {
    Dataset d = load_dataset(load_manifest(manifest), split);
    if (d.size() == 0)
        throw DataError("manifest " + manifest + " has no " + to_string(split) + " samples");
    return d;
}

bool both_classes(const Dataset& d) {
    const auto y = d.labels();
    const auto pos = std::count(y.begin(), y.end(), 1);
    return pos > 0 && pos < static_cast<std::ptrdiff_t>(y.size());
}

// ─── make-toy ──────────────────────────────────────────────────────────────

struct MakeToyArgs {
    std::string out;
    ToyDatasetOptions options;
};

int make_toy(const MakeToyArgs& a, std::ostream& out) {
    const fs::path dir = output_dir(a.out, "toy");
    const Dataset d = make_toy_dataset(a.options, dir);
    out << "wrote " << d.size() << " images to " << (dir / "manifest.jsonl").string() << '\n';
    return kOk;
}

// ─── train ─────────────────────────────────────────────────────────────────

struct TrainArgs {
    std::string config, manifest, out, resume, stop_at;
    bool skip_pretrain = false, no_dis = false, no_div = false, no_align = false, no_con = false;
    bool force = false;
    std::optional<int> k, seed;
    std::optional<std::int64_t> stage1_steps, stage2_steps;
    std::string fusion, adapter;
};

RunConfig train_config(const TrainArgs& a) {
    RunConfig c = a.config.empty() ? RunConfig{} : load_config(a.config);
    if (a.skip_pretrain) c.train.pretrain = false;
    if (a.no_dis) c.train.use_dis = false;
    if (a.no_div) c.train.use_div = false;
    if (a.no_align) c.train.use_align = false;
    if (a.no_con) c.train.use_con = false;
    if (a.k) c.model.context_len = *a.k;
    if (a.seed) c.train.seed = *a.seed;
    if (a.stage1_steps) c.train.stage1_steps = *a.stage1_steps;
    if (a.stage2_steps) c.train.stage2_steps = *a.stage2_steps;
    if (!a.fusion.empty()) c.model.fusion = parse_fusion(a.fusion);
    if (!a.adapter.empty()) c.model.adapter = a.adapter;
    c.validate();
    return c;
}

StopPoint parse_stop(const std::string& text) {
    const auto colon = text.find(':');
    try {
        if (colon == std::string::npos) throw std::invalid_argument(text);
        StopPoint p{std::stoi(text.substr(0, colon)), std::stoll(text.substr(colon + 1))};
        if ((p.stage != 1 && p.stage != 2) || p.step < 0) throw std::invalid_argument(text);
        return p;
    } catch (const std::logic_error&) {
        throw ConfigError("--stop-at expects STAGE:STEP with STAGE 1 or 2, got '" + text + "'");
    }
}

int train_cmd(const TrainArgs& a, std::ostream& out) {
    const fs::path dir = output_dir(a.out, "train");
    const fs::path final_path = dir / "final.ckpt";

    std::unique_ptr<SeplModel> model;
    std::optional<Checkpoint> resume;
    if (!a.resume.empty()) {
        resume = load_checkpoint(a.resume);
        model = model_from_checkpoint(*resume);
        if (!a.config.empty() && config_hash(train_config(a)) != config_hash(model->config()))
            throw CheckpointError("checkpoint/config mismatch: " + a.resume +
                                  " was trained with a different configuration");
    } else {
        model = std::make_unique<SeplModel>(train_config(a));
    }
    const RunConfig& cfg = model->config();
    if (fs::exists(final_path) && !a.force)
        throw CheckpointError("refusing to overwrite " + final_path.string() + " (use --force)");

    const Dataset train_data = load_split(a.manifest, Split::kTrain);
    const Dataset val_data = load_dataset(load_manifest(a.manifest), Split::kVal);

    fs::create_directories(dir);
    write_file(dir / "config.cfg", serialize_config(cfg));
    std::ofstream log(dir / "train_log.jsonl", resume ? std::ios::app : std::ios::trunc);
    if (!log) throw DataError("cannot write " + (dir / "train_log.jsonl").string());

    const auto save = [&](const Checkpoint& c, const fs::path& path) {
        if (fs::exists(path) && !a.force && !(resume && fs::equivalent(path, a.resume)))
            throw CheckpointError("refusing to overwrite " + path.string() + " (use --force)");
        save_checkpoint(c, path);
    };

    TrainHooks hooks;
    hooks.on_step = [&log](const LossReport& r) { log << to_log_line(r) << '\n'; };
    hooks.on_checkpoint = [&](const Checkpoint& c) {
        char name[64];
        std::snprintf(name, sizeof name, "ckpt_stage%d_step%06lld.ckpt",
                      c.meta.at("stage").get<int>(),
                      static_cast<long long>(c.meta.at("step").get<std::int64_t>()));
        save(c, dir / name);
    };
    if (both_classes(val_data))
        hooks.validate = [&val_data](const SeplModel& m) {
            return evaluate(m, val_data, "val").metrics.auc;
        };
    if (!a.stop_at.empty()) hooks.stop_at = parse_stop(a.stop_at);

    ShuffledBatches batches(train_data, cfg.train.batch_size,
                            static_cast<std::uint64_t>(cfg.train.seed),
                            cfg.train.augment ? std::optional(AugmentOptions{}) : std::nullopt);
    const Checkpoint result = train(*model, batches, hooks, resume ? &*resume : nullptr);
    log.flush();

    const bool done = result.meta.at("stage").get<int>() == 2 &&
                      result.meta.at("stage_complete").get<bool>();
    const fs::path path = done ? final_path : dir / "interrupted.ckpt";
    save(result, path);
    out << (done ? "training complete: " : "training stopped: ") << path.string() << '\n';
    return kOk;
}

// ─── eval / robust ─────────────────────────────────────────────────────────

struct EvalArgs {
    std::string checkpoint, manifest, out, split = "test";
};

int eval_cmd(const EvalArgs& a, std::ostream& out) {
    const auto model = load_model(a.checkpoint);
    const Split split = split_arg(a.split);
    const Dataset data = load_split(a.manifest, split);
    const ScoreTable scores = score_dataset(*model, data);
    EvalReport report;
    report.dataset = a.split;
    report.metrics = video_metrics(scores);
    report.config_hash = config_hash(model->config());

    const fs::path dir = output_dir(a.out, "eval");
    fs::create_directories(dir);
    write_file(dir / "eval.json", report.to_json().dump(2) + "\n");
    write_file(dir / "eval.csv", report.to_csv());
    std::ostringstream csv;
    csv << "video_id,frame,score,label\n";
    for (const auto& row : scores) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", row.score);
        csv << row.video_id << ',' << row.frame << ',' << buf << ',' << row.label << '\n';
    }
    write_file(dir / "scores.csv", csv.str());
    out << "auc " << report.metrics.auc << " ap " << report.metrics.ap << " eer "
        << report.metrics.eer << '\n';
    return kOk;
}

struct RobustArgs {
    std::string checkpoint, manifest, out, split = "test", table;
    std::vector<std::string> families;
    std::vector<int> severities{1, 2, 3, 4, 5};
};

int robust_cmd(const RobustArgs& a, std::ostream& out) {
    const auto model = load_model(a.checkpoint);
    const Dataset data = load_split(a.manifest, split_arg(a.split));
    std::vector<PerturbationFamily> families;
    if (a.families.empty()) families = all_families();
    for (const auto& f : a.families) families.push_back(family_arg(f));
    for (int sev : a.severities)
        if (sev < 1 || sev > 5) throw ConfigError("--severities must lie in 1..5");
    const SeverityTable table = a.table.empty() ? SeverityTable::builtin() : SeverityTable::load(a.table);

    const RobustnessReport report = robustness_sweep(*model, data, families, a.severities, table);
    const fs::path dir = output_dir(a.out, "robust");
    fs::create_directories(dir);
    write_file(dir / "robustness.json", report.to_json().dump(2) + "\n");
    write_file(dir / "robustness.csv", report.to_csv());
    plot_robustness(report, dir / "robustness.png");
    out << "clean auc " << report.clean_auc << "; " << report.cells.size() << " cells written to "
        << dir.string() << '\n';
    return kOk;
}

// ─── export ────────────────────────────────────────────────────────────────

struct EmbeddingArgs {
    std::string checkpoint, manifest, out, split = "test", which = "specific";
    int max_points = 2000;
    std::optional<std::uint64_t> seed;
};

int export_embeddings_cmd(const EmbeddingArgs& a, std::ostream& out) {
    const auto model = load_model(a.checkpoint);
    const Dataset data = load_split(a.manifest, split_arg(a.split));
    TsneOptions opt;
    opt.max_points = a.max_points;
    opt.seed = a.seed ? *a.seed : static_cast<std::uint64_t>(model->config().train.seed);
    const auto result = export_embeddings(*model, data, parse_feature_kind(a.which),
                                          output_dir(a.out, "export"), opt);
    out << "wrote " << result.rows << " points to " << result.points.string() << '\n';
    return kOk;
}

struct SaliencyArgs {
    std::string checkpoint, out;
    std::vector<std::string> images;
};

int export_saliency_cmd(const SaliencyArgs& a, std::ostream& out) {
    const auto model = load_model(a.checkpoint);
    const fs::path dir = output_dir(a.out, "export");
    fs::create_directories(dir);
    for (const auto& path : a.images) {
        const fs::path stem = dir / (fs::path(path).stem().string() + "_saliency");
        export_saliency(*model, read_png(path), stem);
        out << "wrote " << stem.string() << ".csv\n";
    }
    return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Separable prompt learning for face forgery detection", "sepl"};
    app.require_subcommand(1);

    MakeToyArgs toy;
    auto* make = app.add_subcommand("make-toy", "Generate the synthetic watermark dataset");
    make->add_option("--out", toy.out, "Output directory (default $SEPL_OUTPUT_ROOT/toy)");
    make->add_option("--videos", toy.options.n_videos, "Number of videos (even, >= 4)")
        ->capture_default_str();
    make->add_option("--frames", toy.options.frames_per_video, "Frames per video")
        ->capture_default_str();
    make->add_option("--seed", toy.options.seed, "Generator seed")->capture_default_str();
    make->add_option("--amplitude", toy.options.watermark_amplitude, "Watermark amplitude")
        ->capture_default_str();

    TrainArgs tr;
    auto* train = app.add_subcommand("train", "Run two-stage training");
    train->add_option("--config", tr.config, "Configuration file (key = value)");
    train->add_option("--manifest", tr.manifest, "Dataset manifest (JSONL)")->required();
    train->add_option("--out", tr.out, "Output directory (default $SEPL_OUTPUT_ROOT/train)");
    train->add_option("--resume", tr.resume, "Continue from a checkpoint");
    train->add_option("--stop-at", tr.stop_at, "Halt after STAGE:STEP and write interrupted.ckpt");
    train->add_option("--seed", tr.seed, "Seed override");
    train->add_option("--k", tr.k, "Context length override");
    train->add_option("--fusion", tr.fusion, "attention | concat");
    train->add_option("--adapter", tr.adapter, "none | standard | plugin:<name>");
    train->add_option("--stage1-steps", tr.stage1_steps, "Stage-1 step override");
    train->add_option("--stage2-steps", tr.stage2_steps, "Stage-2 step override");
    train->add_flag("--skip-pretrain", tr.skip_pretrain, "Skip stage 1");
    train->add_flag("--no-dis", tr.no_dis, "Disable the disentanglement loss");
    train->add_flag("--no-div", tr.no_div, "Disable the prompt diversity loss");
    train->add_flag("--no-align", tr.no_align, "Disable the alignment loss");
    train->add_flag("--no-con", tr.no_con, "Disable the supervised contrastive loss");
    train->add_flag("--force", tr.force, "Overwrite existing checkpoints");

    EvalArgs ev;
    auto* eval = app.add_subcommand("eval", "Video-level AUC / AP / EER");
    eval->add_option("--checkpoint", ev.checkpoint, "Trained checkpoint")->required();
    eval->add_option("--manifest", ev.manifest, "Dataset manifest")->required();
    eval->add_option("--split", ev.split, "train | val | test")->capture_default_str();
    eval->add_option("--out", ev.out, "Output directory (default $SEPL_OUTPUT_ROOT/eval)");

    RobustArgs rb;
    auto* robust = app.add_subcommand("robust", "Perturbation robustness sweep");
    robust->add_option("--checkpoint", rb.checkpoint, "Trained checkpoint")->required();
    robust->add_option("--manifest", rb.manifest, "Dataset manifest")->required();
    robust->add_option("--split", rb.split, "train | val | test")->capture_default_str();
    robust->add_option("--families", rb.families, "Perturbation families (default: all)")
        ->delimiter(',');
    robust->add_option("--severities", rb.severities, "Severities in 1..5")
        ->delimiter(',')
        ->capture_default_str();
    robust->add_option("--severity-table", rb.table, "JSON severity table");
    robust->add_option("--out", rb.out, "Output directory (default $SEPL_OUTPUT_ROOT/robust)");

    auto* exp = app.add_subcommand("export", "Embedding and saliency exports");
    exp->require_subcommand(1);
    EmbeddingArgs em;
    auto* emb = exp->add_subcommand("embeddings", "Feature points plus a t-SNE plot");
    emb->add_option("--checkpoint", em.checkpoint, "Trained checkpoint")->required();
    emb->add_option("--manifest", em.manifest, "Dataset manifest")->required();
    emb->add_option("--split", em.split, "train | val | test")->capture_default_str();
    emb->add_option("--which", em.which, "backbone | specific | irrelevant")->capture_default_str();
    emb->add_option("--max-points", em.max_points, "t-SNE sample cap")->capture_default_str();
    emb->add_option("--seed", em.seed, "t-SNE seed (default: the run seed)");
    emb->add_option("--out", em.out, "Output directory (default $SEPL_OUTPUT_ROOT/export)");
    SaliencyArgs sa;
    auto* sal = exp->add_subcommand("saliency", "Activation maps on the token grid");
    sal->add_option("--checkpoint", sa.checkpoint, "Trained checkpoint")->required();
    sal->add_option("--image", sa.images, "PNG image(s)")->required();
    sal->add_option("--out", sa.out, "Output directory (default $SEPL_OUTPUT_ROOT/export)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return e.get_exit_code() == 0 ? kOk : kUsage;
    }

    try {
        if (make->parsed()) return make_toy(toy, out);
        if (train->parsed()) return train_cmd(tr, out);
        if (eval->parsed()) return eval_cmd(ev, out);
        if (robust->parsed()) return robust_cmd(rb, out);
        if (emb->parsed()) return export_embeddings_cmd(em, out);
        if (sal->parsed()) return export_saliency_cmd(sa, out);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kFailure;
    }
    return kUsage;
}

}  // namespace sepl::cli
