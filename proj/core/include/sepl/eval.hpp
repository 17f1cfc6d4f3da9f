#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "sepl/data.hpp"
#include "sepl/losses.hpp"
#include "sepl/model.hpp"

namespace sepl {

// ─── Scores and metrics ────────────────────────────────────────────────────

struct FrameScore {
    std::string video_id;
    int frame = 0;
    double score = 0.0;
    int label = 0;
};
using ScoreTable = std::vector<FrameScore>;

struct VideoScore {
    std::string video_id;
    double score = 0.0;
    int label = 0;
    int frames = 0;
};

// One row per video (first-appearance order), score = mean frame score.
std::vector<VideoScore> aggregate_video(const ScoreTable& table);

// Mann-Whitney AUC, ties count one half.
double auc(const std::vector<double>& scores, const Labels& labels);
// Sum over distinct descending thresholds of (recall increment) * precision.
double average_precision(const std::vector<double>& scores, const Labels& labels);
// Raw crossing of false-accept and false-reject rates, linearly interpolated
// between adjacent thresholds. May exceed 0.5 for inverted scores.
double eer(const std::vector<double>& scores, const Labels& labels);

struct Metrics {
    double auc = 0.0;
    double ap = 0.0;
    double eer = 0.0;          // canonical, in [0, 0.5]
    bool eer_inverted = false;  // scores were inverted to reach the canonical value
    std::size_t frames = 0;
    std::size_t videos = 0;
};

Metrics video_metrics(const ScoreTable& table);

// ─── Scoring ───────────────────────────────────────────────────────────────

// Scores every frame; with `perturbation`, each image is perturbed first with
// a seed derived from (the perturbation seed, family, path), shared across severities.
ScoreTable score_dataset(const SeplModel& model, const Dataset& data,
                         const std::optional<PerturbationSpec>& perturbation = std::nullopt,
                         const SeverityTable& table = SeverityTable::builtin());

struct EvalReport {
    std::string dataset;
    Metrics metrics;
    std::uint64_t config_hash = 0;

    nlohmann::json to_json() const;
    std::string to_csv() const;
};

EvalReport evaluate(const SeplModel& model, const Dataset& data, const std::string& name);

// ─── Robustness ────────────────────────────────────────────────────────────

struct RobustCell {
    std::string family;  // "none" for the severity-0 control, "average" for the mean row
    int severity = 0;
    Metrics metrics;
};

struct RobustnessReport {
    double clean_auc = 0.0;
    std::vector<RobustCell> cells;  // control, then family x severity, then averages
    std::uint64_t config_hash = 0;

    const RobustCell& cell(const std::string& family, int severity) const;
    nlohmann::json to_json() const;
    std::string to_csv() const;
};

RobustnessReport robustness_sweep(const SeplModel& model, const Dataset& data,
                                  const std::vector<PerturbationFamily>& families,
                                  const std::vector<int>& severities,
                                  const SeverityTable& table = SeverityTable::builtin());

// Per-family AUC against severity, plus the averaged curve.
void plot_robustness(const RobustnessReport& report, const std::filesystem::path& path);

// ─── Feature exports ───────────────────────────────────────────────────────

enum class FeatureKind { kBackbone, kSpecific, kIrrelevant };
std::string to_string(FeatureKind kind);
FeatureKind parse_feature_kind(const std::string& name);

// f (backbone joint feature), f^A or f^B, one row per sample.
Matrix extract_features(const SeplModel& model, const Dataset& data, FeatureKind kind);

// Logistic regression fit on (train_x, train_y), accuracy on (test_x, test_y).
double linear_probe_accuracy(const Matrix& train_x, const Labels& train_y, const Matrix& test_x,
                             const Labels& test_y);

struct TsneOptions {
    double perplexity = 30.0;
    int iterations = 500;
    int max_points = 2000;
    std::uint64_t seed = 0;
};

// Exact t-SNE to two dimensions.
Matrix tsne(const Matrix& points, const TsneOptions& options = {});

void plot_scatter(const Matrix& xy, const Labels& labels, const std::filesystem::path& path);

struct EmbeddingExport {
    std::filesystem::path points;
    std::filesystem::path projection;
    std::filesystem::path plot;
    std::size_t rows = 0;
};

// Writes <kind>_points.csv (every sample), <kind>_tsne.csv and <kind>_tsne.png
// (at most options.max_points samples, chosen by seed).
EmbeddingExport export_embeddings(const SeplModel& model, const Dataset& data, FeatureKind kind,
                                  const std::filesystem::path& out_dir,
                                  const TsneOptions& options = {});

// Gradient x activation of the fake-class margin on the backbone's token
// grid, rectified and scaled to [0, 1]. grid x grid.
Matrix saliency_map(const SeplModel& model, const Image& image);

// Writes <stem>.csv with the grid and <stem>.png with the map over the image.
void export_saliency(const SeplModel& model, const Image& image,
                     const std::filesystem::path& out_stem);

}  // namespace sepl
