#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

namespace sepl {

// ─── Model ──────────────────────────────────────────────────────────────────

enum class Fusion { kAttention, kConcat };

struct ModelConfig {
    std::string backend = "toy";
    int image_height = 224;
    int image_width = 224;
    int image_channels = 3;
    int visual_dim = 1024;      // pooled backbone width
    int joint_dim = 768;        // shared image/text embedding width
    int text_hidden_dim = 768;  // text-encoder token width
    int context_len = 16;       // k global context vectors per prompt
    int meta_hidden = 256;
    int adapter_rank = 4;       // 0 disables adapters
    std::string adapter = "standard";  // none | standard | plugin:<name>
    int num_heads = 1;
    Fusion fusion = Fusion::kAttention;
    int spatial_grid = 4;       // toy backend token map is grid x grid
    std::int64_t backbone_seed = 7;  // fixed "pretrained" toy weights

    static constexpr int kNumClasses = 2;

    // Dimensions used by the test-speed toy backend.
    static ModelConfig toy();

    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

// ─── Loss weights ───────────────────────────────────────────────────────────

struct LossWeights {
    double lambda_dis = 0.05;
    double lambda_div = 0.01;
    double lambda_align_specific = 0.08;
    double lambda_align_irrelevant = 0.12;
    double lambda_con = 0.1;
    double warmup_ratio = 0.1;
    double temperature = 0.07;

    void validate() const;
    bool operator==(const LossWeights&) const = default;
};

// ─── Training ───────────────────────────────────────────────────────────────

struct TrainConfig {
    int batch_size = 24;
    double learning_rate = 2e-4;
    double weight_decay = 5e-4;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double grad_clip = 1.0;
    int stage1_steps = 500;
    int stage2_steps = 5000;
    int checkpoint_every = 0;  // 0: final checkpoint only
    bool augment = true;
    std::int64_t seed = 0;

    // Ablation switches for the auxiliary objectives and the first stage.
    bool use_dis = true;
    bool use_div = true;
    bool use_align = true;
    bool use_con = true;
    bool pretrain = true;

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

struct RunConfig {
    ModelConfig model;
    LossWeights loss;
    TrainConfig train;

    void validate() const;
    bool operator==(const RunConfig&) const = default;
};

// Parses a flat `key = value` document. Blank lines and `#` comments are
// ignored; every key is optional and unknown keys are rejected.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

// Canonical text form: every key in a fixed order, doubles in round-trip
// precision. parse_config(serialize_config(c)) == c.
std::string serialize_config(const RunConfig& config);

// FNV-1a over the canonical text.
std::uint64_t config_hash(const RunConfig& config);

std::string to_string(Fusion fusion);
Fusion parse_fusion(const std::string& name);

// Auxiliary loss weight after linear warm-up: base * min(1, step / window)
// with window = ceil(warmup_ratio * total_steps).
double warmup_weight(double base, std::int64_t step, std::int64_t total_steps,
                     double warmup_ratio);

}  // namespace sepl
