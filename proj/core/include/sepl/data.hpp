#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sepl/image.hpp"

namespace sepl {

// ─── Manifest ───────────────────────────────────────────────────────────────

enum class Split { kTrain, kVal, kTest };
std::string to_string(Split split);
Split parse_split(const std::string& name);

// Watermark rectangle of a synthetic fake, in pixels.
struct PatchBox {
    int y = 0, x = 0, height = 0, width = 0;
    bool operator==(const PatchBox&) const = default;
};

struct Sample {
    std::filesystem::path path;  // resolved against the manifest directory
    int label = 0;               // 0 real, 1 fake
    std::string video_id;
    std::string method;
    Split split = Split::kTrain;
    std::optional<PatchBox> patch;
    bool operator==(const Sample&) const = default;
};

struct Manifest {
    std::vector<Sample> samples;
    std::map<Split, std::size_t> split_counts;
    std::vector<std::string> warnings;
};

// Newline-delimited JSON records with keys path, label, video_id, method,
// split and an optional patch [y, x, h, w]. Relative paths resolve against
// the manifest's directory.
Manifest load_manifest(const std::filesystem::path& path);
Manifest parse_manifest(const std::string& text, const std::filesystem::path& base_dir);
// Writes paths relative to the manifest directory, one record per line.
void write_manifest(const std::vector<Sample>& samples, const std::filesystem::path& path);
std::string manifest_record(const Sample& sample, const std::filesystem::path& base_dir);

// Samples of one split (or all) with decoded images.
struct Dataset {
    std::vector<Sample> samples;
    std::vector<Image> images;

    std::size_t size() const { return samples.size(); }
    std::vector<const Image*> image_ptrs() const;
    std::vector<int> labels() const;
};

Dataset load_dataset(const Manifest& manifest, std::optional<Split> split = std::nullopt);
Dataset filter_split(const Dataset& all, Split split);

// Permutes labels across videos (all frames of a video keep one label); the
// leakage sanity check trains on this.
Dataset shuffle_labels_by_video(const Dataset& data, std::uint64_t seed);

// ─── Synthetic watermark dataset ───────────────────────────────────────────

struct ToyDatasetOptions {
    int n_videos = 40;
    int frames_per_video = 4;
    std::uint64_t seed = 0;
    int image_size = 32;
    int patch_size = 8;
    double watermark_amplitude = 0.06;
    double val_fraction = 0.1;
    double test_fraction = 0.4;
};

// Each video shares a smooth base pattern; fake videos add a low-amplitude
// checkerboard patch at a per-video grid-aligned location. Labels are exactly
// balanced and splits are disjoint by video. Pixels are quantized to 8 bits,
// so the in-memory result equals what make_toy_dataset writes to disk.
Dataset generate_toy_dataset(const ToyDatasetOptions& options);
// Writes images/<video>_f<k>.png and manifest.jsonl under `out_dir`.
Dataset make_toy_dataset(const ToyDatasetOptions& options, const std::filesystem::path& out_dir);

// ─── Training augmentation ─────────────────────────────────────────────────

struct AugmentOptions {
    double p_flip = 0.5;
    double p_rotate = 0.5;
    double p_blur = 0.5;
    double p_color = 0.5;  // brightness/contrast
    double max_rotate_degrees = 10.0;
    double max_blur_sigma = 1.0;
    double max_brightness = 0.1;
    double max_contrast = 0.2;

    static AugmentOptions disabled();
    static AugmentOptions flip_only();
};

// Applies each family with its own seeded coin flip; output is clipped to [0, 1].
Image augment(const Image& image, std::uint64_t seed, const AugmentOptions& options = {});

// ─── Robustness perturbations ──────────────────────────────────────────────

enum class PerturbationFamily {
    kBlockWise,
    kColorSaturation,
    kColorContrast,
    kGaussianNoise,
    kGaussianBlur,
    kJpegCompression,
};

std::string to_string(PerturbationFamily family);
PerturbationFamily parse_family(const std::string& name);
const std::vector<PerturbationFamily>& all_families();

struct PerturbationSpec {
    PerturbationFamily family = PerturbationFamily::kGaussianNoise;
    int severity = 1;  // 1..5
    std::uint64_t seed = 0;
};

// Per-severity parameters, index 0 = severity 1.
struct SeverityTable {
    int block_size = 4;
    std::array<double, 5> block_fraction{};
    std::array<double, 5> saturation_factor{};
    std::array<double, 5> contrast_factor{};
    std::array<double, 5> noise_sigma{};
    std::array<double, 5> blur_sigma{};
    std::array<int, 5> jpeg_quality{};

    static const SeverityTable& builtin();
    static SeverityTable load(const std::filesystem::path& path);
    static SeverityTable from_json_text(const std::string& text);
    std::string to_json_text() const;
    bool operator==(const SeverityTable&) const = default;
};

Image perturb(const Image& image, const PerturbationSpec& spec,
              const SeverityTable& table = SeverityTable::builtin());

// JPEG round trip at the given quality (1..100).
Image jpeg_roundtrip(const Image& image, int quality);
Image gaussian_blur(const Image& image, double sigma);

}  // namespace sepl
