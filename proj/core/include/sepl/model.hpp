#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "sepl/alignment.hpp"
#include "sepl/backend.hpp"
#include "sepl/config.hpp"
#include "sepl/losses.hpp"
#include "sepl/prompts.hpp"

namespace sepl {

enum class ForwardMode {
    kPretrain,   // backbone + stream B prompts only
    kFull,       // everything used by the joint objective
    kInference,  // backbone + stream A only
};

struct ForwardPass {
    VisionOutput vision;
    StreamBatch a;
    StreamBatch b;
    ag::Var f_a;
    ag::Var f_b;
    ag::Var logits;
};

// The separable-prompt detector: frozen dual encoder (plus adapters), two
// prompt streams, two alignment blocks (or concat fusion), the text-to-visual
// projection, and a linear two-class head on the stream-A aligned feature.
class SeplModel {
public:
    explicit SeplModel(const RunConfig& config);
    SeplModel(const SeplModel&) = delete;
    SeplModel& operator=(const SeplModel&) = delete;

    const RunConfig& config() const { return config_; }
    ParameterStore& parameters() { return store_; }
    const ParameterStore& parameters() const { return store_; }
    const EncoderBackend& backend() const { return *backend_; }
    EncoderBackend& backend() { return *backend_; }
    const PromptStream& prompt(Stream s) const { return s == Stream::kA ? prompt_a_ : prompt_b_; }
    const SigmaProjection& sigma() const { return sigma_; }

    ForwardPass forward(const ag::Var& image_rows, ForwardMode mode) const;
    ag::Var align(Stream s, const ag::Var& f_joint, const StreamBatch& prompts) const;
    ag::Var classify(const ag::Var& f_a) const;

    // Probability of the fake class per image, from stream A only.
    std::vector<double> predict(const std::vector<const Image*>& images) const;
    double predict(const Image& image) const;

    // Names of parameters that make up each stream and the frozen base.
    static bool is_stage1_trainable(const std::string& name);
    static bool is_stream_a(const std::string& name);
    static bool is_base(const std::string& name);

private:
    RunConfig config_;
    ParameterStore store_;
    std::unique_ptr<EncoderBackend> backend_;
    PromptStream prompt_a_;
    PromptStream prompt_b_;
    std::optional<AlignBlock> align_a_, align_b_;
    std::optional<ConcatFusion> concat_a_, concat_b_;
    SigmaProjection sigma_;
    ag::Var head_w_, head_b_;
};

}  // namespace sepl
