#pragma once

#include <string>
#include <vector>

#include "sepl/backend.hpp"
#include "sepl/config.hpp"
#include "sepl/parameters.hpp"

namespace sepl {

// Stream identifiers. A carries forgery-specific information and is the only
// stream evaluated at inference; B carries forgery-irrelevant content.
enum class Stream { kA, kB };
std::string stream_name(Stream s);

// Per-sample encoded prompts for a batch.
struct StreamBatch {
    std::vector<ag::Var> tokens;  // one sequence_len x text_hidden_dim per sample
    ag::Var pooled;               // N x joint_dim
    ag::Var conditional;          // N x text_hidden_dim, meta-network outputs
};

// Learnable prompt of one stream: k global context vectors shared by all
// samples plus a two-layer meta-network producing one instance-conditional
// vector from the pooled visual feature. The assembled prompt is
// [q, c_1, ..., c_k] followed by the backend's special tokens.
//
// Parameters: prompt.<S>.context, prompt.<S>.meta.fc{1,2}.{weight,bias}.
class PromptStream {
public:
    PromptStream(Stream stream, const ModelConfig& config, std::uint64_t seed,
                 ParameterStore& store);

    Stream stream() const { return stream_; }
    int context_len() const { return static_cast<int>(context_.rows()); }
    const ag::Var& context() const { return context_; }

    // Linear -> ReLU -> linear; accepts one or many rows of width visual_dim.
    ag::Var meta_forward(const ag::Var& pooled) const;
    RowVector meta_forward(const RowVector& pooled) const;

    ag::Var assemble_prompt(const ag::Var& q, const EncoderBackend& backend) const;
    Matrix assemble_prompt(const RowVector& q, const EncoderBackend& backend) const;

    TextOutput encode_stream(const ag::Var& pooled_row, const EncoderBackend& backend) const;
    TextEmbedding encode_stream(const VisionFeature& feature, const EncoderBackend& backend) const;

    StreamBatch encode_batch(const ag::Var& pooled, const EncoderBackend& backend) const;

private:
    Stream stream_;
    int visual_dim_;
    int text_dim_;
    ag::Var context_;
    ag::Var fc1_w_, fc1_b_, fc2_w_, fc2_b_;
};

}  // namespace sepl
