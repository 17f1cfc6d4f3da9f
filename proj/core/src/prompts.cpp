#include "sepl/prompts.hpp"

#include <cmath>

#include "sepl/error.hpp"
#include "sepl/hash.hpp"

namespace sepl {

std::string stream_name(Stream s) { return s == Stream::kA ? "A" : "B"; }

PromptStream::PromptStream(Stream stream, const ModelConfig& config, std::uint64_t seed,
                           ParameterStore& store)
    : stream_(stream), visual_dim_(config.visual_dim), text_dim_(config.text_hidden_dim) {
    const std::string p = "prompt." + stream_name(stream) + ".";
    const auto init = [&](const std::string& name, Eigen::Index r, Eigen::Index c, double sd) {
        return store.add(p + name, normal_matrix(r, c, sd, derive_seed(seed, p + name)),
                         ParamRole::kLearnable);
    };
    context_ = init("context", config.context_len, text_dim_, 0.02);
    fc1_w_ = init("meta.fc1.weight", visual_dim_, config.meta_hidden,
                  1.0 / std::sqrt(static_cast<double>(visual_dim_)));
    fc1_b_ = store.add(p + "meta.fc1.bias", Matrix::Zero(1, config.meta_hidden),
                       ParamRole::kLearnable);
    // Zero final layer: prompts start as pure global context.
    fc2_w_ = store.add(p + "meta.fc2.weight", Matrix::Zero(config.meta_hidden, text_dim_),
                       ParamRole::kLearnable);
    fc2_b_ = store.add(p + "meta.fc2.bias", Matrix::Zero(1, text_dim_), ParamRole::kLearnable);
}

ag::Var PromptStream::meta_forward(const ag::Var& pooled) const {
    if (pooled.cols() != visual_dim_)
        throw ShapeError("meta_forward: expected width " + std::to_string(visual_dim_) +
                         ", got " + std::to_string(pooled.cols()));
    const ag::Var hidden = ag::relu(ag::add_row(ag::matmul(pooled, fc1_w_), fc1_b_));
    return ag::add_row(ag::matmul(hidden, fc2_w_), fc2_b_);
}

RowVector PromptStream::meta_forward(const RowVector& pooled) const {
    return meta_forward(ag::constant(pooled)).value().row(0);
}

ag::Var PromptStream::assemble_prompt(const ag::Var& q, const EncoderBackend& backend) const {
    if (q.rows() != 1 || q.cols() != text_dim_)
        throw ShapeError("assemble_prompt: conditional vector must be 1 x " +
                         std::to_string(text_dim_));
    return ag::concat_rows({q, context_, backend.special_tokens()});
}

Matrix PromptStream::assemble_prompt(const RowVector& q, const EncoderBackend& backend) const {
    return assemble_prompt(ag::constant(q), backend).value();
}

TextOutput PromptStream::encode_stream(const ag::Var& pooled_row,
                                       const EncoderBackend& backend) const {
    return backend.encode_prompt(assemble_prompt(meta_forward(pooled_row), backend));
}

TextEmbedding PromptStream::encode_stream(const VisionFeature& feature,
                                          const EncoderBackend& backend) const {
    const auto out = encode_stream(ag::constant(feature.pooled), backend);
    return {out.tokens.value(), out.pooled.value().row(0)};
}

StreamBatch PromptStream::encode_batch(const ag::Var& pooled,
                                       const EncoderBackend& backend) const {
    StreamBatch out;
    out.conditional = meta_forward(pooled);
    std::vector<ag::Var> pooled_rows;
    for (Eigen::Index i = 0; i < pooled.rows(); ++i) {
        const auto text =
            backend.encode_prompt(assemble_prompt(ag::slice_rows(out.conditional, i, 1), backend));
        out.tokens.push_back(text.tokens);
        pooled_rows.push_back(text.pooled);
    }
    out.pooled = ag::concat_rows(pooled_rows);
    return out;
}

}  // namespace sepl
