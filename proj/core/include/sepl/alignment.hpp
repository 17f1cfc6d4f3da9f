#pragma once

#include <vector>

#include "sepl/autograd.hpp"
#include "sepl/config.hpp"
#include "sepl/parameters.hpp"
#include "sepl/prompts.hpp"

namespace sepl {

// Cross-modality alignment: the visual feature queries the prompt token
// sequence, then
//
//   aligned = FFN(LN(f + CA(f W_Q, T W_K, T W_V) W_O))
//
// with the residual added before layer normalization. W_O is zero-initialized
// so a fresh block reduces to FFN(LN(f)).
//
// Parameters: align.<S>.{wq,wk,wv,wo,ln.gain,ln.bias,ffn.fc1.*,ffn.fc2.*}.
class AlignBlock {
public:
    AlignBlock(Stream stream, const ModelConfig& config, std::uint64_t seed,
               ParameterStore& store);

    // f: 1 x joint_dim, tokens: L x text_hidden_dim. Optionally returns the
    // attention weights (num_heads x L).
    ag::Var cross_attend(const ag::Var& f, const ag::Var& tokens,
                         Matrix* attention = nullptr) const;
    // Batched: f is N x joint_dim, tokens[i] the sequence of sample i.
    ag::Var forward(const ag::Var& f, const std::vector<ag::Var>& tokens) const;

    // FFN(LN(x)) on its own, shared by the attention path.
    ag::Var norm_ffn(const ag::Var& x) const;

private:
    ag::Var attend_rows(const ag::Var& q_all, const ag::Var& k, const ag::Var& v,
                        Eigen::Index row, Matrix* attention) const;

    int joint_dim_, text_dim_, heads_;
    ag::Var wq_, wk_, wv_, wo_, ln_gain_, ln_bias_;
    ag::Var ffn1_w_, ffn1_b_, ffn2_w_, ffn2_b_;
};

// Concatenation fusion used only by the fusion ablation:
// aligned = [f, T_pooled] W + b.
class ConcatFusion {
public:
    ConcatFusion(Stream stream, const ModelConfig& config, std::uint64_t seed,
                 ParameterStore& store);
    ag::Var forward(const ag::Var& f, const ag::Var& text_pooled) const;

private:
    ag::Var w_, b_;
};

// Learnable affine map from the text embedding space into the visual space
// used by the alignment objective. Identity-initialized when square.
class SigmaProjection {
public:
    SigmaProjection(const ModelConfig& config, std::uint64_t seed, ParameterStore& store);
    ag::Var project_text(const ag::Var& text_pooled) const;
    RowVector project_text(const RowVector& text_pooled) const;

private:
    ag::Var w_, b_;
};

}  // namespace sepl
