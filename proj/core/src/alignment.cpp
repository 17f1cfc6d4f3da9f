#include "sepl/alignment.hpp"

#include <cmath>

#include "sepl/error.hpp"
#include "sepl/hash.hpp"

namespace sepl {

namespace {

ag::Var seeded(ParameterStore& store, const std::string& name, Eigen::Index r, Eigen::Index c,
               std::uint64_t seed) {
    return store.add(name,
                     normal_matrix(r, c, 1.0 / std::sqrt(static_cast<double>(r)),
                                   derive_seed(seed, name)),
                     ParamRole::kLearnable);
}

ag::Var zeros(ParameterStore& store, const std::string& name, Eigen::Index r, Eigen::Index c) {
    return store.add(name, Matrix::Zero(r, c), ParamRole::kLearnable);
}

}  // namespace

AlignBlock::AlignBlock(Stream stream, const ModelConfig& config, std::uint64_t seed,
                       ParameterStore& store)
    : joint_dim_(config.joint_dim), text_dim_(config.text_hidden_dim), heads_(config.num_heads) {
    const std::string p = "align." + stream_name(stream) + ".";
    const int attn = joint_dim_;
    wq_ = seeded(store, p + "wq", joint_dim_, attn, seed);
    wk_ = seeded(store, p + "wk", text_dim_, attn, seed);
    wv_ = seeded(store, p + "wv", text_dim_, attn, seed);
    wo_ = zeros(store, p + "wo", attn, joint_dim_);
    ln_gain_ = store.add(p + "ln.gain", Matrix::Ones(1, joint_dim_), ParamRole::kLearnable);
    ln_bias_ = zeros(store, p + "ln.bias", 1, joint_dim_);
    ffn1_w_ = seeded(store, p + "ffn.fc1.weight", joint_dim_, 4 * joint_dim_, seed);
    ffn1_b_ = zeros(store, p + "ffn.fc1.bias", 1, 4 * joint_dim_);
    ffn2_w_ = seeded(store, p + "ffn.fc2.weight", 4 * joint_dim_, joint_dim_, seed);
    ffn2_b_ = zeros(store, p + "ffn.fc2.bias", 1, joint_dim_);
}

ag::Var AlignBlock::norm_ffn(const ag::Var& x) const {
    const ag::Var normed = ag::layer_norm_rows(x, ln_gain_, ln_bias_);
    const ag::Var hidden = ag::relu(ag::add_row(ag::matmul(normed, ffn1_w_), ffn1_b_));
    return ag::add_row(ag::matmul(hidden, ffn2_w_), ffn2_b_);
}

ag::Var AlignBlock::attend_rows(const ag::Var& q_all, const ag::Var& k, const ag::Var& v,
                                Eigen::Index row, Matrix* attention) const {
    const Eigen::Index head_dim = joint_dim_ / heads_;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
    const ag::Var q = ag::slice_rows(q_all, row, 1);
    std::vector<ag::Var> heads;
    if (attention) attention->resize(heads_, k.rows());
    for (int h = 0; h < heads_; ++h) {
        const auto qh = heads_ == 1 ? q : ag::slice_cols(q, h * head_dim, head_dim);
        const auto kh = heads_ == 1 ? k : ag::slice_cols(k, h * head_dim, head_dim);
        const auto vh = heads_ == 1 ? v : ag::slice_cols(v, h * head_dim, head_dim);
        const ag::Var weights = ag::softmax_rows(ag::scale(ag::matmul_transposed(qh, kh), inv_sqrt));
        if (attention) attention->row(h) = weights.value().row(0);
        heads.push_back(ag::matmul(weights, vh));
    }
    return heads_ == 1 ? heads.front() : ag::concat_cols(heads);
}

ag::Var AlignBlock::cross_attend(const ag::Var& f, const ag::Var& tokens, Matrix* attention) const {
    if (f.rows() != 1 || f.cols() != joint_dim_)
        throw ShapeError("cross_attend: query must be 1 x " + std::to_string(joint_dim_));
    if (tokens.rows() == 0) throw ShapeError("cross_attend: empty token sequence");
    if (tokens.cols() != text_dim_)
        throw ShapeError("cross_attend: tokens must have width " + std::to_string(text_dim_));
    const ag::Var q = ag::matmul(f, wq_);
    const ag::Var ctx =
        attend_rows(q, ag::matmul(tokens, wk_), ag::matmul(tokens, wv_), 0, attention);
    return norm_ffn(ag::add(f, ag::matmul(ctx, wo_)));
}

ag::Var AlignBlock::forward(const ag::Var& f, const std::vector<ag::Var>& tokens) const {
    if (f.cols() != joint_dim_ || static_cast<std::size_t>(f.rows()) != tokens.size())
        throw ShapeError("AlignBlock::forward: batch shape mismatch");
    for (const auto& t : tokens)
        if (t.rows() == 0 || t.cols() != text_dim_)
            throw ShapeError("AlignBlock::forward: bad token sequence shape");
    const ag::Var q = ag::matmul(f, wq_);
    // Stack every sequence so keys/values come from two matmuls.
    const ag::Var stacked = ag::concat_rows(tokens);
    const ag::Var k_all = ag::matmul(stacked, wk_);
    const ag::Var v_all = ag::matmul(stacked, wv_);
    std::vector<ag::Var> contexts;
    Eigen::Index at = 0;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const auto len = tokens[i].rows();
        contexts.push_back(attend_rows(q, ag::slice_rows(k_all, at, len),
                                       ag::slice_rows(v_all, at, len),
                                       static_cast<Eigen::Index>(i), nullptr));
        at += len;
    }
    return norm_ffn(ag::add(f, ag::matmul(ag::concat_rows(contexts), wo_)));
}

ConcatFusion::ConcatFusion(Stream stream, const ModelConfig& config, std::uint64_t seed,
                           ParameterStore& store) {
    const std::string p = "align." + stream_name(stream) + ".concat.";
    w_ = seeded(store, p + "weight", 2 * config.joint_dim, config.joint_dim, seed);
    b_ = zeros(store, p + "bias", 1, config.joint_dim);
}

ag::Var ConcatFusion::forward(const ag::Var& f, const ag::Var& text_pooled) const {
    if (f.rows() != text_pooled.rows())
        throw ShapeError("ConcatFusion::forward: batch size mismatch");
    return ag::add_row(ag::matmul(ag::concat_cols({f, text_pooled}), w_), b_);
}

SigmaProjection::SigmaProjection(const ModelConfig& config, std::uint64_t seed,
                                 ParameterStore& store) {
    // Text pooled embeddings already live in joint_dim, so sigma is square.
    const int in = config.joint_dim;
    const int out = config.joint_dim;
    Matrix init = in == out ? Matrix(Matrix::Identity(in, out))
                            : normal_matrix(in, out, 1.0 / std::sqrt(double(in)),
                                            derive_seed(seed, "sigma.weight"));
    w_ = store.add("sigma.weight", std::move(init), ParamRole::kLearnable);
    b_ = zeros(store, "sigma.bias", 1, out);
}

ag::Var SigmaProjection::project_text(const ag::Var& text_pooled) const {
    if (text_pooled.cols() != w_.rows())
        throw ShapeError("project_text: expected width " + std::to_string(w_.rows()));
    return ag::add_row(ag::matmul(text_pooled, w_), b_);
}

RowVector SigmaProjection::project_text(const RowVector& text_pooled) const {
    return project_text(ag::constant(text_pooled)).value().row(0);
}

}  // namespace sepl
