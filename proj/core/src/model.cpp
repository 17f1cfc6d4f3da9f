#include "sepl/model.hpp"

#include <cmath>

#include "sepl/error.hpp"

namespace sepl {

namespace {

std::unique_ptr<EncoderBackend> build_backend(const RunConfig& config, ParameterStore& store) {
    config.validate();
    auto backend = make_backend(config.model, static_cast<std::uint64_t>(config.model.backbone_seed),
                                store);
    if (config.model.adapter != "none" && config.model.adapter_rank > 0)
        backend->inject_adapters(config.model.adapter_rank, config.model.adapter,
                                 static_cast<std::uint64_t>(config.train.seed));
    return backend;
}

std::uint64_t run_seed(const RunConfig& c) { return static_cast<std::uint64_t>(c.train.seed); }

}  // namespace

SeplModel::SeplModel(const RunConfig& config)
    : config_(config),
      backend_(build_backend(config_, store_)),
      prompt_a_(Stream::kA, config_.model, run_seed(config_), store_),
      prompt_b_(Stream::kB, config_.model, run_seed(config_), store_),
      sigma_(config_.model, run_seed(config_), store_) {
    if (config_.model.fusion == Fusion::kAttention) {
        align_a_.emplace(Stream::kA, config_.model, run_seed(config_), store_);
        align_b_.emplace(Stream::kB, config_.model, run_seed(config_), store_);
    } else {
        concat_a_.emplace(Stream::kA, config_.model, run_seed(config_), store_);
        concat_b_.emplace(Stream::kB, config_.model, run_seed(config_), store_);
    }
    // Zero head: an untrained model scores every image 0.5.
    head_w_ = store_.add("head.weight", Matrix::Zero(config_.model.joint_dim, 2),
                         ParamRole::kLearnable);
    head_b_ = store_.add("head.bias", Matrix::Zero(1, 2), ParamRole::kLearnable);
    store_.set_trainable([](const std::string&) { return false; });
}

ag::Var SeplModel::align(Stream s, const ag::Var& f_joint, const StreamBatch& prompts) const {
    if (config_.model.fusion == Fusion::kAttention)
        return (s == Stream::kA ? *align_a_ : *align_b_).forward(f_joint, prompts.tokens);
    return (s == Stream::kA ? *concat_a_ : *concat_b_).forward(f_joint, prompts.pooled);
}

ag::Var SeplModel::classify(const ag::Var& f_a) const {
    return ag::add_row(ag::matmul(f_a, head_w_), head_b_);
}

ForwardPass SeplModel::forward(const ag::Var& image_rows, ForwardMode mode) const {
    ForwardPass out;
    out.vision = backend_->encode_images(image_rows);
    if (mode != ForwardMode::kInference)
        out.b = prompt_b_.encode_batch(out.vision.pooled, *backend_);
    if (mode == ForwardMode::kPretrain) return out;

    out.a = prompt_a_.encode_batch(out.vision.pooled, *backend_);
    out.f_a = align(Stream::kA, out.vision.joint, out.a);
    out.logits = classify(out.f_a);
    if (mode == ForwardMode::kFull) out.f_b = align(Stream::kB, out.vision.joint, out.b);
    return out;
}

std::vector<double> SeplModel::predict(const std::vector<const Image*>& images) const {
    constexpr std::size_t kChunk = 64;
    std::vector<double> scores;
    scores.reserve(images.size());
    for (std::size_t start = 0; start < images.size(); start += kChunk) {
        const std::vector<const Image*> chunk(
            images.begin() + static_cast<std::ptrdiff_t>(start),
            images.begin() + static_cast<std::ptrdiff_t>(std::min(images.size(), start + kChunk)));
        const auto pass =
            forward(ag::constant(backend_->images_to_rows(chunk)), ForwardMode::kInference);
        const Matrix& logits = pass.logits.value();
        for (Eigen::Index i = 0; i < logits.rows(); ++i) {
            // softmax(logits)[fake] = sigmoid(l1 - l0)
            scores.push_back(1.0 / (1.0 + std::exp(logits(i, 0) - logits(i, 1))));
        }
    }
    return scores;
}

double SeplModel::predict(const Image& image) const { return predict({&image}).front(); }

bool SeplModel::is_stage1_trainable(const std::string& name) {
    return name.rfind("prompt.B.meta.", 0) == 0 || name == "prompt.B.context";
}

bool SeplModel::is_stream_a(const std::string& name) {
    return name.rfind("prompt.A.", 0) == 0 || name.rfind("align.A.", 0) == 0;
}

bool SeplModel::is_base(const std::string& name) { return name.rfind("encoder.", 0) == 0; }

}  // namespace sepl
