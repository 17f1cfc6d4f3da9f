#include "sepl/toy_backend.hpp"

#include <cmath>

#include "sepl/error.hpp"
#include "sepl/hash.hpp"

namespace sepl {

VisionFeature EncoderBackend::encode_image(const Image& image) const {
    const auto out = encode_images(ag::constant(images_to_rows({&image})));
    return {out.pooled.value().row(0), out.joint.value().row(0)};
}

TextEmbedding EncoderBackend::encode_prompt(const Matrix& prompt) const {
    const auto out = encode_prompt(ag::constant(prompt));
    return {out.tokens.value(), out.pooled.value().row(0)};
}

std::unique_ptr<EncoderBackend> make_backend(const ModelConfig& config, std::uint64_t seed,
                                             ParameterStore& store) {
    if (config.backend == "toy") return std::make_unique<ToyBackend>(config, seed, store);
    throw ConfigError("backend: unknown backend '" + config.backend + "'");
}

namespace {

ag::Var base_param(ParameterStore& store, const std::string& name, Eigen::Index rows,
                   Eigen::Index cols, double stddev, std::uint64_t seed) {
    return store.add(name, normal_matrix(rows, cols, stddev, derive_seed(seed, name)),
                     ParamRole::kFrozenBase);
}

}  // namespace

ToyBackend::ToyBackend(const ModelConfig& config, std::uint64_t seed, ParameterStore& store)
    : height_(config.image_height),
      width_(config.image_width),
      channels_(config.image_channels),
      grid_(config.spatial_grid),
      visual_dim_(config.visual_dim),
      joint_dim_(config.joint_dim),
      text_dim_(config.text_hidden_dim),
      seq_len_(config.context_len + 1 + kNumSpecial),
      store_(&store) {
    config.validate();
    const Eigen::Index input_dim = static_cast<Eigen::Index>(height_) * width_ * channels_;
    const auto inv_sqrt = [](double n) { return 1.0 / std::sqrt(n); };
    embed_w_ = base_param(store, "encoder.vision.embed.weight", input_dim, visual_dim_,
                          inv_sqrt(static_cast<double>(input_dim)), seed);
    embed_b_ = base_param(store, "encoder.vision.embed.bias", 1, visual_dim_, 0.1, seed);
    proj_w_ = base_param(store, "encoder.vision.proj.weight", visual_dim_, joint_dim_,
                         inv_sqrt(visual_dim_), seed);
    proj_b_ = base_param(store, "encoder.vision.proj.bias", 1, joint_dim_, 0.1, seed);
    tok_w_ = base_param(store, "encoder.text.token.weight", text_dim_, text_dim_,
                        inv_sqrt(text_dim_), seed);
    tok_b_ = base_param(store, "encoder.text.token.bias", 1, text_dim_, 0.02, seed);
    pos_ = base_param(store, "encoder.text.position", seq_len_, text_dim_, 0.02, seed);
    text_w_ = base_param(store, "encoder.text.proj.weight", text_dim_, joint_dim_,
                         inv_sqrt(text_dim_), seed);
    text_b_ = base_param(store, "encoder.text.proj.bias", 1, joint_dim_, 0.02, seed);
    eot_ = base_param(store, "encoder.text.eot", kNumSpecial, text_dim_, 0.02, seed);
}

Matrix ToyBackend::images_to_rows(const std::vector<const Image*>& images) const {
    const int ch = height_ / grid_;
    const int cw = width_ / grid_;
    Matrix rows(static_cast<Eigen::Index>(images.size()),
                static_cast<Eigen::Index>(height_) * width_ * channels_);
    for (std::size_t n = 0; n < images.size(); ++n) {
        const Image& img = *images[n];
        if (img.height != height_ || img.width != width_ || img.channels != channels_)
            throw ShapeError("toy backend expects " + std::to_string(height_) + "x" +
                             std::to_string(width_) + "x" + std::to_string(channels_) +
                             " images, got " + std::to_string(img.height) + "x" +
                             std::to_string(img.width) + "x" + std::to_string(img.channels));
        Eigen::Index col = 0;
        for (int gy = 0; gy < grid_; ++gy)
            for (int gx = 0; gx < grid_; ++gx)
                for (int y = gy * ch; y < (gy + 1) * ch; ++y)
                    for (int x = gx * cw; x < (gx + 1) * cw; ++x)
                        for (int c = 0; c < channels_; ++c)
                            rows(static_cast<Eigen::Index>(n), col++) = img.at(y, x, c);
    }
    return rows;
}

ag::Var ToyBackend::linear(const ag::Var& x, const ag::Var& w, const ag::Var& b,
                           const Adapter* adapter) const {
    ag::Var y = ag::add_row(ag::matmul(x, w), b);
    if (adapter) y = ag::add(y, adapter->apply(x));
    return y;
}

VisionOutput ToyBackend::encode_images(const ag::Var& rows) const {
    if (rows.cols() != embed_w_.rows())
        throw ShapeError("encode_images: expected rows of width " +
                         std::to_string(embed_w_.rows()));
    ag::Var pooled = linear(rows, embed_w_, embed_b_, embed_adapter_.get());
    ag::Var joint = linear(pooled, proj_w_, proj_b_, proj_adapter_.get());
    return {pooled, joint};
}

SpatialOutput ToyBackend::encode_image_spatial(const Image& image) const {
    const ag::Var row = ag::constant(images_to_rows({&image}));
    const Eigen::Index cell = row.cols() / (static_cast<Eigen::Index>(grid_) * grid_);
    std::vector<ag::Var> cells;
    for (int p = 0; p < grid_ * grid_; ++p) {
        const ag::Var x = ag::slice_cols(row, p * cell, cell);
        ag::Var t = ag::matmul(x, ag::slice_rows(embed_w_, p * cell, cell));
        if (embed_adapter_) t = ag::add(t, embed_adapter_->apply_rows(x, p * cell));
        cells.push_back(t);
    }
    SpatialOutput out;
    out.grid = grid_;
    out.tokens = ag::concat_rows(cells);
    out.vision = pool_tokens(out.tokens);
    return out;
}

VisionOutput ToyBackend::pool_tokens(const ag::Var& tokens) const {
    if (tokens.rows() != static_cast<Eigen::Index>(grid_) * grid_ || tokens.cols() != visual_dim_)
        throw ShapeError("pool_tokens: token map shape mismatch");
    VisionOutput out;
    out.pooled = ag::add(ag::sum_rows(tokens), embed_b_);
    out.joint = linear(out.pooled, proj_w_, proj_b_, proj_adapter_.get());
    return out;
}

TextOutput ToyBackend::encode_prompt(const ag::Var& prompt) const {
    if (prompt.rows() != seq_len_ || prompt.cols() != text_dim_)
        throw ShapeError("encode_prompt: expected " + std::to_string(seq_len_) + " x " +
                         std::to_string(text_dim_) + " prompt, got " +
                         std::to_string(prompt.rows()) + " x " + std::to_string(prompt.cols()));
    TextOutput out;
    out.tokens = linear(ag::add(prompt, pos_), tok_w_, tok_b_, tok_adapter_.get());
    out.pooled = linear(ag::mean_rows(prompt), text_w_, text_b_, text_adapter_.get());
    return out;
}

AdapterState ToyBackend::inject_adapters(int rank, const std::string& kind,
                                         std::uint64_t seed) {
    if (rank < 0) throw ConfigError("adapter_rank: must be >= 0");
    if (adapter_rank_ != 0) throw ConfigError("adapters already injected");
    if (rank == 0 || kind == "none") return adapter_state();
    const std::vector<LinearTarget> targets = {
        {"vision.embed", embed_w_.rows(), embed_w_.cols()},
        {"vision.proj", proj_w_.rows(), proj_w_.cols()},
        {"text.token", tok_w_.rows(), tok_w_.cols()},
        {"text.proj", text_w_.rows(), text_w_.cols()},
    };
    for (const auto& t : targets)
        if (rank > std::min(t.in, t.out))
            throw ConfigError("adapter_rank: rank " + std::to_string(rank) +
                              " exceeds the dimensions of " + t.name);
    embed_adapter_ = make_adapter(kind, targets[0], rank, seed, *store_);
    proj_adapter_ = make_adapter(kind, targets[1], rank, seed, *store_);
    tok_adapter_ = make_adapter(kind, targets[2], rank, seed, *store_);
    text_adapter_ = make_adapter(kind, targets[3], rank, seed, *store_);
    adapter_rank_ = rank;
    adapter_kind_ = kind;
    return adapter_state();
}

AdapterState ToyBackend::adapter_state() const {
    AdapterState state;
    state.rank = adapter_rank_;
    state.kind = adapter_kind_;
    for (const Adapter* a : {embed_adapter_.get(), proj_adapter_.get(), tok_adapter_.get(),
                             text_adapter_.get()}) {
        if (!a) continue;
        const auto names = a->parameter_names();
        AdapterPair pair;
        pair.target = names.front().substr(0, names.front().rfind('.'));
        if (names.size() == 2) {
            pair.down = store_->get(names[0]).value();
            pair.up = store_->get(names[1]).value();
        }
        state.pairs.push_back(std::move(pair));
    }
    return state;
}

std::vector<std::string> ToyBackend::base_parameter_names() const {
    std::vector<std::string> out;
    for (const auto& name : store_->names())
        if (name.rfind("encoder.", 0) == 0) out.push_back(name);
    return out;
}

}  // namespace sepl
