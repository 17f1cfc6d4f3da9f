#pragma once

#include <memory>
#include <vector>

#include "sepl/backend.hpp"

namespace sepl {

// Deterministic seeded stand-in for a pretrained dual encoder.
//
//   vision: flatten -> linear -> pooled (visual_dim) -> linear -> joint (joint_dim)
//   text:   tokens_out = (prompt + pos) W_tok + b_tok
//           pooled     = mean(prompt) W_proj + b_proj
//
// Images are flattened patch-major (grid cells, then pixels, then channels)
// so the embedding weight splits into per-cell row blocks; the per-cell
// partial products form the token map used for saliency.
class ToyBackend final : public EncoderBackend {
public:
    static constexpr int kNumSpecial = 1;  // end-of-text token

    ToyBackend(const ModelConfig& config, std::uint64_t seed, ParameterStore& store);

    int image_height() const override { return height_; }
    int image_width() const override { return width_; }
    int image_channels() const override { return channels_; }
    int visual_dim() const override { return visual_dim_; }
    int joint_dim() const override { return joint_dim_; }
    int text_hidden_dim() const override { return text_dim_; }
    int num_special_tokens() const override { return kNumSpecial; }
    int sequence_length() const override { return seq_len_; }

    Matrix images_to_rows(const std::vector<const Image*>& images) const override;
    VisionOutput encode_images(const ag::Var& rows) const override;
    SpatialOutput encode_image_spatial(const Image& image) const override;
    VisionOutput pool_tokens(const ag::Var& tokens) const override;

    ag::Var special_tokens() const override { return eot_; }
    using EncoderBackend::encode_prompt;
    TextOutput encode_prompt(const ag::Var& prompt) const override;

    AdapterState inject_adapters(int rank, const std::string& kind,
                                 std::uint64_t seed) override;
    AdapterState adapter_state() const override;
    std::vector<std::string> base_parameter_names() const override;

private:
    ag::Var linear(const ag::Var& x, const ag::Var& w, const ag::Var& b,
                   const Adapter* adapter) const;

    int height_, width_, channels_, grid_;
    int visual_dim_, joint_dim_, text_dim_, seq_len_;
    ParameterStore* store_;
    ag::Var embed_w_, embed_b_, proj_w_, proj_b_;
    ag::Var tok_w_, tok_b_, pos_, text_w_, text_b_, eot_;
    int adapter_rank_ = 0;
    std::string adapter_kind_ = "none";
    std::unique_ptr<Adapter> embed_adapter_, proj_adapter_, tok_adapter_, text_adapter_;
};

}  // namespace sepl
