#pragma once

#include <memory>
#include <string>
#include <vector>

#include "sepl/adapter.hpp"
#include "sepl/autograd.hpp"
#include "sepl/config.hpp"
#include "sepl/image.hpp"
#include "sepl/parameters.hpp"

namespace sepl {

// Value-level encoder outputs.
struct VisionFeature {
    RowVector pooled;  // visual_dim
    RowVector joint;   // joint_dim, projection of pooled into the shared space
};

struct TextEmbedding {
    Matrix tokens;     // sequence_len x text_hidden_dim
    RowVector pooled;  // joint_dim
};

// Graph-level encoder outputs (rows are samples).
struct VisionOutput {
    ag::Var pooled;
    ag::Var joint;
};

struct SpatialOutput {
    ag::Var tokens;  // grid*grid x visual_dim; rows sum (plus bias) to pooled
    VisionOutput vision;
    int grid = 0;
};

struct TextOutput {
    ag::Var tokens;
    ag::Var pooled;  // 1 x joint_dim
};

// Frozen dual encoder with continuous-prompt injection. Prompts enter the
// text encoder as embedding rows; special tokens are appended by the backend
// at fixed positions. Only adapter parameters may change during training.
class EncoderBackend {
public:
    virtual ~EncoderBackend() = default;

    virtual int image_height() const = 0;
    virtual int image_width() const = 0;
    virtual int image_channels() const = 0;
    virtual int visual_dim() const = 0;
    virtual int joint_dim() const = 0;
    virtual int text_hidden_dim() const = 0;
    virtual int num_special_tokens() const = 0;
    // Total prompt sequence length expected by encode_prompt.
    virtual int sequence_length() const = 0;

    // Flattens a batch of images into the N x input_dim layout the backend consumes.
    virtual Matrix images_to_rows(const std::vector<const Image*>& images) const = 0;
    virtual VisionOutput encode_images(const ag::Var& rows) const = 0;
    // Pre-pool token map for one image; throws if the backend has none.
    virtual SpatialOutput encode_image_spatial(const Image& image) const = 0;
    // Pools a (possibly detached) token map the way encode_image_spatial does.
    virtual VisionOutput pool_tokens(const ag::Var& tokens) const = 0;

    virtual ag::Var special_tokens() const = 0;  // num_special x text_hidden_dim
    virtual TextOutput encode_prompt(const ag::Var& prompt) const = 0;

    // Attaches adapters to every frozen linear map; rank 0 is a no-op.
    virtual AdapterState inject_adapters(int rank, const std::string& kind,
                                         std::uint64_t seed) = 0;
    virtual AdapterState adapter_state() const = 0;

    // Names of frozen base weights (for checksum contracts).
    virtual std::vector<std::string> base_parameter_names() const = 0;

    VisionFeature encode_image(const Image& image) const;
    TextEmbedding encode_prompt(const Matrix& prompt) const;
};

std::unique_ptr<EncoderBackend> make_backend(const ModelConfig& config, std::uint64_t seed,
                                             ParameterStore& store);

}  // namespace sepl
