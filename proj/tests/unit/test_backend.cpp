#include <gtest/gtest.h>

#include "golden_cases.hpp"
#include "golden_file.hpp"
#include "sepl/error.hpp"
#include "sepl/toy_backend.hpp"
#include "sepl/trainer.hpp"
#include "testing.hpp"

using namespace sepl;
using testing_support::random_matrix;

namespace {

struct Fixture {
    ParameterStore store;
    std::unique_ptr<EncoderBackend> backend;
    explicit Fixture(ModelConfig config = ModelConfig::toy(), std::uint64_t seed = 7) {
        backend = make_backend(config, seed, store);
    }
};

}  // namespace

TEST(ToyBackend, Dimensions) {
    Fixture f;
    EXPECT_EQ(f.backend->visual_dim(), 64);
    EXPECT_EQ(f.backend->joint_dim(), 32);
    EXPECT_EQ(f.backend->text_hidden_dim(), 48);
    EXPECT_EQ(f.backend->sequence_length(), 16 + 1 + f.backend->num_special_tokens());
    EXPECT_EQ(f.backend->special_tokens().rows(), f.backend->num_special_tokens());
}

TEST(ToyBackend, ZeroImageGivesEmbeddingBias) {
    Fixture f;
    const auto v = f.backend->encode_image(Image(32, 32, 3, 0.0));
    EXPECT_EQ(Matrix(v.pooled), f.store.get("encoder.vision.embed.bias").value());
    Matrix joint = f.store.get("encoder.vision.embed.bias").value() *
                   f.store.get("encoder.vision.proj.weight").value();
    joint += f.store.get("encoder.vision.proj.bias").value();
    EXPECT_LT((Matrix(v.joint) - joint).norm(), 1e-12);
}

TEST(ToyBackend, GoldenImageAndPrompt) {
    SeplModel model(golden::config());
    const auto v = model.backend().encode_image(golden::test_image());
    golden::expect_matches("backend.pooled", v.pooled);
    golden::expect_matches("backend.joint", v.joint);
    golden::expect_matches("backend.prompt_pooled",
                           model.backend().encode_prompt(golden::canonical_prompt(model.backend())).pooled);
}

TEST(ToyBackend, JointIsFixedLinearFunctionOfPooled) {
    Fixture f;
    const auto& w = f.store.get("encoder.vision.proj.weight").value();
    const auto& b = f.store.get("encoder.vision.proj.bias").value();
    for (std::uint64_t s = 0; s < 3; ++s) {
        Image img(32, 32, 3);
        const Matrix r = random_matrix(1, static_cast<Eigen::Index>(img.size()), s);
        for (std::size_t i = 0; i < img.size(); ++i) img.pixels[i] = 0.5 + 0.1 * r.data()[i];
        const auto v = f.backend->encode_image(img);
        EXPECT_LT((Matrix(v.joint) - (Matrix(v.pooled) * w + b)).norm(), 1e-12);
    }
}

TEST(ToyBackend, WrongChannelsRejected) {
    Fixture f;
    EXPECT_THROW(f.backend->encode_image(Image(32, 32, 1)), ShapeError);
    EXPECT_THROW(f.backend->encode_image(Image(31, 32, 3)), ShapeError);
}

TEST(ToyBackend, ZeroPromptGivesProjectionBias) {
    Fixture f;
    const auto t = f.backend->encode_prompt(Matrix::Zero(f.backend->sequence_length(), 48));
    EXPECT_EQ(Matrix(t.pooled), f.store.get("encoder.text.proj.bias").value());
    EXPECT_EQ(t.tokens.rows(), f.backend->sequence_length());
    EXPECT_EQ(t.tokens.cols(), 48);
}

TEST(ToyBackend, PromptsDifferingInOneVectorDiffer) {
    Fixture f;
    const Matrix p = random_matrix(f.backend->sequence_length(), 48, 3);
    for (Eigen::Index row = 0; row < p.rows(); ++row) {
        Matrix q = p;
        q.row(row) += random_matrix(1, 48, 100 + static_cast<std::uint64_t>(row));
        EXPECT_NE(Matrix(f.backend->encode_prompt(p).pooled), Matrix(f.backend->encode_prompt(q).pooled));
    }
}

TEST(ToyBackend, PromptLengthMismatch) {
    Fixture f;
    EXPECT_THROW(f.backend->encode_prompt(Matrix::Zero(f.backend->sequence_length() + 1, 48)), ShapeError);
    EXPECT_THROW(f.backend->encode_prompt(Matrix::Zero(f.backend->sequence_length(), 47)), ShapeError);
}

TEST(ToyBackend, SameSeedIsBitIdentical) {
    Fixture a, b;
    const Image img = golden::test_image();
    EXPECT_EQ(Matrix(a.backend->encode_image(img).pooled), Matrix(b.backend->encode_image(img).pooled));
    EXPECT_EQ(a.store.checksum(), b.store.checksum());
    Fixture c(ModelConfig::toy(), 8);
    EXPECT_NE(a.store.checksum(), c.store.checksum());
}

TEST(ToyBackend, SpatialTokensPoolToEncoding) {
    Fixture f;
    f.backend->inject_adapters(4, "standard", 3);
    auto values = f.store.snapshot();
    for (auto& [name, m] : values)
        if (name.rfind("adapter.", 0) == 0) m = random_matrix(m.rows(), m.cols(), 5, 0.1);
    f.store.load(values);
    const Image img = golden::test_image();
    const auto spatial = f.backend->encode_image_spatial(img);
    EXPECT_EQ(spatial.tokens.rows(), 16);
    const auto v = f.backend->encode_image(img);
    EXPECT_LT((spatial.vision.pooled.value() - Matrix(v.pooled)).norm(), 1e-10);
    EXPECT_LT((spatial.vision.joint.value() - Matrix(v.joint)).norm(), 1e-10);
    EXPECT_THROW(f.backend->pool_tokens(ag::constant(Matrix::Zero(15, 64))), ShapeError);
}

TEST(Adapters, RankZeroIsNoOp) {
    Fixture f;
    const Image img = golden::test_image();
    const auto before = f.backend->encode_image(img);
    const auto state = f.backend->inject_adapters(0, "standard", 1);
    EXPECT_EQ(state.rank, 0);
    EXPECT_TRUE(state.pairs.empty());
    EXPECT_EQ(Matrix(f.backend->encode_image(img).pooled), Matrix(before.pooled));
}

TEST(Adapters, ZeroInitIsIdentity) {
    Fixture plain, adapted;
    const auto state = adapted.backend->inject_adapters(4, "standard", 1);
    EXPECT_EQ(state.rank, 4);
    ASSERT_EQ(state.pairs.size(), 4u);
    for (const auto& p : state.pairs) {
        EXPECT_EQ(p.down.cols(), 4);
        EXPECT_EQ(p.up.rows(), 4);
        EXPECT_TRUE(p.up.isZero(0.0));
        EXPECT_GT(p.down.norm(), 0.0);
    }
    for (std::uint64_t s = 0; s < 3; ++s) {
        Image img(32, 32, 3);
        const Matrix r = random_matrix(1, static_cast<Eigen::Index>(img.size()), s);
        for (std::size_t i = 0; i < img.size(); ++i) img.pixels[i] = std::clamp(0.5 + 0.2 * r.data()[i], 0.0, 1.0);
        EXPECT_EQ(Matrix(adapted.backend->encode_image(img).joint), Matrix(plain.backend->encode_image(img).joint));
    }
    const Matrix p = random_matrix(plain.backend->sequence_length(), 48, 4);
    EXPECT_EQ(Matrix(adapted.backend->encode_prompt(p).pooled), Matrix(plain.backend->encode_prompt(p).pooled));
}

TEST(Adapters, RankTooLargeRejected) {
    Fixture f;
    EXPECT_THROW(f.backend->inject_adapters(33, "standard", 1), ConfigError);
    EXPECT_THROW(f.backend->inject_adapters(-1, "standard", 1), ConfigError);
    Fixture g;
    EXPECT_THROW(g.backend->inject_adapters(4, "plugin:not-registered", 1), ConfigError);
}

TEST(Adapters, OneTrainingStepChangesOutput) {
    SeplModel model(testing_support::toy_config());
    const Image img = golden::test_image();
    const auto before = model.backend().encode_image(img);
    const auto base_sum = model.parameters().checksum(&SeplModel::is_base);
    const Dataset data = testing_support::small_toy(8, 1);
    Trainer trainer(model);
    TrainBatch batch{data.images, data.labels()};
    model.parameters().set_trainable([](const std::string& n) { return !SeplModel::is_base(n); });
    const auto report = trainer.stage2_loss(batch, 5);
    EXPECT_GT(report.total, 0.0);
    AdamOptimizer adam(model.config().train);
    adam.step(model.parameters(), model.parameters().trainable_names());
    const auto after = model.backend().encode_image(img);
    EXPECT_NE(Matrix(after.pooled), Matrix(before.pooled));
    EXPECT_EQ(model.parameters().checksum(&SeplModel::is_base), base_sum);
}

TEST(Adapters, PluginRegistry) {
    // A plug-in that scales a frozen map by a learnable scalar.
    class ScaleAdapter : public Adapter {
    public:
        ScaleAdapter(const LinearTarget& t, ParameterStore& store)
            : name_("adapter." + t.name + ".scale"),
              s_(store.add(name_, Matrix::Zero(t.in, t.out), ParamRole::kLearnable)) {}
        ag::Var apply(const ag::Var& x) const override { return ag::matmul(x, s_); }
        ag::Var apply_rows(const ag::Var& x, Eigen::Index start) const override {
            return ag::matmul(x, ag::slice_rows(s_, start, x.cols()));
        }
        std::vector<std::string> parameter_names() const override { return {name_}; }

    private:
        std::string name_;
        ag::Var s_;
    };
    register_adapter("scale", [](const LinearTarget& t, int, std::uint64_t, ParameterStore& s) {
        return std::make_unique<ScaleAdapter>(t, s);
    });
    EXPECT_TRUE(has_adapter("scale"));
    auto config = testing_support::toy_config();
    config.model.adapter = "plugin:scale";
    SeplModel model(config);
    EXPECT_TRUE(model.parameters().contains("adapter.vision.embed.scale"));
    EXPECT_EQ(model.backend().adapter_state().kind, "plugin:scale");
    SeplModel plain(testing_support::toy_config());
    EXPECT_EQ(Matrix(model.backend().encode_image(golden::test_image()).joint),
              Matrix(plain.backend().encode_image(golden::test_image()).joint));
}
