// Properties of the reference toy model (configs/toy.cfg on 600 synthetic
// videos). The trained checkpoint is shared through the build-tree cache.

#include <gtest/gtest.h>

#include <random>

#include "sepl/eval.hpp"
#include "toy_run.hpp"

using namespace sepl;

namespace {

struct Reference {
    toy_run::Recipe recipe = toy_run::reference();
    toy_run::Splits splits = toy_run::splits(recipe);
    toy_run::Result run = toy_run::trained(recipe, splits);
    std::unique_ptr<SeplModel> model = model_from_checkpoint(run.checkpoint);
};

const Reference& reference() {
    static const Reference r;
    return r;
}

// The generator's watermark: a +/- amplitude checkerboard on one grid cell,
// re-quantized to 8 bits.
Image paste_watermark(Image img, int cy, int cx, int size, double amplitude) {
    for (int y = cy; y < cy + size; ++y)
        for (int x = cx; x < cx + size; ++x)
            for (int c = 0; c < img.channels; ++c) {
                const double v = img.at(y, x, c) + ((x + y) % 2 == 0 ? amplitude : -amplitude);
                img.at(y, x, c) = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
            }
    return img;
}

}  // namespace

TEST(ToyModel, HeldOutAuc) {
    const auto& r = reference();
    EXPECT_GE(evaluate(*r.model, r.splits.test, "test").metrics.auc, 0.95);
}

TEST(ToyModel, BaseEncoderUnchangedByTraining) {
    const auto& r = reference();
    const SeplModel fresh(r.recipe.config);
    EXPECT_EQ(r.model->parameters().checksum(SeplModel::is_base),
              fresh.parameters().checksum(SeplModel::is_base));
}

TEST(ToyModel, WatermarkedScoresAboveClean) {
    const auto& r = reference();
    const auto& test = r.splits.test;
    const int size = r.recipe.data.patch_size;
    const int cells = r.recipe.data.image_size / size;
    std::mt19937_64 rng(1);
    int pairs = 0, wins = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        if (test.samples[i].label != 0) continue;
        const int cy = static_cast<int>(rng() % static_cast<unsigned>(cells)) * size;
        const int cx = static_cast<int>(rng() % static_cast<unsigned>(cells)) * size;
        const Image marked = paste_watermark(test.images[i], cy, cx, size, r.recipe.data.watermark_amplitude);
        ++pairs;
        wins += r.model->predict(marked) > r.model->predict(test.images[i]);
    }
    ASSERT_GT(pairs, 0);
    EXPECT_GE(static_cast<double>(wins) / pairs, 0.95) << wins << " / " << pairs;
}

TEST(ToyModel, SaliencyConcentratesOnPatch) {
    const auto& r = reference();
    const auto& test = r.splits.test;
    const int grid = r.recipe.config.model.spatial_grid;
    const int cell = r.recipe.config.model.image_height / grid;
    int fakes = 0, hits = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        const auto& s = test.samples[i];
        if (s.label != 1) continue;
        ASSERT_TRUE(s.patch.has_value());
        const Matrix map = saliency_map(*r.model, test.images[i]);
        double inside = 0.0, outside = 0.0;
        int n_in = 0, n_out = 0;
        for (int gy = 0; gy < grid; ++gy)
            for (int gx = 0; gx < grid; ++gx) {
                const bool in = gy * cell < s.patch->y + s.patch->height && s.patch->y < (gy + 1) * cell &&
                                gx * cell < s.patch->x + s.patch->width && s.patch->x < (gx + 1) * cell;
                (in ? inside : outside) += map(gy, gx);
                ++(in ? n_in : n_out);
            }
        ++fakes;
        hits += inside / n_in > outside / n_out;
    }
    ASSERT_GT(fakes, 0);
    EXPECT_GE(static_cast<double>(hits) / fakes, 0.8) << hits << " / " << fakes;
}

TEST(ToyModel, GaussianNoiseCurveNonIncreasing) {
    const auto& r = reference();
    const auto report = robustness_sweep(*r.model, r.splits.test, {PerturbationFamily::kGaussianNoise},
                                         {1, 2, 3, 4, 5});
    int inversions = 0;
    for (int s = 1; s < 5; ++s) {
        const double rise = report.cell("gaussian_noise", s + 1).metrics.auc -
                            report.cell("gaussian_noise", s).metrics.auc;
        if (rise > 0.0) {
            ++inversions;
            EXPECT_LE(rise, 0.01) << "severity " << s << " -> " << s + 1;
        }
    }
    EXPECT_LE(inversions, 1);
}

TEST(ToyModel, StreamsNearlyOrthogonal) {
    const auto& r = reference();
    const Matrix fa = extract_features(*r.model, r.splits.test, FeatureKind::kSpecific);
    const Matrix fb = extract_features(*r.model, r.splits.test, FeatureKind::kIrrelevant);
    double mean = 0.0;
    for (Eigen::Index i = 0; i < fa.rows(); ++i)
        mean += std::abs(fa.row(i).dot(fb.row(i)) / (fa.row(i).norm() * fb.row(i).norm()));
    mean /= static_cast<double>(fa.rows());
    EXPECT_LT(mean, 0.2);
}

TEST(ToyModel, SpecificFeaturesProbeBetterThanIrrelevant) {
    const auto& r = reference();
    const auto probe = [&](FeatureKind kind) {
        return linear_probe_accuracy(extract_features(*r.model, r.splits.train, kind), r.splits.train.labels(),
                                     extract_features(*r.model, r.splits.test, kind), r.splits.test.labels());
    };
    const double a = probe(FeatureKind::kSpecific), b = probe(FeatureKind::kIrrelevant);
    RecordProperty("probe_specific", std::to_string(a));
    RecordProperty("probe_irrelevant", std::to_string(b));
    EXPECT_GT(a, b) << "specific " << a << " irrelevant " << b;
}
