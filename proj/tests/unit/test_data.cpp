#include <gtest/gtest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "sepl/data.hpp"
#include "sepl/error.hpp"
#include "sepl/eval.hpp"
#include "testing.hpp"

using namespace sepl;

namespace {

const std::filesystem::path kFixture = std::filesystem::path(SEPL_TEST_DATA_DIR) / "fixtures" / "toy10";

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::string data_error(const std::string& manifest) {
    try {
        parse_manifest(manifest, ".");
    } catch (const DataError& e) {
        return e.what();
    }
    return {};
}

Image fixture_image() { return read_png(kFixture / "images" / "vid0001_f0.png"); }

// Mean checkerboard response per 8x8 cell (16 features).
Matrix checker_features(const Dataset& d) {
    Matrix out(static_cast<Eigen::Index>(d.size()), 16);
    for (std::size_t i = 0; i < d.size(); ++i) {
        const Image& img = d.images[i];
        for (int cell = 0; cell < 16; ++cell) {
            double s = 0.0;
            for (int y = cell / 4 * 8; y < cell / 4 * 8 + 8; ++y)
                for (int x = cell % 4 * 8; x < cell % 4 * 8 + 8; ++x)
                    for (int c = 0; c < 3; ++c) s += ((x + y) % 2 == 0 ? 1.0 : -1.0) * img.at(y, x, c);
            out(static_cast<Eigen::Index>(i), cell) = s / 192.0;
        }
    }
    return out;
}

}  // namespace

// ─── Manifest ──────────────────────────────────────────────────────────────

TEST(Manifest, EmptyFileWarns) {
    const Manifest m = parse_manifest("", ".");
    EXPECT_TRUE(m.samples.empty());
    ASSERT_EQ(m.warnings.size(), 1u);
}

TEST(Manifest, MissingFieldIsNamed) {
    const std::string msg = data_error(
        "{\"path\":\"a.png\",\"label\":0,\"video_id\":\"v\",\"method\":\"m\",\"split\":\"train\"}\n"
        "{\"path\":\"b.png\",\"label\":0,\"method\":\"m\",\"split\":\"train\"}\n");
    EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("video_id"), std::string::npos) << msg;
}

TEST(Manifest, MalformedRecordsReportLine) {
    const std::string ok = "{\"path\":\"a.png\",\"label\":1,\"video_id\":\"v\",\"method\":\"m\",\"split\":\"test\"}\n";
    EXPECT_NE(data_error(ok + "{not json\n").find("line 2"), std::string::npos);
    EXPECT_NE(data_error(ok + ok).find("duplicate path"), std::string::npos);
    EXPECT_NE(data_error("{\"path\":\"a.png\",\"label\":2,\"video_id\":\"v\",\"method\":\"m\",\"split\":\"test\"}").find("label"), std::string::npos);
    EXPECT_NE(data_error("{\"path\":\"a.png\",\"label\":1,\"video_id\":\"\",\"method\":\"m\",\"split\":\"test\"}").find("video_id"), std::string::npos);
    EXPECT_NE(data_error("{\"path\":\"a.png\",\"label\":1,\"video_id\":\"v\",\"method\":\"m\",\"split\":\"dev\"}").find("split"), std::string::npos);
    EXPECT_NE(data_error("{\"path\":\"a.png\",\"label\":1,\"video_id\":\"v\",\"method\":\"m\",\"split\":\"test\",\"x\":1}").find("'x'"), std::string::npos);
    EXPECT_NE(data_error("[1,2]").find("line 1"), std::string::npos);
    EXPECT_THROW(load_manifest("/nonexistent/manifest.jsonl"), DataError);
}

TEST(Manifest, FixtureRoundTrip) {
    const Manifest m = load_manifest(kFixture / "manifest.jsonl");
    ASSERT_EQ(m.samples.size(), 10u);
    EXPECT_TRUE(m.warnings.empty());
    std::size_t total = 0;
    for (const auto& [split, n] : m.split_counts) total += n;
    EXPECT_EQ(total, 10u);
    std::istringstream lines(read_file(kFixture / "manifest.jsonl"));
    std::string line;
    for (const auto& s : m.samples) {
        std::getline(lines, line);
        EXPECT_EQ(manifest_record(s, kFixture), line);
        EXPECT_TRUE(std::filesystem::exists(s.path));
        EXPECT_EQ(s.method, s.label == 1 ? "checkerboard" : "pristine");
        EXPECT_EQ(s.patch.has_value(), s.label == 1);
    }
    const auto dir = testing_support::temp_dir("manifest");
    write_manifest(m.samples, dir / "m.jsonl");
    const Manifest again = load_manifest(dir / "m.jsonl");
    EXPECT_EQ(again.samples, m.samples);
}

TEST(Manifest, LoadDatasetDecodesImages) {
    const Manifest m = load_manifest(kFixture / "manifest.jsonl");
    const Dataset all = load_dataset(m);
    EXPECT_EQ(all.size(), 10u);
    EXPECT_EQ(all.images[0].height, 32);
    const Dataset test = load_dataset(m, Split::kTest);
    EXPECT_EQ(test.size(), m.split_counts.at(Split::kTest));
    for (const auto& s : test.samples) EXPECT_EQ(s.split, Split::kTest);
    EXPECT_EQ(filter_split(all, Split::kTest).samples, test.samples);
}

// ─── Toy dataset ───────────────────────────────────────────────────────────

TEST(ToyDataset, BalancedAndDisjoint) {
    ToyDatasetOptions o;
    o.n_videos = 40;
    const Dataset d = generate_toy_dataset(o);
    EXPECT_EQ(d.size(), 160u);
    const auto y = d.labels();
    EXPECT_EQ(std::count(y.begin(), y.end(), 1), 80);
    std::map<std::string, std::set<Split>> splits;
    std::map<std::string, std::set<int>> labels;
    for (const auto& s : d.samples) {
        splits[s.video_id].insert(s.split);
        labels[s.video_id].insert(s.label);
    }
    EXPECT_EQ(splits.size(), 40u);
    for (const auto& [v, set] : splits) EXPECT_EQ(set.size(), 1u) << v;
    for (const auto& [v, set] : labels) EXPECT_EQ(set.size(), 1u) << v;
    for (const Split s : {Split::kTrain, Split::kVal, Split::kTest}) {
        const auto ys = filter_split(d, s).labels();
        EXPECT_EQ(2 * std::count(ys.begin(), ys.end(), 1), static_cast<long>(ys.size()));
    }
    for (const auto& img : d.images) {
        EXPECT_EQ(img.height, 32);
        EXPECT_EQ(img.channels, 3);
        for (double v : img.pixels) {
            ASSERT_GE(v, 0.0);
            ASSERT_LE(v, 1.0);
        }
    }
}

TEST(ToyDataset, Errors) {
    ToyDatasetOptions o;
    o.n_videos = 7;
    EXPECT_THROW(generate_toy_dataset(o), DataError);
    o.n_videos = 2;
    EXPECT_THROW(generate_toy_dataset(o), DataError);
}

TEST(ToyDataset, RerunIsByteIdentical) {
    ToyDatasetOptions o;
    o.n_videos = 6;
    o.frames_per_video = 2;
    const auto a = testing_support::temp_dir("toy_a"), b = testing_support::temp_dir("toy_b");
    const Dataset da = make_toy_dataset(o, a);
    make_toy_dataset(o, b);
    EXPECT_EQ(read_file(a / "manifest.jsonl"), read_file(b / "manifest.jsonl"));
    EXPECT_EQ(read_file(a / "images" / "vid0003_f1.png"), read_file(b / "images" / "vid0003_f1.png"));
    // What is written equals what is generated in memory.
    const Dataset loaded = load_dataset(load_manifest(a / "manifest.jsonl"));
    EXPECT_EQ(loaded.images, da.images);
}

TEST(ToyDataset, WatermarkIsLinearlyLearnable) {
    ToyDatasetOptions o;
    o.n_videos = 200;
    o.frames_per_video = 2;
    const Dataset d = generate_toy_dataset(o);
    const Dataset train = filter_split(d, Split::kTrain), test = filter_split(d, Split::kTest);
    const Matrix xtr = checker_features(train), xte = checker_features(test);
    EXPECT_GT(linear_probe_accuracy(xtr, train.labels(), xtr, train.labels()), 0.9);
    EXPECT_GT(linear_probe_accuracy(xtr, train.labels(), xte, test.labels()), 0.9);
}

TEST(ToyDataset, ShuffledLabelsKeepVideosConsistent) {
    ToyDatasetOptions o;
    o.n_videos = 40;
    const Dataset d = generate_toy_dataset(o);
    const Dataset s = shuffle_labels_by_video(d, 1);
    std::map<std::string, std::set<int>> labels;
    for (const auto& x : s.samples) labels[x.video_id].insert(x.label);
    for (const auto& [v, set] : labels) EXPECT_EQ(set.size(), 1u);
    const auto y0 = d.labels(), y1 = s.labels();
    EXPECT_EQ(std::count(y0.begin(), y0.end(), 1), std::count(y1.begin(), y1.end(), 1));
    EXPECT_NE(y0, y1);
    EXPECT_EQ(s.images, d.images);
}

// ─── Augmentation ──────────────────────────────────────────────────────────

TEST(Augment, SeededAndPure) {
    const Image img = fixture_image();
    EXPECT_EQ(augment(img, 11), augment(img, 11));
    bool any_diff = false;
    for (std::uint64_t s = 0; s < 8; ++s) {
        const Image out = augment(img, s);
        EXPECT_TRUE(out.same_shape(img));
        for (double v : out.pixels) {
            ASSERT_GE(v, 0.0);
            ASSERT_LE(v, 1.0);
        }
        any_diff |= out != img;
    }
    EXPECT_TRUE(any_diff);
}

TEST(Augment, DisabledIsIdentityAndFlipMirrors) {
    const Image img = fixture_image();
    for (std::uint64_t s = 0; s < 5; ++s) EXPECT_EQ(augment(img, s, AugmentOptions::disabled()), img);
    const Image flipped = augment(img, 3, AugmentOptions::flip_only());
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c)
                ASSERT_EQ(flipped.at(y, x, c), img.at(y, img.width - 1 - x, c));
}

TEST(Augment, RejectsOutOfRange) {
    Image img(4, 4, 3, 1.5);
    EXPECT_THROW(augment(img, 1), DataError);
}

// ─── Perturbations ─────────────────────────────────────────────────────────

TEST(Perturb, NoiseSeverityOrdering) {
    const Image img = fixture_image();
    PerturbationSpec lo{PerturbationFamily::kGaussianNoise, 1, 5}, hi{PerturbationFamily::kGaussianNoise, 5, 5};
    EXPECT_GT(mean_squared_difference(perturb(img, hi), img), mean_squared_difference(perturb(img, lo), img));
}

TEST(Perturb, EveryFamilyMonotoneOnFixtures) {
    const Dataset d = load_dataset(load_manifest(kFixture / "manifest.jsonl"));
    for (const auto family : all_families()) {
        for (std::size_t i = 0; i < d.size(); ++i) {
            double prev = 0.0;
            for (int s = 1; s <= 5; ++s) {
                const Image out = perturb(d.images[i], {family, s, 40 + i});
                EXPECT_TRUE(out.same_shape(d.images[i]));
                const double mse = mean_squared_difference(out, d.images[i]);
                EXPECT_GE(mse, prev) << to_string(family) << " severity " << s << " image " << i;
                prev = mse;
            }
        }
    }
}

TEST(Perturb, BlockMaskFractionMatchesTable) {
    const Image img = fixture_image();
    const auto& table = SeverityTable::builtin();
    for (int s = 1; s <= 5; ++s) {
        const Image out = perturb(img, {PerturbationFamily::kBlockWise, s, 9});
        std::size_t masked = 0;
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) {
                bool zero = true;
                for (int c = 0; c < 3; ++c) zero &= out.at(y, x, c) == 0.0;
                masked += zero;
            }
        const double blocks = 64.0;  // (32 / 4)^2
        const double expected = std::round(table.block_fraction[static_cast<std::size_t>(s - 1)] * blocks) * 16.0;
        EXPECT_EQ(static_cast<double>(masked), expected) << "severity " << s;
    }
}

TEST(Perturb, JpegIsIdempotentAtFixedQuality) {
    const Dataset d = load_dataset(load_manifest(kFixture / "manifest.jsonl"));
    for (const auto& img : d.images)
        for (int q : {90, 50, 10}) {
            const Image once = jpeg_roundtrip(img, q);
            const Image twice = jpeg_roundtrip(once, q);
            EXPECT_LT(std::abs(mean_squared_difference(twice, img) - mean_squared_difference(once, img)), 1e-4);
            EXPECT_LT(mean_squared_difference(twice, once), 1e-4);
        }
}

TEST(Perturb, DeterministicAndValidated) {
    const Image img = fixture_image();
    for (const auto family : all_families()) {
        EXPECT_EQ(perturb(img, {family, 3, 1}), perturb(img, {family, 3, 1}));
        EXPECT_EQ(parse_family(to_string(family)), family);
    }
    EXPECT_EQ(all_families().size(), 6u);
    EXPECT_THROW(perturb(img, {PerturbationFamily::kGaussianBlur, 0, 1}), DataError);
    EXPECT_THROW(perturb(img, {PerturbationFamily::kGaussianBlur, 6, 1}), DataError);
    EXPECT_THROW(parse_family("motion_blur"), DataError);
    EXPECT_THROW(jpeg_roundtrip(img, 0), DataError);
}

TEST(SeverityTable, ShippedFileMatchesBuiltin) {
    const auto path = std::filesystem::path(SEPL_SOURCE_DIR) / "core" / "data" / "severity_table.json";
    EXPECT_EQ(SeverityTable::load(path), SeverityTable::builtin());
    EXPECT_EQ(SeverityTable::from_json_text(SeverityTable::builtin().to_json_text()), SeverityTable::builtin());
    EXPECT_THROW(SeverityTable::from_json_text("{\"version\": 2}"), DataError);
    EXPECT_THROW(SeverityTable::from_json_text("nonsense"), DataError);
}

TEST(Images, PngRoundTripIsExactForQuantizedImages) {
    const Image img = fixture_image();
    const auto dir = testing_support::temp_dir("png");
    write_png(img, dir / "x.png");
    EXPECT_EQ(read_png(dir / "x.png"), img);
    EXPECT_THROW(read_png(dir / "missing.png"), DataError);
}
