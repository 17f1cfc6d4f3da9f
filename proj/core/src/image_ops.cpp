#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <random>
#include <sstream>

#include "sepl/data.hpp"
#include "sepl/error.hpp"
#include "sepl/hash.hpp"

namespace sepl {

namespace {

cv::Mat to_mat(const Image& img) {
    cv::Mat m(img.height, img.width, CV_64FC(img.channels));
    std::copy(img.pixels.begin(), img.pixels.end(), m.ptr<double>(0));
    return m;
}

Image from_mat(const cv::Mat& m) {
    cv::Mat src = m.isContinuous() ? m : m.clone();
    Image img(src.rows, src.cols, src.channels());
    const double* p = src.ptr<double>(0);
    std::copy(p, p + img.size(), img.pixels.begin());
    return img;
}

void clip(Image& img) {
    for (double& v : img.pixels) v = std::clamp(v, 0.0, 1.0);
}

void check_range(const Image& img, const char* who) {
    for (double v : img.pixels)
        if (!(v >= 0.0 && v <= 1.0))
            throw DataError(std::string(who) + ": pixel values must lie in [0, 1]");
}

Image flip_horizontal(const Image& in) {
    Image out(in.height, in.width, in.channels);
    for (int y = 0; y < in.height; ++y)
        for (int x = 0; x < in.width; ++x)
            for (int c = 0; c < in.channels; ++c) out.at(y, in.width - 1 - x, c) = in.at(y, x, c);
    return out;
}

Image rotate(const Image& in, double degrees) {
    const cv::Point2f center(static_cast<float>(in.width - 1) / 2.0f,
                             static_cast<float>(in.height - 1) / 2.0f);
    const cv::Mat rot = cv::getRotationMatrix2D(center, degrees, 1.0);
    cv::Mat out;
    cv::warpAffine(to_mat(in), out, rot, cv::Size(in.width, in.height), cv::INTER_LINEAR,
                   cv::BORDER_REFLECT_101);
    return from_mat(out);
}

}  // namespace

Image gaussian_blur(const Image& image, double sigma) {
    if (sigma <= 0) return image;
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    cv::Mat out;
    cv::GaussianBlur(to_mat(image), out, cv::Size(2 * radius + 1, 2 * radius + 1), sigma, sigma,
                     cv::BORDER_REFLECT_101);
    return from_mat(out);
}

Image jpeg_roundtrip(const Image& image, int quality) {
    if (quality < 1 || quality > 100) throw DataError("jpeg quality must lie in [1, 100]");
    if (image.channels != 1 && image.channels != 3)
        throw ShapeError("jpeg_roundtrip: expected 1 or 3 channels");
    cv::Mat bytes = cv::Mat(image.height, image.width, image.channels == 3 ? CV_8UC3 : CV_8UC1);
    to_mat(image).convertTo(bytes, bytes.type(), 255.0);
    if (image.channels == 3) cv::cvtColor(bytes, bytes, cv::COLOR_RGB2BGR);
    std::vector<unsigned char> buffer;
    if (!cv::imencode(".jpg", bytes, buffer, {cv::IMWRITE_JPEG_QUALITY, quality}))
        throw DataError("jpeg encode failed");
    const cv::Mat decoded =
        cv::imdecode(buffer, image.channels == 3 ? cv::IMREAD_COLOR : cv::IMREAD_GRAYSCALE);
    if (decoded.empty()) throw DataError("jpeg decode failed");
    cv::Mat rgb = decoded;
    if (image.channels == 3) cv::cvtColor(decoded, rgb, cv::COLOR_BGR2RGB);
    cv::Mat out;
    rgb.convertTo(out, CV_64F, 1.0 / 255.0);
    return from_mat(out.reshape(image.channels));
}

// ─── Augmentation ──────────────────────────────────────────────────────────

AugmentOptions AugmentOptions::disabled() {
    AugmentOptions o;
    o.p_flip = o.p_rotate = o.p_blur = o.p_color = 0.0;
    return o;
}

AugmentOptions AugmentOptions::flip_only() {
    AugmentOptions o = disabled();
    o.p_flip = 1.0;
    return o;
}

Image augment(const Image& image, std::uint64_t seed, const AugmentOptions& o) {
    check_range(image, "augment");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    // Draw every coin and parameter up front so each family's randomness is
    // independent of which other families fire.
    const bool do_flip = u01(rng) < o.p_flip;
    const bool do_rotate = u01(rng) < o.p_rotate;
    const bool do_blur = u01(rng) < o.p_blur;
    const bool do_color = u01(rng) < o.p_color;
    const double angle = (2.0 * u01(rng) - 1.0) * o.max_rotate_degrees;
    const double sigma = 0.1 + u01(rng) * std::max(0.0, o.max_blur_sigma - 0.1);
    const double brightness = (2.0 * u01(rng) - 1.0) * o.max_brightness;
    const double contrast = 1.0 + (2.0 * u01(rng) - 1.0) * o.max_contrast;

    Image out = image;
    if (do_flip) out = flip_horizontal(out);
    if (do_rotate) out = rotate(out, angle);
    if (do_blur) out = gaussian_blur(out, sigma);
    if (do_color)
        for (double& v : out.pixels) v = (v - 0.5) * contrast + 0.5 + brightness;
    clip(out);
    return out;
}

// ─── Perturbations ─────────────────────────────────────────────────────────

std::string to_string(PerturbationFamily f) {
    switch (f) {
        case PerturbationFamily::kBlockWise: return "block_wise";
        case PerturbationFamily::kColorSaturation: return "color_saturation";
        case PerturbationFamily::kColorContrast: return "color_contrast";
        case PerturbationFamily::kGaussianNoise: return "gaussian_noise";
        case PerturbationFamily::kGaussianBlur: return "gaussian_blur";
        case PerturbationFamily::kJpegCompression: return "jpeg_compression";
    }
    return "unknown";
}

const std::vector<PerturbationFamily>& all_families() {
    static const std::vector<PerturbationFamily> families = {
        PerturbationFamily::kBlockWise,     PerturbationFamily::kColorSaturation,
        PerturbationFamily::kColorContrast, PerturbationFamily::kGaussianNoise,
        PerturbationFamily::kGaussianBlur,  PerturbationFamily::kJpegCompression,
    };
    return families;
}

PerturbationFamily parse_family(const std::string& name) {
    for (auto f : all_families())
        if (to_string(f) == name) return f;
    throw DataError("unknown perturbation family '" + name + "'");
}

const SeverityTable& SeverityTable::builtin() {
    static const SeverityTable table = [] {
        SeverityTable t;
        t.block_size = 4;
        t.block_fraction = {0.05, 0.10, 0.20, 0.30, 0.40};
        t.saturation_factor = {0.8, 0.6, 0.4, 0.2, 0.0};
        t.contrast_factor = {0.85, 0.7, 0.55, 0.4, 0.25};
        t.noise_sigma = {0.04, 0.08, 0.12, 0.16, 0.20};
        t.blur_sigma = {0.5, 1.0, 1.5, 2.0, 2.5};
        t.jpeg_quality = {90, 70, 50, 30, 10};
        return t;
    }();
    return table;
}

std::string SeverityTable::to_json_text() const {
    nlohmann::ordered_json j;
    j["version"] = 1;
    j["block_wise"] = {{"block_size", block_size}, {"mask_fraction", block_fraction}};
    j["color_saturation"] = {{"factor", saturation_factor}};
    j["color_contrast"] = {{"factor", contrast_factor}};
    j["gaussian_noise"] = {{"sigma", noise_sigma}};
    j["gaussian_blur"] = {{"sigma", blur_sigma}};
    j["jpeg_compression"] = {{"quality", jpeg_quality}};
    return j.dump(2) + "\n";
}

SeverityTable SeverityTable::from_json_text(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        if (j.at("version").get<int>() != 1) throw DataError("severity table: unsupported version");
        SeverityTable t;
        t.block_size = j.at("block_wise").at("block_size").get<int>();
        t.block_fraction = j.at("block_wise").at("mask_fraction").get<std::array<double, 5>>();
        t.saturation_factor = j.at("color_saturation").at("factor").get<std::array<double, 5>>();
        t.contrast_factor = j.at("color_contrast").at("factor").get<std::array<double, 5>>();
        t.noise_sigma = j.at("gaussian_noise").at("sigma").get<std::array<double, 5>>();
        t.blur_sigma = j.at("gaussian_blur").at("sigma").get<std::array<double, 5>>();
        t.jpeg_quality = j.at("jpeg_compression").at("quality").get<std::array<int, 5>>();
        if (t.block_size < 1) throw DataError("severity table: block_size must be >= 1");
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("severity table: ") + e.what());
    }
}

SeverityTable SeverityTable::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open severity table " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return from_json_text(buffer.str());
}

Image perturb(const Image& image, const PerturbationSpec& spec, const SeverityTable& table) {
    if (spec.severity < 1 || spec.severity > 5)
        throw DataError("perturb: severity must lie in [1, 5], got " +
                        std::to_string(spec.severity));
    check_range(image, "perturb");
    const auto s = static_cast<std::size_t>(spec.severity - 1);
    Image out = image;
    switch (spec.family) {
        case PerturbationFamily::kBlockWise: {
            const int b = table.block_size;
            const int by = (image.height + b - 1) / b;
            const int bx = (image.width + b - 1) / b;
            std::vector<int> blocks(static_cast<std::size_t>(by * bx));
            std::iota(blocks.begin(), blocks.end(), 0);
            std::mt19937_64 rng(spec.seed);
            std::shuffle(blocks.begin(), blocks.end(), rng);
            const auto n_mask = static_cast<std::size_t>(
                std::lround(table.block_fraction[s] * static_cast<double>(blocks.size())));
            for (std::size_t k = 0; k < n_mask; ++k) {
                const int y0 = blocks[k] / bx * b;
                const int x0 = blocks[k] % bx * b;
                for (int y = y0; y < std::min(y0 + b, image.height); ++y)
                    for (int x = x0; x < std::min(x0 + b, image.width); ++x)
                        for (int c = 0; c < image.channels; ++c) out.at(y, x, c) = 0.0;
            }
            break;
        }
        case PerturbationFamily::kColorSaturation: {
            if (image.channels != 3) throw ShapeError("color_saturation needs 3 channels");
            const double f = table.saturation_factor[s];
            for (int y = 0; y < image.height; ++y)
                for (int x = 0; x < image.width; ++x) {
                    const double gray = 0.299 * image.at(y, x, 0) + 0.587 * image.at(y, x, 1) +
                                        0.114 * image.at(y, x, 2);
                    for (int c = 0; c < 3; ++c)
                        out.at(y, x, c) = gray + f * (image.at(y, x, c) - gray);
                }
            break;
        }
        case PerturbationFamily::kColorContrast: {
            const double mean =
                std::accumulate(image.pixels.begin(), image.pixels.end(), 0.0) /
                static_cast<double>(image.size());
            const double f = table.contrast_factor[s];
            for (double& v : out.pixels) v = mean + f * (v - mean);
            break;
        }
        case PerturbationFamily::kGaussianNoise: {
            std::mt19937_64 rng(spec.seed);
            std::normal_distribution<double> normal(0.0, 1.0);
            const double sigma = table.noise_sigma[s];
            for (double& v : out.pixels) v += sigma * normal(rng);
            break;
        }
        case PerturbationFamily::kGaussianBlur:
            out = gaussian_blur(image, table.blur_sigma[s]);
            break;
        case PerturbationFamily::kJpegCompression:
            out = jpeg_roundtrip(image, table.jpeg_quality[s]);
            break;
    }
    clip(out);
    return out;
}

}  // namespace sepl
