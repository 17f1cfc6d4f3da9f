#include "sepl/image.hpp"

#include <algorithm>
#include <cmath>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "sepl/error.hpp"

namespace sepl {

Image read_png(const std::filesystem::path& path) {
    cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (raw.empty()) throw DataError("cannot read image " + path.string());
    if (raw.channels() == 3) cv::cvtColor(raw, raw, cv::COLOR_BGR2RGB);
    if (raw.channels() == 4) cv::cvtColor(raw, raw, cv::COLOR_BGRA2RGB);
    if (raw.depth() != CV_8U) throw DataError("expected an 8-bit image: " + path.string());
    Image img(raw.rows, raw.cols, raw.channels());
    for (int y = 0; y < raw.rows; ++y) {
        const auto* row = raw.ptr<unsigned char>(y);
        for (int i = 0; i < raw.cols * raw.channels(); ++i)
            img.pixels[static_cast<std::size_t>(y) * raw.cols * raw.channels() + i] = row[i] / 255.0;
    }
    return img;
}

void write_png(const Image& image, const std::filesystem::path& path) {
    if (image.channels != 1 && image.channels != 3)
        throw ShapeError("write_png: expected 1 or 3 channels");
    cv::Mat out(image.height, image.width, image.channels == 3 ? CV_8UC3 : CV_8UC1);
    for (int y = 0; y < image.height; ++y) {
        auto* row = out.ptr<unsigned char>(y);
        for (int i = 0; i < image.width * image.channels; ++i) {
            const double v = image.pixels[static_cast<std::size_t>(y) * image.width * image.channels + i];
            row[i] = static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
        }
    }
    if (image.channels == 3) cv::cvtColor(out, out, cv::COLOR_RGB2BGR);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    if (!cv::imwrite(path.string(), out)) throw DataError("cannot write image " + path.string());
}

double mean_squared_difference(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw ShapeError("mean_squared_difference: shape mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.pixels[i] - b.pixels[i];
        acc += d * d;
    }
    return a.size() == 0 ? 0.0 : acc / static_cast<double>(a.size());
}

}  // namespace sepl
