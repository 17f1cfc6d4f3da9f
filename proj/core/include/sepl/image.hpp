#pragma once

#include <filesystem>
#include <vector>

namespace sepl {

// Interleaved H x W x C image with values in [0, 1].
struct Image {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<double> pixels;

    Image() = default;
    Image(int h, int w, int c, double fill = 0.0)
        : height(h), width(w), channels(c),
          pixels(static_cast<std::size_t>(h) * w * c, fill) {}

    double& at(int y, int x, int c) {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    double at(int y, int x, int c) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    std::size_t size() const { return pixels.size(); }
    bool same_shape(const Image& other) const {
        return height == other.height && width == other.width && channels == other.channels;
    }
    bool operator==(const Image&) const = default;
};

// 8-bit PNG I/O (RGB or grayscale).
Image read_png(const std::filesystem::path& path);
void write_png(const Image& image, const std::filesystem::path& path);

double mean_squared_difference(const Image& a, const Image& b);

}  // namespace sepl
