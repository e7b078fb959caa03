#include "kgcnn/imgcore.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

namespace kgcnn::img {

ImageTensor::ImageTensor(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
    if (height < 0 || width < 0 || channels < 1) {
        throw std::invalid_argument(
            fmt::format("invalid image shape {}x{}x{}", height, width, channels));
    }
    data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

ImageTensor::ImageTensor(int height, int width, int channels, std::vector<double> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
    if (height < 0 || width < 0 || channels < 1 ||
        data_.size() != static_cast<std::size_t>(height) * width * channels) {
        throw std::invalid_argument(fmt::format(
            "data length {} does not match shape {}x{}x{}", data_.size(), height, width,
            channels));
    }
}

ImageTensor ImageTensor::channel(int c) const {
    if (c < 0 || c >= channels_) {
        throw std::out_of_range(fmt::format("channel {} out of range", c));
    }
    ImageTensor plane(height_, width_, 1);
    for (int y = 0; y < height_; ++y) {
        for (int x = 0; x < width_; ++x) {
            plane.at(y, x) = at(y, x, c);
        }
    }
    return plane;
}

void ImageTensor::set_channel(int c, const ImageTensor& plane) {
    if (c < 0 || c >= channels_ || plane.height() != height_ || plane.width() != width_ ||
        plane.channels() != 1) {
        throw std::invalid_argument("set_channel: plane shape mismatch");
    }
    for (int y = 0; y < height_; ++y) {
        for (int x = 0; x < width_; ++x) {
            at(y, x, c) = plane.at(y, x);
        }
    }
}

ImageTensor ImageTensor::crop(int row, int col, int height, int width) const {
    if (row < 0 || col < 0 || height < 0 || width < 0 || row + height > height_ ||
        col + width > width_) {
        throw std::out_of_range(fmt::format("crop {}x{} at ({}, {}) outside {}x{} image",
                                            height, width, row, col, height_, width_));
    }
    ImageTensor out(height, width, channels_);
    const auto row_len = static_cast<std::size_t>(width) * channels_;
    for (int y = 0; y < height; ++y) {
        const auto src = data_.begin() + static_cast<std::ptrdiff_t>(index(row + y, col, 0));
        std::copy(src, src + static_cast<std::ptrdiff_t>(row_len),
                  out.data_.begin() + static_cast<std::ptrdiff_t>(y * row_len));
    }
    return out;
}

namespace {

template <typename Op>
ImageTensor zip(const ImageTensor& a, const ImageTensor& b, Op op) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(fmt::format("shape mismatch {}x{}x{} vs {}x{}x{}",
                                                a.height(), a.width(), a.channels(),
                                                b.height(), b.width(), b.channels()));
    }
    ImageTensor out(a.height(), a.width(), a.channels());
    auto o = out.data();
    auto x = a.data();
    auto y = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) {
        o[i] = op(x[i], y[i]);
    }
    return out;
}

}  // namespace

ImageTensor operator+(const ImageTensor& a, const ImageTensor& b) {
    return zip(a, b, [](double u, double v) { return u + v; });
}

ImageTensor operator-(const ImageTensor& a, const ImageTensor& b) {
    return zip(a, b, [](double u, double v) { return u - v; });
}

ImageTensor clamp01(ImageTensor img) {
    for (double& v : img.data()) {
        v = std::clamp(v, 0.0, 1.0);
    }
    return img;
}

unsigned char quantize_byte(double value) {
    return static_cast<unsigned char>(std::lround(std::clamp(value, 0.0, 1.0) * 255.0));
}

ImageTensor quantize(const ImageTensor& img) {
    ImageTensor out = img;
    for (double& v : out.data()) {
        v = quantize_byte(v) / 255.0;
    }
    return out;
}

// BT.601 full-range, zero-centered chroma.
namespace {
constexpr double kR = 0.299;
constexpr double kG = 0.587;
constexpr double kB = 0.114;
constexpr double kUScale = 0.5 / (1.0 - kB);
constexpr double kVScale = 0.5 / (1.0 - kR);

void require_rgb(const ImageTensor& img, const char* what) {
    if (img.channels() != 3) {
        throw std::invalid_argument(
            fmt::format("{}: expected 3 channels, got {}", what, img.channels()));
    }
}
}  // namespace

ImageTensor rgb_to_yuv(const ImageTensor& rgb) {
    require_rgb(rgb, "rgb_to_yuv");
    ImageTensor out(rgb.height(), rgb.width(), 3);
    for (int y = 0; y < rgb.height(); ++y) {
        for (int x = 0; x < rgb.width(); ++x) {
            const double r = rgb.at(y, x, 0);
            const double g = rgb.at(y, x, 1);
            const double b = rgb.at(y, x, 2);
            const double luma = kR * r + kG * g + kB * b;
            out.at(y, x, 0) = luma;
            out.at(y, x, 1) = kUScale * (b - luma);
            out.at(y, x, 2) = kVScale * (r - luma);
        }
    }
    return out;
}

ImageTensor yuv_to_rgb(const ImageTensor& yuv) {
    require_rgb(yuv, "yuv_to_rgb");
    ImageTensor out(yuv.height(), yuv.width(), 3);
    for (int y = 0; y < yuv.height(); ++y) {
        for (int x = 0; x < yuv.width(); ++x) {
            const double luma = yuv.at(y, x, 0);
            const double r = luma + yuv.at(y, x, 2) / kVScale;
            const double b = luma + yuv.at(y, x, 1) / kUScale;
            const double g = (luma - kR * r - kB * b) / kG;
            out.at(y, x, 0) = r;
            out.at(y, x, 1) = g;
            out.at(y, x, 2) = b;
        }
    }
    return out;
}

ImageTensor luminance(const ImageTensor& img) {
    if (img.channels() == 1) {
        return img;
    }
    require_rgb(img, "luminance");
    ImageTensor out(img.height(), img.width(), 1);
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            out.at(y, x) = kR * img.at(y, x, 0) + kG * img.at(y, x, 1) + kB * img.at(y, x, 2);
        }
    }
    return out;
}

std::vector<int> patch_origins(int extent, int size, int stride) {
    if (size <= 0 || stride <= 0) {
        throw std::invalid_argument("patch size and stride must be positive");
    }
    if (extent < size) {
        throw std::invalid_argument(
            fmt::format("image extent {} smaller than patch size {}", extent, size));
    }
    std::vector<int> origins;
    for (int o = 0; o + size <= extent; o += stride) {
        origins.push_back(o);
    }
    if (origins.back() + size < extent) {
        origins.push_back(extent - size);
    }
    return origins;
}

std::vector<Patch> extract_patches(const ImageTensor& img, int size, int stride) {
    const auto rows = patch_origins(img.height(), size, stride);
    const auto cols = patch_origins(img.width(), size, stride);
    std::vector<Patch> patches;
    patches.reserve(rows.size() * cols.size());
    for (int r : rows) {
        for (int c : cols) {
            patches.push_back({r, c, img.crop(r, c, size, size)});
        }
    }
    return patches;
}

ImageTensor stitch_patches(std::span<const Patch> patches, int height, int width) {
    if (patches.empty()) {
        throw StitchError("no patches to stitch");
    }
    const int channels = patches.front().tensor.channels();
    ImageTensor sum(height, width, channels);
    std::vector<int> count(static_cast<std::size_t>(height) * width, 0);
    for (const auto& p : patches) {
        const auto& t = p.tensor;
        if (t.channels() != channels || p.row < 0 || p.col < 0 ||
            p.row + t.height() > height || p.col + t.width() > width) {
            throw std::invalid_argument(fmt::format(
                "patch at ({}, {}) of size {}x{}x{} does not fit a {}x{}x{} canvas", p.row,
                p.col, t.height(), t.width(), t.channels(), height, width, channels));
        }
        for (int y = 0; y < t.height(); ++y) {
            for (int x = 0; x < t.width(); ++x) {
                for (int c = 0; c < channels; ++c) {
                    sum.at(p.row + y, p.col + x, c) += t.at(y, x, c);
                }
                ++count[static_cast<std::size_t>(p.row + y) * width + p.col + x];
            }
        }
    }
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const int n = count[static_cast<std::size_t>(y) * width + x];
            if (n == 0) {
                throw StitchError(fmt::format("pixel ({}, {}) not covered by any patch", y, x));
            }
            for (int c = 0; c < channels; ++c) {
                sum.at(y, x, c) /= n;
            }
        }
    }
    return sum;
}

}  // namespace kgcnn::img
