#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace kgcnn::img {

/// Raised when a PNG cannot be decoded or has an unsupported layout.
class DecodeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when stitched patches leave pixels uncovered.
class StitchError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// H x W x C image of doubles stored row-major in (row, col, channel) order.
/// Values are nominally in [0, 1] but intermediate results (texture
/// components, residuals) may leave that range.
class ImageTensor {
public:
    ImageTensor() = default;
    ImageTensor(int height, int width, int channels, double fill = 0.0);
    ImageTensor(int height, int width, int channels, std::vector<double> data);

    int height() const { return height_; }
    int width() const { return width_; }
    int channels() const { return channels_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& at(int row, int col, int channel = 0) {
        return data_[index(row, col, channel)];
    }
    double at(int row, int col, int channel = 0) const {
        return data_[index(row, col, channel)];
    }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    const std::vector<double>& values() const { return data_; }

    bool same_shape(const ImageTensor& other) const {
        return height_ == other.height_ && width_ == other.width_ &&
               channels_ == other.channels_;
    }

    /// Copy of one channel as a single-channel image.
    ImageTensor channel(int c) const;
    void set_channel(int c, const ImageTensor& plane);

    ImageTensor crop(int row, int col, int height, int width) const;

    friend bool operator==(const ImageTensor&, const ImageTensor&) = default;

private:
    std::size_t index(int row, int col, int channel) const {
        return (static_cast<std::size_t>(row) * width_ + col) * channels_ + channel;
    }

    int height_ = 0;
    int width_ = 0;
    int channels_ = 0;
    std::vector<double> data_;
};

ImageTensor operator+(const ImageTensor& a, const ImageTensor& b);
ImageTensor operator-(const ImageTensor& a, const ImageTensor& b);

/// Elementwise clamp to [0, 1].
ImageTensor clamp01(ImageTensor img);

/// Reads an 8-bit grayscale or RGB PNG and maps bytes u to u / 255.
ImageTensor load_png(const std::filesystem::path& path);

/// Clamps to [0, 1], quantizes with round(x * 255) and writes an 8-bit PNG.
void save_png(const ImageTensor& img, const std::filesystem::path& path);

/// The byte save_png writes for an intensity.
unsigned char quantize_byte(double value);

/// save_png followed by load_png, without touching the filesystem.
ImageTensor quantize(const ImageTensor& img);

/// Full-range BT.601 transform without offsets: U and V are centered on 0.
ImageTensor rgb_to_yuv(const ImageTensor& rgb);
ImageTensor yuv_to_rgb(const ImageTensor& yuv);

/// BT.601 luma; grayscale inputs are returned unchanged.
ImageTensor luminance(const ImageTensor& img);

inline constexpr int kPatchSize = 64;
inline constexpr int kPatchStride = 48;

struct Patch {
    int row = 0;
    int col = 0;
    ImageTensor tensor;
};

/// Patch origins along one axis: multiples of stride, with the last origin
/// snapped to extent - size so the whole axis is covered.
std::vector<int> patch_origins(int extent, int size, int stride);

std::vector<Patch> extract_patches(const ImageTensor& img, int size, int stride);

/// Reassembles processed patches into a height x width image. Overlaps are
/// averaged with uniform weights. Each patch's tensor holds the processed
/// values; only its origin and extent are used for placement.
ImageTensor stitch_patches(std::span<const Patch> patches, int height, int width);

}  // namespace kgcnn::img
