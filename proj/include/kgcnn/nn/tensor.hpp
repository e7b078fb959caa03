#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace kgcnn::nn {

/// Dense activation tensor in NHWC order.
class Tensor4 {
public:
    Tensor4() = default;
    Tensor4(int batch, int height, int width, int channels, double fill = 0.0);
    Tensor4(int batch, int height, int width, int channels, std::vector<double> data);

    int batch() const { return batch_; }
    int height() const { return height_; }
    int width() const { return width_; }
    int channels() const { return channels_; }
    std::size_t size() const { return data_.size(); }
    std::size_t sample_size() const {
        return static_cast<std::size_t>(height_) * width_ * channels_;
    }

    double& at(int n, int y, int x, int c) { return data_[index(n, y, x, c)]; }
    double at(int n, int y, int x, int c) const { return data_[index(n, y, x, c)]; }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    std::vector<double>& storage() { return data_; }

    std::span<double> sample(int n) {
        return {data_.data() + n * sample_size(), sample_size()};
    }
    std::span<const double> sample(int n) const {
        return {data_.data() + n * sample_size(), sample_size()};
    }

    bool same_shape(const Tensor4& o) const {
        return batch_ == o.batch_ && height_ == o.height_ && width_ == o.width_ &&
               channels_ == o.channels_;
    }

    friend bool operator==(const Tensor4&, const Tensor4&) = default;

private:
    std::size_t index(int n, int y, int x, int c) const {
        return ((static_cast<std::size_t>(n) * height_ + y) * width_ + x) * channels_ + c;
    }

    int batch_ = 0;
    int height_ = 0;
    int width_ = 0;
    int channels_ = 0;
    std::vector<double> data_;
};

/// Extra channels that are spatially constant within each sample: one
/// `depth`-vector per sample. Appending these to an activation is what
/// concat_external does.
struct ConstantChannels {
    int batch = 0;
    int depth = 0;
    std::vector<double> values;  // batch x depth

    double at(int n, int j) const { return values[static_cast<std::size_t>(n) * depth + j]; }
};

/// Dense concatenation of `x` with the constant channels along the channel axis.
Tensor4 concat_channels(const Tensor4& x, const ConstantChannels& tail);

}  // namespace kgcnn::nn
