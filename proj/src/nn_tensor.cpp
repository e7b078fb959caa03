#include <fmt/format.h>
#include <stdexcept>

#include "kgcnn/nn/tensor.hpp"

namespace kgcnn::nn {

Tensor4::Tensor4(int batch, int height, int width, int channels, double fill)
    : batch_(batch), height_(height), width_(width), channels_(channels) {
    if (batch < 0 || height < 0 || width < 0 || channels < 0) {
        throw std::invalid_argument("negative tensor dimension");
    }
    data_.assign(static_cast<std::size_t>(batch) * height * width * channels, fill);
}

Tensor4::Tensor4(int batch, int height, int width, int channels, std::vector<double> data)
    : batch_(batch), height_(height), width_(width), channels_(channels), data_(std::move(data)) {
    if (batch < 0 || height < 0 || width < 0 || channels < 0 ||
        data_.size() != static_cast<std::size_t>(batch) * height * width * channels) {
        throw std::invalid_argument(fmt::format("tensor data length {} does not match {}x{}x{}x{}",
                                                data_.size(), batch, height, width, channels));
    }
}

Tensor4 concat_channels(const Tensor4& x, const ConstantChannels& tail) {
    if (tail.batch != x.batch() ||
        tail.values.size() != static_cast<std::size_t>(tail.batch) * tail.depth) {
        throw std::invalid_argument(
            fmt::format("constant channels for batch {} do not match tensor batch {}", tail.batch,
                        x.batch()));
    }
    const int c = x.channels();
    Tensor4 out(x.batch(), x.height(), x.width(), c + tail.depth);
    for (int n = 0; n < x.batch(); ++n) {
        for (int y = 0; y < x.height(); ++y) {
            for (int w = 0; w < x.width(); ++w) {
                for (int k = 0; k < c; ++k) {
                    out.at(n, y, w, k) = x.at(n, y, w, k);
                }
                for (int j = 0; j < tail.depth; ++j) {
                    out.at(n, y, w, c + j) = tail.at(n, j);
                }
            }
        }
    }
    return out;
}

}  // namespace kgcnn::nn
