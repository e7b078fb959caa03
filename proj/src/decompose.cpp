#include "kgcnn/decompose.hpp"

#include <algorithm>
#include <fmt/format.h>
#include <functional>
#include <stdexcept>
#include <vector>

namespace kgcnn::decomp {

using img::ImageTensor;

ImageTensor box_filter(const ImageTensor& plane, int radius) {
    if (plane.channels() != 1) {
        throw std::invalid_argument("box_filter expects a single-channel image");
    }
    if (plane.empty()) {
        throw std::invalid_argument("box_filter on an empty image");
    }
    if (radius < 1) {
        throw std::invalid_argument(fmt::format("box_filter radius must be >= 1, got {}", radius));
    }
    const int h = plane.height();
    const int w = plane.width();
    // integral(y, x) holds the sum over rows [0, y) and cols [0, x).
    const int stride = w + 1;
    std::vector<double> integral(static_cast<std::size_t>(h + 1) * stride, 0.0);
    for (int y = 0; y < h; ++y) {
        double row_sum = 0.0;
        for (int x = 0; x < w; ++x) {
            row_sum += plane.at(y, x);
            integral[static_cast<std::size_t>(y + 1) * stride + x + 1] =
                integral[static_cast<std::size_t>(y) * stride + x + 1] + row_sum;
        }
    }
    auto at = [&](int y, int x) { return integral[static_cast<std::size_t>(y) * stride + x]; };

    ImageTensor out(h, w, 1);
    for (int y = 0; y < h; ++y) {
        const int y0 = std::max(0, y - radius);
        const int y1 = std::min(h, y + radius + 1);
        for (int x = 0; x < w; ++x) {
            const int x0 = std::max(0, x - radius);
            const int x1 = std::min(w, x + radius + 1);
            const double sum = at(y1, x1) - at(y0, x1) - at(y1, x0) + at(y0, x0);
            out.at(y, x) = sum / ((y1 - y0) * (x1 - x0));
        }
    }
    return out;
}

namespace {

template <typename Op>
ImageTensor combine(const ImageTensor& a, const ImageTensor& b, Op op) {
    ImageTensor out(a.height(), a.width(), 1);
    auto o = out.data();
    auto x = a.data();
    auto y = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) {
        o[i] = op(x[i], y[i]);
    }
    return out;
}

}  // namespace

ImageTensor guided_filter(const ImageTensor& input, const ImageTensor& guide,
                          const GuidedFilterConfig& cfg) {
    if (!input.same_shape(guide) || input.channels() != 1) {
        throw std::invalid_argument(fmt::format(
            "guided_filter: input {}x{}x{} and guide {}x{}x{} must be equal single-channel",
            input.height(), input.width(), input.channels(), guide.height(), guide.width(),
            guide.channels()));
    }
    if (!(cfg.epsilon > 0.0)) {
        throw std::invalid_argument("guided_filter: epsilon must be positive");
    }
    const int r = cfg.radius;
    const auto mean_i = box_filter(guide, r);
    const auto mean_p = box_filter(input, r);
    const auto mean_ip = box_filter(combine(guide, input, std::multiplies<>{}), r);
    const auto mean_ii = box_filter(combine(guide, guide, std::multiplies<>{}), r);

    ImageTensor a(input.height(), input.width(), 1);
    ImageTensor b(input.height(), input.width(), 1);
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double cov = mean_ip.data()[i] - mean_i.data()[i] * mean_p.data()[i];
        const double var = mean_ii.data()[i] - mean_i.data()[i] * mean_i.data()[i];
        a.data()[i] = cov / (var + cfg.epsilon);
        b.data()[i] = mean_p.data()[i] - a.data()[i] * mean_i.data()[i];
    }
    const auto mean_a = box_filter(a, r);
    const auto mean_b = box_filter(b, r);
    ImageTensor out(input.height(), input.width(), 1);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.data()[i] = mean_a.data()[i] * guide.data()[i] + mean_b.data()[i];
    }
    return out;
}

Components split_texture(const ImageTensor& image, const GuidedFilterConfig& cfg) {
    ImageTensor structure(image.height(), image.width(), image.channels());
    for (int c = 0; c < image.channels(); ++c) {
        const auto plane = image.channel(c);
        structure.set_channel(c, guided_filter(plane, plane, cfg));
    }
    return {structure, image - structure};
}

}  // namespace kgcnn::decomp
