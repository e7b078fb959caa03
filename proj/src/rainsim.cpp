#include "kgcnn/rainsim.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <numbers>
#include <stdexcept>

namespace kgcnn::rain {

using img::ImageTensor;

MotionKernel make_motion_kernel(double theta, double length, int size) {
    if (size <= 0 || size % 2 == 0) {
        throw std::invalid_argument(fmt::format("kernel size must be odd, got {}", size));
    }
    if (!(length >= 1.0)) {
        throw std::invalid_argument(fmt::format("kernel length must be >= 1, got {}", length));
    }
    const double rad = theta * std::numbers::pi / 180.0;
    // Image rows grow downward, so counterclockwise means negative row step.
    const double dx = std::cos(rad);
    const double dy = -std::sin(rad);
    const double half = (length - 1.0) / 2.0;
    const int center = size / 2;

    MotionKernel k{size, theta, length, std::vector<double>(static_cast<std::size_t>(size) * size)};
    double total = 0.0;
    for (int row = 0; row < size; ++row) {
        for (int col = 0; col < size; ++col) {
            const double px = col - center;
            const double py = row - center;
            const double t = std::clamp(px * dx + py * dy, -half, half);
            const double ex = px - t * dx;
            const double ey = py - t * dy;
            const double w = std::max(0.0, 1.0 - std::sqrt(ex * ex + ey * ey));
            k.weights[static_cast<std::size_t>(row) * size + col] = w;
            total += w;
        }
    }
    if (total <= 0.0) {
        throw std::invalid_argument("motion kernel rasterized to all zeros");
    }
    for (double& w : k.weights) {
        w /= total;
    }
    return k;
}

bool RainParams::valid() const {
    return theta >= kThetaMin && theta <= kThetaMax && length >= kLengthMin &&
           length <= kLengthMax && mask_snr >= kSnrMin && mask_snr <= kSnrMax &&
           mask_sigma >= kSigmaMin && mask_sigma <= kSigmaMax;
}

RainParams sample_rain_params(Rng& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto draw = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
    RainParams p;
    p.theta = draw(kThetaMin, kThetaMax);
    p.length = draw(kLengthMin, kLengthMax);
    p.mask_snr = draw(kSnrMin, kSnrMax);
    p.mask_sigma = draw(kSigmaMin, kSigmaMax);
    p.seed = rng();
    return p;
}

namespace {

std::vector<double> gaussian_taps(double sigma) {
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> taps(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = std::exp(-(i * i) / (2.0 * sigma * sigma));
        taps[i + radius] = v;
        sum += v;
    }
    for (double& v : taps) {
        v /= sum;
    }
    return taps;
}

// Zero-padded separable blur of a single-channel image.
ImageTensor separable_blur(const ImageTensor& src, const std::vector<double>& taps) {
    const int radius = static_cast<int>(taps.size() / 2);
    const int h = src.height();
    const int w = src.width();
    ImageTensor tmp(h, w, 1);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int xx = x + i;
                if (xx >= 0 && xx < w) {
                    acc += taps[i + radius] * src.at(y, xx);
                }
            }
            tmp.at(y, x) = acc;
        }
    }
    ImageTensor out(h, w, 1);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int yy = y + i;
                if (yy >= 0 && yy < h) {
                    acc += taps[i + radius] * tmp.at(yy, x);
                }
            }
            out.at(y, x) = acc;
        }
    }
    return out;
}

}  // namespace

ImageTensor make_rain_mask(int height, int width, double snr, double sigma, Rng& rng) {
    if (height <= 0 || width <= 0) {
        throw std::invalid_argument(fmt::format("mask dimensions must be positive, got {}x{}",
                                                height, width));
    }
    if (!(snr >= 0.0 && snr <= 1.0) || !(sigma > 0.0)) {
        throw std::invalid_argument(
            fmt::format("invalid mask parameters snr={} sigma={}", snr, sigma));
    }
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double drop_probability = 1.0 - snr;
    ImageTensor drops(height, width, 1);
    for (double& v : drops.data()) {
        v = unit(rng) < drop_probability ? 1.0 : 0.0;
    }
    return img::clamp01(separable_blur(drops, gaussian_taps(sigma)));
}

ImageTensor convolve_same(const ImageTensor& image, std::span<const double> kernel,
                          int kernel_size) {
    if (image.channels() != 1) {
        throw std::invalid_argument("convolve_same expects a single-channel image");
    }
    if (kernel_size % 2 == 0 ||
        kernel.size() != static_cast<std::size_t>(kernel_size) * kernel_size) {
        throw std::invalid_argument("convolve_same expects an odd square kernel");
    }
    if (kernel_size > image.height() || kernel_size > image.width()) {
        throw std::invalid_argument(fmt::format("kernel {}x{} larger than image {}x{}",
                                                kernel_size, kernel_size, image.height(),
                                                image.width()));
    }
    const int h = image.height();
    const int w = image.width();
    const int c = kernel_size / 2;
    ImageTensor out(h, w, 1);
    // Scatter form of out(y, x) = sum k(u, v) in(y + c - u, x + c - v); rain
    // masks are sparse so zero inputs are skipped.
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double v = image.at(y, x);
            if (v == 0.0) {
                continue;
            }
            for (int u = 0; u < kernel_size; ++u) {
                const int oy = y - c + u;
                if (oy < 0 || oy >= h) {
                    continue;
                }
                for (int s = 0; s < kernel_size; ++s) {
                    const int ox = x - c + s;
                    if (ox >= 0 && ox < w) {
                        out.at(oy, ox) += v * kernel[static_cast<std::size_t>(u) * kernel_size + s];
                    }
                }
            }
        }
    }
    return out;
}

ImageTensor convolve_same(const ImageTensor& image, const MotionKernel& kernel) {
    return convolve_same(image, kernel.weights, kernel.size);
}

SyntheticRain synthesize_rainy(const ImageTensor& background, const RainParams& params) {
    if (background.channels() != 3) {
        throw std::invalid_argument("synthesize_rainy expects an RGB background");
    }
    Rng mask_rng(params.seed);
    auto mask = make_rain_mask(background.height(), background.width(), params.mask_snr,
                               params.mask_sigma, mask_rng);
    auto kernel = make_motion_kernel(params.theta, params.length, kKernelSize);
    auto streaks = convolve_same(mask, kernel);

    const auto yuv = img::rgb_to_yuv(background);
    ImageTensor rainy = background;
    for (int y = 0; y < background.height(); ++y) {
        for (int x = 0; x < background.width(); ++x) {
            const double luma = yuv.at(y, x, 0);
            const double raised = std::min(luma + streaks.at(y, x), 1.0);
            // A luma-only change maps back to RGB as the same offset on every
            // channel, so the inverse transform reduces to this addition.
            const double delta = std::max(0.0, raised - luma);
            for (int ch = 0; ch < 3; ++ch) {
                rainy.at(y, x, ch) = std::clamp(background.at(y, x, ch) + delta, 0.0, 1.0);
            }
        }
    }
    return {std::move(rainy), std::move(streaks), std::move(kernel), std::move(mask)};
}

}  // namespace kgcnn::rain
