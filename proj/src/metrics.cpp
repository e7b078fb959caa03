#include "kgcnn/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fmt/format.h>
#include <stdexcept>
#include <vector>

namespace kgcnn::metrics {

using img::ImageTensor;

namespace {

void require_same(const ImageTensor& x, const ImageTensor& y, const char* what, int min_side) {
    if (!x.same_shape(y)) {
        throw std::invalid_argument(fmt::format("{}: images differ in shape ({}x{}x{} vs {}x{}x{})",
                                                what, x.height(), x.width(), x.channels(),
                                                y.height(), y.width(), y.channels()));
    }
    if (x.height() < min_side || x.width() < min_side) {
        throw std::invalid_argument(
            fmt::format("{}: images must be at least {}x{}", what, min_side, min_side));
    }
}

// Plane of h x w doubles with simple valid-mode separable filtering.
struct Plane {
    int h;
    int w;
    std::vector<double> v;
    double at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
};

Plane to_plane(const ImageTensor& img) {
    const auto luma = img::luminance(img);
    return {luma.height(), luma.width(), luma.values()};
}

Plane product(const Plane& a, const Plane& b) {
    Plane out{a.h, a.w, std::vector<double>(a.v.size())};
    for (std::size_t i = 0; i < a.v.size(); ++i) {
        out.v[i] = a.v[i] * b.v[i];
    }
    return out;
}

// Correlation with a separable kernel, keeping only fully-contained windows.
Plane filter_valid(const Plane& p, const std::vector<double>& taps) {
    const int k = static_cast<int>(taps.size());
    const int ow = p.w - k + 1;
    const int oh = p.h - k + 1;
    std::vector<double> horizontal(static_cast<std::size_t>(p.h) * ow);
    for (int y = 0; y < p.h; ++y) {
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < k; ++i) {
                acc += taps[i] * p.at(y, x + i);
            }
            horizontal[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    }
    Plane out{oh, ow, std::vector<double>(static_cast<std::size_t>(oh) * ow)};
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < k; ++i) {
                acc += taps[i] * horizontal[static_cast<std::size_t>(y + i) * ow + x];
            }
            out.v[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    }
    return out;
}

std::vector<double> gaussian_window_taps() {
    constexpr int kSize = 11;
    constexpr double kSigma = 1.5;
    std::vector<double> taps(kSize);
    double sum = 0.0;
    for (int i = 0; i < kSize; ++i) {
        const double d = i - kSize / 2;
        taps[i] = std::exp(-(d * d) / (2.0 * kSigma * kSigma));
        sum += taps[i];
    }
    for (double& t : taps) {
        t /= sum;
    }
    return taps;
}

}  // namespace

double psnr(const ImageTensor& x, const ImageTensor& y) {
    require_same(x, y, "psnr", 1);
    double sum = 0.0;
    auto a = x.data();
    auto b = y.data();
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        sum += d * d;
    }
    const double mse = sum / static_cast<double>(a.size());
    if (mse == 0.0) {
        return kIdenticalPsnr;
    }
    return std::min(kIdenticalPsnr, 10.0 * std::log10(1.0 / mse));
}

double ssim(const ImageTensor& x, const ImageTensor& y) {
    require_same(x, y, "ssim", 11);
    constexpr double kC1 = 0.01 * 0.01;
    constexpr double kC2 = 0.03 * 0.03;
    const auto px = to_plane(x);
    const auto py = to_plane(y);
    const auto taps = gaussian_window_taps();
    const auto mx = filter_valid(px, taps);
    const auto my = filter_valid(py, taps);
    const auto sxx = filter_valid(product(px, px), taps);
    const auto syy = filter_valid(product(py, py), taps);
    const auto sxy = filter_valid(product(px, py), taps);
    double total = 0.0;
    for (std::size_t i = 0; i < mx.v.size(); ++i) {
        const double ux = mx.v[i];
        const double uy = my.v[i];
        const double vx = sxx.v[i] - ux * ux;
        const double vy = syy.v[i] - uy * uy;
        const double cxy = sxy.v[i] - ux * uy;
        total += ((2.0 * ux * uy + kC1) * (2.0 * cxy + kC2)) /
                 ((ux * ux + uy * uy + kC1) * (vx + vy + kC2));
    }
    return total / static_cast<double>(mx.v.size());
}

double uiqi(const ImageTensor& x, const ImageTensor& y) {
    constexpr int kWindow = 8;
    constexpr double kTiny = 1e-12;
    require_same(x, y, "uiqi", kWindow);
    const auto px = to_plane(x);
    const auto py = to_plane(y);
    const std::vector<double> box(kWindow, 1.0 / kWindow);
    const auto mx = filter_valid(px, box);
    const auto my = filter_valid(py, box);
    const auto sxx = filter_valid(product(px, px), box);
    const auto syy = filter_valid(product(py, py), box);
    const auto sxy = filter_valid(product(px, py), box);

    Plane mismatch{px.h, px.w, std::vector<double>(px.v.size())};
    for (std::size_t i = 0; i < px.v.size(); ++i) {
        mismatch.v[i] = px.v[i] == py.v[i] ? 0.0 : 1.0;
    }
    const auto differing = filter_valid(mismatch, std::vector<double>(kWindow, 1.0));

    double total = 0.0;
    for (std::size_t i = 0; i < mx.v.size(); ++i) {
        if (differing.v[i] == 0.0) {
            total += 1.0;
            continue;
        }
        const double ux = mx.v[i];
        const double uy = my.v[i];
        const double vx = sxx.v[i] - ux * ux;
        const double vy = syy.v[i] - uy * uy;
        const double cxy = sxy.v[i] - ux * uy;
        const double spread = vx + vy;
        const double level = ux * ux + uy * uy;
        if (spread < kTiny || level < kTiny) {
            continue;
        }
        total += 4.0 * cxy * ux * uy / (spread * level);
    }
    return total / static_cast<double>(mx.v.size());
}

double gmsd(const ImageTensor& x, const ImageTensor& y) {
    require_same(x, y, "gmsd", 3);
    constexpr double kC = 0.0026;
    const auto px = to_plane(x);
    const auto py = to_plane(y);
    auto magnitude = [](const Plane& p, int r, int c) {
        double gx = 0.0;
        double gy = 0.0;
        for (int i = -1; i <= 1; ++i) {
            gx += p.at(r + i, c - 1) - p.at(r + i, c + 1);
            gy += p.at(r - 1, c + i) - p.at(r + 1, c + i);
        }
        gx /= 3.0;
        gy /= 3.0;
        return std::sqrt(gx * gx + gy * gy);
    };
    std::vector<double> gms;
    gms.reserve(static_cast<std::size_t>(px.h - 2) * (px.w - 2));
    for (int r = 1; r + 1 < px.h; ++r) {
        for (int c = 1; c + 1 < px.w; ++c) {
            const double a = magnitude(px, r, c);
            const double b = magnitude(py, r, c);
            gms.push_back((2.0 * a * b + kC) / (a * a + b * b + kC));
        }
    }
    double mean = 0.0;
    for (double v : gms) {
        mean += v;
    }
    mean /= static_cast<double>(gms.size());
    double var = 0.0;
    for (double v : gms) {
        var += (v - mean) * (v - mean);
    }
    return std::sqrt(var / static_cast<double>(gms.size()));
}

MetricReport evaluate(const ImageTensor& x, const ImageTensor& reference) {
    return {psnr(x, reference), ssim(x, reference), uiqi(x, reference), gmsd(x, reference)};
}

MetricReport evaluate_protocol(const std::filesystem::path& derained,
                               const std::filesystem::path& reference) {
    return evaluate(img::load_png(derained), img::load_png(reference));
}

std::string csv_header() { return "psnr,ssim,uiqi,gmsd"; }

std::string to_csv(const MetricReport& r) {
    return fmt::format("{:.4f},{:.6f},{:.6f},{:.6f}", r.psnr, r.ssim, r.uiqi, r.gmsd);
}

}  // namespace kgcnn::metrics
