#include "scenes.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "kgcnn/random.hpp"

namespace kgcnn::scenes {

namespace {

using Color = std::array<double, 3>;

Color random_color(Rng& rng, double lo, double hi) {
    std::uniform_real_distribution<double> u(lo, hi);
    return {u(rng), u(rng), u(rng)};
}

}  // namespace

img::ImageTensor make_scene(int height, int width, std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    img::ImageTensor out(height, width, 3);

    const Color top = random_color(rng, 0.25, 0.75);
    const Color bottom = random_color(rng, 0.1, 0.6);
    const double tilt = unit(rng) - 0.5;
    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
            const double t = std::clamp(
                static_cast<double>(r) / height + tilt * (static_cast<double>(c) / width - 0.5),
                0.0, 1.0);
            for (int k = 0; k < 3; ++k) {
                out.at(r, c, k) = (1.0 - t) * top[k] + t * bottom[k];
            }
        }
    }

    const int shapes = 4 + static_cast<int>(unit(rng) * 6);
    for (int s = 0; s < shapes; ++s) {
        const bool ellipse = unit(rng) < 0.5;
        const double cy = unit(rng) * height;
        const double cx = unit(rng) * width;
        const double ry = (0.08 + 0.3 * unit(rng)) * height;
        const double rx = (0.08 + 0.3 * unit(rng)) * width;
        const Color base = random_color(rng, 0.05, 0.85);
        const double shade = 0.4 * (unit(rng) - 0.5);
        for (int r = 0; r < height; ++r) {
            for (int c = 0; c < width; ++c) {
                const double dy = (r - cy) / ry;
                const double dx = (c - cx) / rx;
                const bool inside = ellipse ? dx * dx + dy * dy <= 1.0
                                            : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
                if (!inside) {
                    continue;
                }
                for (int k = 0; k < 3; ++k) {
                    out.at(r, c, k) = base[k] + shade * dy;
                }
            }
        }
    }

    // Faint stripes and noise so texture is never identically zero.
    const double freq = 0.2 + 0.6 * unit(rng);
    const double phase = unit(rng) * 6.283185307179586;
    std::normal_distribution<double> noise(0.0, 0.01);
    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
            const double stripe = 0.02 * std::sin(freq * (r + 0.5 * c) + phase);
            for (int k = 0; k < 3; ++k) {
                out.at(r, c, k) += stripe + noise(rng);
            }
        }
    }
    return img::clamp01(std::move(out));
}

}  // namespace kgcnn::scenes
