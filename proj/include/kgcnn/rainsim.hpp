#pragma once

#include <cstdint>
#include <vector>

#include "kgcnn/imgcore.hpp"
#include "kgcnn/random.hpp"

namespace kgcnn::rain {

/// Spatial size shared by every kernel so that one PCA space covers the
/// whole family (smallest odd size holding a 30 px segment).
inline constexpr int kKernelSize = 31;

inline constexpr double kThetaMin = 45.0;
inline constexpr double kThetaMax = 135.0;
inline constexpr double kLengthMin = 15.0;
inline constexpr double kLengthMax = 30.0;
inline constexpr double kSnrMin = 0.9;
inline constexpr double kSnrMax = 1.0;
inline constexpr double kSigmaMin = 0.2;
inline constexpr double kSigmaMax = 0.5;

/// Line-segment point spread function. `theta` is in degrees,
/// counterclockwise from the horizontal axis, so 90 is a vertical streak.
struct MotionKernel {
    int size = 0;
    double theta = 0.0;
    double length = 0.0;
    std::vector<double> weights;  // size x size, row-major

    double at(int row, int col) const {
        return weights[static_cast<std::size_t>(row) * size + col];
    }
};

/// Rasterizes a centered segment of `length` pixels (pixel center to pixel
/// center) at angle `theta`. A cell's weight is max(0, 1 - d) where d is its
/// Euclidean distance to the segment; weights are normalized to sum to one.
MotionKernel make_motion_kernel(double theta, double length, int size = kKernelSize);

struct RainParams {
    double theta = 90.0;
    double length = 20.0;
    double mask_snr = 0.95;
    double mask_sigma = 0.3;
    std::uint64_t seed = 0;

    bool valid() const;
};

RainParams sample_rain_params(Rng& rng);

/// Draws drops with probability (1 - snr) per pixel, blurs them with a
/// normalized Gaussian truncated at ceil(3 sigma) and clamps to [0, 1].
img::ImageTensor make_rain_mask(int height, int width, double snr, double sigma, Rng& rng);

/// True 2-D convolution (kernel flipped), zero padding, same-size output.
img::ImageTensor convolve_same(const img::ImageTensor& image, const MotionKernel& kernel);

/// Same operation on an arbitrary odd square kernel.
img::ImageTensor convolve_same(const img::ImageTensor& image, std::span<const double> kernel,
                               int kernel_size);

struct SyntheticRain {
    img::ImageTensor rainy;    // RGB, in [0, 1]
    img::ImageTensor streaks;  // single channel, R = K (*) M before clamping
    MotionKernel kernel;
    img::ImageTensor mask;
};

/// Adds streaks to the Y channel of an RGB background, clamps Y to <= 1 and
/// returns to RGB. The mask is drawn from a generator seeded with
/// `params.seed`, so the result is a pure function of its arguments.
SyntheticRain synthesize_rainy(const img::ImageTensor& background, const RainParams& params);

}  // namespace kgcnn::rain
