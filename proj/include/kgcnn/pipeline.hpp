#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "kgcnn/decompose.hpp"
#include "kgcnn/imgcore.hpp"
#include "kgcnn/kernelspace.hpp"
#include "kgcnn/nn/network.hpp"
#include "kgcnn/rainsim.hpp"

namespace kgcnn::pipeline {

/// Training aborted because the loss stopped being finite.
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// full: guidance from the kernel. zero_kernel: all-zero degradation maps.
/// derain_only: zero maps, trained as its own model from a separate init.
enum class AblationMode { full, zero_kernel, derain_only };

std::string_view to_string(AblationMode mode);
/// Accepts both dashed and underscored spellings.
AblationMode parse_mode(std::string_view text);

inline constexpr int kDefaultDepth = 26;
inline constexpr int kDefaultFilters = 36;

/// Four conv+ReLU+2x mean-pool stages (3->16->32->64->64), then
/// fc(1024->64)+ReLU and fc(64->2). Input is a 64x64x3 texture patch.
nn::NetSpec param_net_spec();

/// conv(3->F)+ReLU, concat of `external_depth` guidance channels,
/// conv(F+t->F)+BN+ReLU, (depth-4)/2 residual blocks of two
/// conv(F->F)+BN+ReLU layers, conv(F->F)+BN+ReLU, conv(F->3).
/// `depth` counts convolutions and must be even and >= 4.
nn::NetSpec derain_net_spec(int external_depth, int depth = kDefaultDepth,
                            int filters = kDefaultFilters);

/// Affine maps theta [45, 135] -> [0, 1] and length [15, 30] -> [0, 1].
std::array<double, 2> normalize_params(double theta, double length);
std::array<double, 2> denormalize_params(std::array<double, 2> normalized);

/// Gray images are replicated to three channels; RGB is returned as is.
img::ImageTensor to_rgb(const img::ImageTensor& image);

struct TrainingSample {
    img::ImageTensor texture;        // 64x64x3 texture of the rainy crop
    std::array<double, 2> label{};   // normalized (theta, length)
    img::ImageTensor streaks;        // 64x64x3, rainy crop - clean crop
    std::vector<double> coeffs;      // PCA coefficients of the true kernel
    rain::RainParams params;
};

using Dataset = std::vector<TrainingSample>;

/// Sample i draws its crop from Stream::crop index i and its rain from
/// Stream::params index i, so a prefix of a larger set is identical.
Dataset build_training_set(std::span<const img::ImageTensor> clean, int count,
                           std::uint64_t seed, const kspace::PcaBasis& pca,
                           const decomp::GuidedFilterConfig& filter = {});

struct TrainConfig {
    int epochs = 50;
    int batch = 8;
    double learning_rate = 0.01;
    std::uint64_t seed = 1;
    int patches = 500;
    AblationMode mode = AblationMode::full;
    int depth = kDefaultDepth;
    int filters = kDefaultFilters;
};

struct TrainResult {
    nn::Checkpoint model;
    /// Entry 0 is the loss of the initial network over the dataset; entry e
    /// is the mean mini-batch loss during epoch e.
    std::vector<double> loss_history;
};

/// Called after every epoch with (epoch, mean loss).
using EpochCallback = std::function<void(int, double)>;

TrainResult train_param_net(const Dataset& data, const TrainConfig& cfg,
                            const EpochCallback& on_epoch = {});

/// Supervised with ground-truth kernel coefficients; zero_kernel and
/// derain_only feed all-zero maps.
TrainResult train_derain_net(const Dataset& data, int external_depth, const TrainConfig& cfg,
                             const EpochCallback& on_epoch = {});

struct KernelEstimate {
    double theta = 0.0;
    double length = 0.0;
    rain::MotionKernel kernel;
};

/// Clamps the network output to [0, 1]^2 before denormalizing.
KernelEstimate kernel_from_output(std::array<double, 2> network_output);

KernelEstimate estimate_kernel(const img::ImageTensor& texture_patch,
                               const nn::Checkpoint& param_net);
std::vector<KernelEstimate> estimate_kernels(std::span<const img::ImageTensor> texture_patches,
                                             const nn::Checkpoint& param_net);

struct DerainResult {
    img::ImageTensor derained;
    img::ImageTensor streaks;  // stitched, clamped to >= 0
};

/// Patches of 64 at stride 48; per patch: texture split, kernel estimate,
/// projection and stretching, derain net. derained = clamp(rainy - streaks).
DerainResult derain_image(const img::ImageTensor& rainy, const nn::Checkpoint& param_net,
                          const nn::Checkpoint& derain_net, const kspace::PcaBasis& pca,
                          AblationMode mode,
                          const decomp::GuidedFilterConfig& filter = {});

}  // namespace kgcnn::pipeline
