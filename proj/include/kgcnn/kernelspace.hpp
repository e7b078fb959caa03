#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "kgcnn/imgcore.hpp"
#include "kgcnn/rainsim.hpp"

namespace kgcnn::kspace {

/// Upper bound on the retained PCA dimension.
inline constexpr int kMaxDimension = 162;

/// Orthonormal projection basis for vectorized p x p kernels.
struct PcaBasis {
    int kernel_size = 0;
    int dimension = 0;                 // t
    double energy_kept = 0.0;          // retained eigenvalue fraction
    std::vector<double> mean;          // p^2
    std::vector<double> components;    // t rows of p^2, row-major

    int feature_count() const { return kernel_size * kernel_size; }
    std::span<const double> component(int j) const {
        return {components.data() + static_cast<std::size_t>(j) * feature_count(),
                static_cast<std::size_t>(feature_count())};
    }
};

/// Regular grid over theta in [45, 135] and length in [15, 30], theta-major.
std::vector<rain::MotionKernel> sample_kernel_family(int theta_steps, int length_steps,
                                                     int kernel_size = rain::kKernelSize);

/// Principal components of the kernel family. Keeps the smallest t whose
/// cumulative eigenvalue fraction reaches `energy_threshold`, capped at
/// kMaxDimension. Throws if the family has no variance.
PcaBasis fit_pca(std::span<const rain::MotionKernel> kernels, double energy_threshold = 0.99);

std::vector<double> project(const rain::MotionKernel& kernel, const PcaBasis& basis);
std::vector<double> project(std::span<const double> kernel_vector, const PcaBasis& basis);

/// mean + components^T coeffs, as a p^2 vector.
std::vector<double> reconstruct(std::span<const double> coeffs, const PcaBasis& basis);

/// Spatially constant m x n x t stack whose slice j equals coeffs[j].
/// Only the coefficients are stored; every slice is constant by construction.
class DegradationMap {
public:
    DegradationMap(std::vector<double> coeffs, int height, int width);

    int height() const { return height_; }
    int width() const { return width_; }
    int depth() const { return static_cast<int>(coeffs_.size()); }
    double at(int /*row*/, int /*col*/, int slice) const { return coeffs_[slice]; }
    const std::vector<double>& coefficients() const { return coeffs_; }

    /// Dense m x n x t tensor.
    img::ImageTensor materialize() const;

private:
    std::vector<double> coeffs_;
    int height_;
    int width_;
};

DegradationMap stretch(std::span<const double> coeffs, int height, int width);

/// Binary basis file: "KGPB", u32 version, u32 p, u32 t, p^2 mean values,
/// t * p^2 component values, then the retained energy fraction; all reals
/// are little-endian IEEE-754 doubles.
void save_basis(const PcaBasis& basis, const std::filesystem::path& path);
PcaBasis load_basis(const std::filesystem::path& path);

}  // namespace kgcnn::kspace
