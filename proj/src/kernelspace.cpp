#include "kgcnn/kernelspace.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "binary_io.hpp"

namespace kgcnn::kspace {

namespace {
constexpr std::uint32_t kBasisVersion = 1;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
}  // namespace

std::vector<rain::MotionKernel> sample_kernel_family(int theta_steps, int length_steps,
                                                     int kernel_size) {
    if (theta_steps < 2 || length_steps < 2) {
        throw std::invalid_argument("kernel family grid needs at least 2 steps per axis");
    }
    std::vector<rain::MotionKernel> family;
    family.reserve(static_cast<std::size_t>(theta_steps) * length_steps);
    for (int i = 0; i < theta_steps; ++i) {
        const double theta =
            rain::kThetaMin + (rain::kThetaMax - rain::kThetaMin) * i / (theta_steps - 1);
        for (int j = 0; j < length_steps; ++j) {
            const double length =
                rain::kLengthMin + (rain::kLengthMax - rain::kLengthMin) * j / (length_steps - 1);
            family.push_back(rain::make_motion_kernel(theta, length, kernel_size));
        }
    }
    return family;
}

PcaBasis fit_pca(std::span<const rain::MotionKernel> kernels, double energy_threshold) {
    if (kernels.size() < 2) {
        throw std::invalid_argument("fit_pca needs at least two kernels");
    }
    if (!(energy_threshold > 0.0 && energy_threshold <= 1.0)) {
        throw std::invalid_argument("energy threshold must lie in (0, 1]");
    }
    const int p = kernels.front().size;
    const int d = p * p;
    const auto n = static_cast<Eigen::Index>(kernels.size());
    RowMatrix x(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& k = kernels[static_cast<std::size_t>(i)];
        if (k.size != p) {
            throw std::invalid_argument("fit_pca: kernels must share one size");
        }
        x.row(i) = Eigen::Map<const Eigen::RowVectorXd>(k.weights.data(), d);
    }
    const Eigen::RowVectorXd mean = x.colwise().mean();
    x.rowwise() -= mean;

    // Eigenpairs in descending order; columns of `directions` are unit vectors
    // in kernel space.
    Eigen::VectorXd eigenvalues;
    Eigen::MatrixXd directions;
    if (n < d) {
        const Eigen::MatrixXd gram = (x * x.transpose()) / static_cast<double>(n);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram);
        eigenvalues = solver.eigenvalues().reverse();
        const Eigen::MatrixXd v = solver.eigenvectors().rowwise().reverse();
        directions = x.transpose() * v;
        for (Eigen::Index j = 0; j < directions.cols(); ++j) {
            const double norm = directions.col(j).norm();
            if (norm > 0.0) {
                directions.col(j) /= norm;
            }
        }
    } else {
        const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
        eigenvalues = solver.eigenvalues().reverse();
        directions = solver.eigenvectors().rowwise().reverse();
    }
    eigenvalues = eigenvalues.cwiseMax(0.0);
    const double total = eigenvalues.sum();
    if (!(total > 1e-300) || eigenvalues(0) <= total * 1e-14) {
        throw std::invalid_argument("fit_pca: kernel family has no variance");
    }

    int t = 0;
    double kept = 0.0;
    const double floor = eigenvalues(0) * 1e-12;
    while (t < eigenvalues.size() && t < kMaxDimension && eigenvalues(t) > floor) {
        kept += eigenvalues(t);
        ++t;
        if (kept / total >= energy_threshold) {
            break;
        }
    }

    PcaBasis basis;
    basis.kernel_size = p;
    basis.dimension = t;
    basis.energy_kept = kept / total;
    basis.mean.assign(mean.data(), mean.data() + d);
    basis.components.resize(static_cast<std::size_t>(t) * d);
    for (int j = 0; j < t; ++j) {
        for (int f = 0; f < d; ++f) {
            basis.components[static_cast<std::size_t>(j) * d + f] = directions(f, j);
        }
    }
    return basis;
}

std::vector<double> project(std::span<const double> kernel_vector, const PcaBasis& basis) {
    const int d = basis.feature_count();
    if (kernel_vector.size() != static_cast<std::size_t>(d)) {
        throw std::invalid_argument(fmt::format("project: kernel has {} entries, basis expects {}",
                                                kernel_vector.size(), d));
    }
    std::vector<double> centered(d);
    for (int f = 0; f < d; ++f) {
        centered[f] = kernel_vector[f] - basis.mean[f];
    }
    std::vector<double> coeffs(basis.dimension);
    for (int j = 0; j < basis.dimension; ++j) {
        const auto row = basis.component(j);
        coeffs[j] = std::inner_product(row.begin(), row.end(), centered.begin(), 0.0);
    }
    return coeffs;
}

std::vector<double> project(const rain::MotionKernel& kernel, const PcaBasis& basis) {
    if (kernel.size != basis.kernel_size) {
        throw std::invalid_argument(fmt::format("project: kernel size {} vs basis size {}",
                                                kernel.size, basis.kernel_size));
    }
    return project(std::span<const double>(kernel.weights), basis);
}

std::vector<double> reconstruct(std::span<const double> coeffs, const PcaBasis& basis) {
    if (coeffs.size() != static_cast<std::size_t>(basis.dimension)) {
        throw std::invalid_argument("reconstruct: coefficient count does not match basis");
    }
    std::vector<double> out = basis.mean;
    for (int j = 0; j < basis.dimension; ++j) {
        const auto row = basis.component(j);
        for (std::size_t f = 0; f < out.size(); ++f) {
            out[f] += coeffs[j] * row[f];
        }
    }
    return out;
}

DegradationMap::DegradationMap(std::vector<double> coeffs, int height, int width)
    : coeffs_(std::move(coeffs)), height_(height), width_(width) {
    if (coeffs_.empty()) {
        throw std::invalid_argument("degradation map needs at least one coefficient");
    }
    if (height <= 0 || width <= 0) {
        throw std::invalid_argument("degradation map dimensions must be positive");
    }
}

img::ImageTensor DegradationMap::materialize() const {
    img::ImageTensor out(height_, width_, depth());
    for (int y = 0; y < height_; ++y) {
        for (int x = 0; x < width_; ++x) {
            for (int j = 0; j < depth(); ++j) {
                out.at(y, x, j) = coeffs_[j];
            }
        }
    }
    return out;
}

DegradationMap stretch(std::span<const double> coeffs, int height, int width) {
    return DegradationMap(std::vector<double>(coeffs.begin(), coeffs.end()), height, width);
}

void save_basis(const PcaBasis& basis, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error(fmt::format("{}: cannot open for writing", path.string()));
    }
    detail::write_magic(out, "KGPB");
    detail::write_le<std::uint32_t>(out, kBasisVersion);
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(basis.kernel_size));
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(basis.dimension));
    detail::write_f64s(out, basis.mean);
    detail::write_f64s(out, basis.components);
    detail::write_f64(out, basis.energy_kept);
    if (!out) {
        throw std::runtime_error(fmt::format("{}: write failed", path.string()));
    }
}

PcaBasis load_basis(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error(fmt::format("{}: cannot open", path.string()));
    }
    try {
        detail::expect_magic(in, "KGPB");
        const auto version = detail::read_le<std::uint32_t>(in);
        if (version != kBasisVersion) {
            throw detail::FormatError(fmt::format("unsupported basis version {}", version));
        }
        PcaBasis basis;
        basis.kernel_size = static_cast<int>(detail::read_le<std::uint32_t>(in));
        basis.dimension = static_cast<int>(detail::read_le<std::uint32_t>(in));
        if (basis.kernel_size <= 0 || basis.kernel_size > 1023 || basis.dimension < 0 ||
            basis.dimension > basis.feature_count()) {
            throw detail::FormatError("implausible basis dimensions");
        }
        const auto d = static_cast<std::size_t>(basis.feature_count());
        basis.mean = detail::read_f64s(in, d);
        basis.components = detail::read_f64s(in, d * basis.dimension);
        basis.energy_kept = detail::read_f64(in);
        return basis;
    } catch (const detail::FormatError& e) {
        throw std::runtime_error(fmt::format("{}: {}", path.string(), e.what()));
    }
}

}  // namespace kgcnn::kspace
