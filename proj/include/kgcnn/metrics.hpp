#pragma once

#include <filesystem>
#include <string>

#include "kgcnn/imgcore.hpp"

namespace kgcnn::metrics {

/// Returned by psnr for identical inputs.
inline constexpr double kIdenticalPsnr = 99.0;

/// 10 log10(1 / MSE) over every channel.
double psnr(const img::ImageTensor& x, const img::ImageTensor& y);

/// Mean SSIM over all fully-contained 11x11 Gaussian (sigma 1.5) windows of
/// the luminance, with K1 = 0.01, K2 = 0.03 and L = 1.
double ssim(const img::ImageTensor& x, const img::ImageTensor& y);

/// Universal image quality index averaged over all 8x8 windows of the
/// luminance. Identical windows score 1; otherwise a window whose variance
/// or mean-square denominator vanishes scores 0.
double uiqi(const img::ImageTensor& x, const img::ImageTensor& y);

/// Standard deviation of the gradient magnitude similarity map. Gradients
/// are 3x3 Prewitt responses on the luminance, evaluated where the stencil
/// fits inside the image; c = 0.0026 for [0, 1] intensities.
double gmsd(const img::ImageTensor& x, const img::ImageTensor& y);

struct MetricReport {
    double psnr = 0.0;
    double ssim = 0.0;
    double uiqi = 0.0;
    double gmsd = 0.0;
};

MetricReport evaluate(const img::ImageTensor& x, const img::ImageTensor& reference);

/// Loads both PNGs (so both sides carry 8-bit quantization) and evaluates.
MetricReport evaluate_protocol(const std::filesystem::path& derained,
                               const std::filesystem::path& reference);

/// "psnr,ssim,uiqi,gmsd"
std::string csv_header();
std::string to_csv(const MetricReport& report);

}  // namespace kgcnn::metrics
