#pragma once

#include "kgcnn/imgcore.hpp"

namespace kgcnn::decomp {

struct GuidedFilterConfig {
    int radius = 15;
    double epsilon = 1.0;  // in squared intensity units of [0, 1] images
};

/// Mean over the (2r+1)^2 window clipped to the image, divided by the number
/// of pixels actually inside the window. O(1) per pixel via an integral image.
img::ImageTensor box_filter(const img::ImageTensor& plane, int radius);

/// Guided filter of a single-channel input by a single-channel guide.
img::ImageTensor guided_filter(const img::ImageTensor& input, const img::ImageTensor& guide,
                               const GuidedFilterConfig& cfg);

struct Components {
    img::ImageTensor structure;
    img::ImageTensor texture;
};

/// Self-guided low-pass per channel; texture is the residual, so
/// structure + texture reproduces the input.
Components split_texture(const img::ImageTensor& image, const GuidedFilterConfig& cfg = {});

}  // namespace kgcnn::decomp
