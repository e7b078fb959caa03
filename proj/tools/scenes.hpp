#pragma once

#include <cstdint>

#include "kgcnn/imgcore.hpp"

namespace kgcnn::scenes {

/// Synthetic clean RGB scene: a lit gradient backdrop, overlapping flat and
/// shaded shapes with hard edges, and faint fine-grained texture. A pure
/// function of (height, width, seed).
img::ImageTensor make_scene(int height, int width, std::uint64_t seed);

}  // namespace kgcnn::scenes
