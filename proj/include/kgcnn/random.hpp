#pragma once

#include <cstdint>
#include <random>

namespace kgcnn {

using Rng = std::mt19937_64;

/// Independent purposes that draw from a run's master seed. The numeric
/// values are part of the reproducibility contract: changing one changes
/// every artifact derived from that stream.
enum class Stream : std::uint64_t {
    mask = 1,
    crop = 2,
    init = 3,
    shuffle = 4,
    params = 5,
    heldout = 6,
};

/// Mixes (master, stream, index) into a child seed with splitmix64 rounds.
std::uint64_t derive_seed(std::uint64_t master, Stream stream, std::uint64_t index = 0);

inline Rng make_rng(std::uint64_t master, Stream stream, std::uint64_t index = 0) {
    return Rng(derive_seed(master, stream, index));
}

}  // namespace kgcnn
