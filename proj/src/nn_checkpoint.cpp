#include <fmt/format.h>
#include <fstream>

#include "binary_io.hpp"
#include "kgcnn/nn/network.hpp"

namespace kgcnn::nn {

namespace {
constexpr std::uint32_t kCheckpointVersion = 1;
constexpr std::uint8_t kMaxKind = static_cast<std::uint8_t>(LayerKind::mean_pool2);
}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    validate(ckpt.spec);
    if (ckpt.state.layers.size() != ckpt.spec.size()) {
        throw std::invalid_argument("checkpoint state does not match spec");
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error(fmt::format("{}: cannot open for writing", path.string()));
    }
    using namespace detail;
    write_magic(out, "KGCN");
    write_le<std::uint32_t>(out, kCheckpointVersion);
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.metadata.size()));
    for (const auto& [key, value] : ckpt.metadata) {
        write_string(out, key);
        write_string(out, value);
    }
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.spec.size()));
    for (const auto& l : ckpt.spec) {
        write_le<std::uint8_t>(out, static_cast<std::uint8_t>(l.kind));
        write_le<std::uint32_t>(out, static_cast<std::uint32_t>(l.in_channels));
        write_le<std::uint32_t>(out, static_cast<std::uint32_t>(l.out_channels));
    }
    for (const auto& layer : ckpt.state.layers) {
        for (const auto& p : layer.params) {
            write_f64s(out, p.value);
            write_f64s(out, p.first_moment);
            write_f64s(out, p.second_moment);
        }
        write_f64s(out, layer.running_mean);
        write_f64s(out, layer.running_var);
    }
    write_le<std::uint64_t>(out, static_cast<std::uint64_t>(ckpt.state.step));
    if (!out) {
        throw std::runtime_error(fmt::format("{}: write failed", path.string()));
    }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error(fmt::format("{}: cannot open", path.string()));
    }
    using namespace detail;
    try {
        expect_magic(in, "KGCN");
        const auto version = read_le<std::uint32_t>(in);
        if (version != kCheckpointVersion) {
            throw FormatError(fmt::format("unsupported checkpoint version {}", version));
        }
        Checkpoint ckpt;
        const auto entries = read_le<std::uint32_t>(in);
        for (std::uint32_t i = 0; i < entries; ++i) {
            auto key = read_string(in);
            ckpt.metadata[key] = read_string(in);
        }
        const auto layers = read_le<std::uint32_t>(in);
        if (layers > 100000) {
            throw FormatError("implausible layer count");
        }
        for (std::uint32_t i = 0; i < layers; ++i) {
            const auto kind = read_le<std::uint8_t>(in);
            if (kind > kMaxKind) {
                throw FormatError(fmt::format("unknown layer kind {}", kind));
            }
            LayerSpec l;
            l.kind = static_cast<LayerKind>(kind);
            l.in_channels = static_cast<int>(read_le<std::uint32_t>(in));
            l.out_channels = static_cast<int>(read_le<std::uint32_t>(in));
            ckpt.spec.push_back(l);
        }
        validate(ckpt.spec);
        // Shapes follow from the spec; init with a dummy generator and overwrite.
        Rng shape_only(0);
        ckpt.state = init_state(ckpt.spec, shape_only);
        for (auto& layer : ckpt.state.layers) {
            for (auto& p : layer.params) {
                p.value = read_f64s(in, p.value.size());
                p.first_moment = read_f64s(in, p.first_moment.size());
                p.second_moment = read_f64s(in, p.second_moment.size());
            }
            layer.running_mean = read_f64s(in, layer.running_mean.size());
            layer.running_var = read_f64s(in, layer.running_var.size());
        }
        ckpt.state.step = static_cast<std::int64_t>(read_le<std::uint64_t>(in));
        if (in.peek() != std::char_traits<char>::eof()) {
            throw FormatError("trailing bytes after checkpoint payload");
        }
        return ckpt;
    } catch (const FormatError& e) {
        throw std::runtime_error(fmt::format("{}: {}", path.string(), e.what()));
    } catch (const ShapeError& e) {
        throw std::runtime_error(fmt::format("{}: invalid layer list: {}", path.string(), e.what()));
    }
}

}  // namespace kgcnn::nn
