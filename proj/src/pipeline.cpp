#include "kgcnn/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <numeric>
#include <optional>

#include "kgcnn/random.hpp"

namespace kgcnn::pipeline {

using img::ImageTensor;

std::string_view to_string(AblationMode mode) {
    switch (mode) {
        case AblationMode::full: return "full";
        case AblationMode::zero_kernel: return "zero_kernel";
        case AblationMode::derain_only: return "derain_only";
    }
    return "unknown";
}

AblationMode parse_mode(std::string_view text) {
    if (text == "full") {
        return AblationMode::full;
    }
    if (text == "zero-kernel" || text == "zero_kernel") {
        return AblationMode::zero_kernel;
    }
    if (text == "derain-only" || text == "derain_only") {
        return AblationMode::derain_only;
    }
    throw std::invalid_argument(fmt::format("unknown mode '{}'", text));
}

nn::NetSpec param_net_spec() {
    using namespace nn::layer;
    nn::NetSpec spec;
    int in = 3;
    for (int out : {16, 32, 64, 64}) {
        spec.push_back(conv(in, out));
        spec.push_back(relu(out));
        spec.push_back(mean_pool2(out));
        in = out;
    }
    const int side = img::kPatchSize / 16;
    spec.push_back(fc(side * side * in, 64));
    spec.push_back(relu(64));
    spec.push_back(fc(64, 2));
    return spec;
}

nn::NetSpec derain_net_spec(int external_depth, int depth, int filters) {
    if (depth < 4 || depth % 2 != 0) {
        throw std::invalid_argument(
            fmt::format("derain depth must be even and >= 4, got {}", depth));
    }
    if (filters < 1 || external_depth < 1) {
        throw std::invalid_argument("derain net needs positive filters and guidance depth");
    }
    using namespace nn::layer;
    const int f = filters;
    nn::NetSpec spec{conv(3, f), relu(f), concat_external(f, external_depth),
                     conv(f + external_depth, f), batchnorm(f), relu(f)};
    for (int block = 0; block < (depth - 4) / 2; ++block) {
        spec.push_back(residual_begin(f));
        for (int k = 0; k < 2; ++k) {
            spec.push_back(conv(f, f));
            spec.push_back(batchnorm(f));
            spec.push_back(relu(f));
        }
        spec.push_back(residual_end(f));
    }
    spec.push_back(conv(f, f));
    spec.push_back(batchnorm(f));
    spec.push_back(relu(f));
    spec.push_back(conv(f, 3));
    return spec;
}

std::array<double, 2> normalize_params(double theta, double length) {
    return {(theta - rain::kThetaMin) / (rain::kThetaMax - rain::kThetaMin),
            (length - rain::kLengthMin) / (rain::kLengthMax - rain::kLengthMin)};
}

std::array<double, 2> denormalize_params(std::array<double, 2> normalized) {
    return {rain::kThetaMin + normalized[0] * (rain::kThetaMax - rain::kThetaMin),
            rain::kLengthMin + normalized[1] * (rain::kLengthMax - rain::kLengthMin)};
}

ImageTensor to_rgb(const ImageTensor& image) {
    if (image.channels() == 3) {
        return image;
    }
    if (image.channels() != 1) {
        throw std::invalid_argument(
            fmt::format("expected a gray or RGB image, got {} channels", image.channels()));
    }
    ImageTensor out(image.height(), image.width(), 3);
    for (int c = 0; c < 3; ++c) {
        out.set_channel(c, image);
    }
    return out;
}

Dataset build_training_set(std::span<const ImageTensor> clean, int count, std::uint64_t seed,
                           const kspace::PcaBasis& pca, const decomp::GuidedFilterConfig& filter) {
    if (count < 0) {
        throw std::invalid_argument("sample count must be non-negative");
    }
    Dataset data;
    if (count == 0) {
        return data;
    }
    if (clean.empty()) {
        throw std::invalid_argument("training corpus is empty");
    }
    for (const auto& image : clean) {
        if (image.height() < img::kPatchSize || image.width() < img::kPatchSize) {
            throw std::invalid_argument(fmt::format("training image {}x{} smaller than {}",
                                                    image.height(), image.width(),
                                                    img::kPatchSize));
        }
    }
    const int p = img::kPatchSize;
    data.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        auto crop_rng = make_rng(seed, Stream::crop, static_cast<std::uint64_t>(i));
        auto param_rng = make_rng(seed, Stream::params, static_cast<std::uint64_t>(i));
        const auto& source = clean[std::uniform_int_distribution<std::size_t>(
            0, clean.size() - 1)(crop_rng)];
        const int row = std::uniform_int_distribution<int>(0, source.height() - p)(crop_rng);
        const int col = std::uniform_int_distribution<int>(0, source.width() - p)(crop_rng);
        const auto background = to_rgb(source.crop(row, col, p, p));

        TrainingSample s;
        s.params = rain::sample_rain_params(param_rng);
        auto synthetic = rain::synthesize_rainy(background, s.params);
        s.texture = decomp::split_texture(synthetic.rainy, filter).texture;
        s.label = normalize_params(s.params.theta, s.params.length);
        s.streaks = synthetic.rainy - background;
        s.coeffs = kspace::project(synthetic.kernel, pca);
        data.push_back(std::move(s));
    }
    return data;
}

namespace {

// Consecutive index groups of `batch`; a trailing singleton joins the
// previous group because batchnorm needs two samples.
std::vector<std::vector<int>> make_batches(const std::vector<int>& order, int batch) {
    std::vector<std::vector<int>> batches;
    for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(batch)) {
        const auto end = std::min(order.size(), i + static_cast<std::size_t>(batch));
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    if (batches.size() >= 2 && batches.back().size() == 1) {
        batches[batches.size() - 2].push_back(batches.back().front());
        batches.pop_back();
    }
    return batches;
}

nn::Tensor4 stack_images(const std::vector<const ImageTensor*>& images) {
    const auto& first = *images.front();
    nn::Tensor4 out(static_cast<int>(images.size()), first.height(), first.width(),
                    first.channels());
    for (std::size_t n = 0; n < images.size(); ++n) {
        const auto src = images[n]->data();
        std::copy(src.begin(), src.end(), out.sample(static_cast<int>(n)).begin());
    }
    return out;
}

// One supervised problem: inputs, targets and optional guidance per index.
struct Problem {
    const nn::NetSpec& spec;
    std::function<nn::Tensor4(const std::vector<int>&)> inputs;
    std::function<nn::Tensor4(const std::vector<int>&)> targets;
    std::function<std::optional<nn::ConstantChannels>(const std::vector<int>&)> guidance;
};

TrainResult run_training(const Problem& problem, std::size_t sample_count, const TrainConfig& cfg,
                         std::uint64_t init_index, const EpochCallback& on_epoch) {
    if (sample_count == 0) {
        throw std::invalid_argument("training set is empty");
    }
    if (cfg.epochs < 0 || cfg.batch < 1 || !(cfg.learning_rate > 0.0)) {
        throw std::invalid_argument("invalid training configuration");
    }
    auto init_rng = make_rng(cfg.seed, Stream::init, init_index);
    TrainResult result;
    result.model.spec = problem.spec;
    result.model.state = nn::init_state(problem.spec, init_rng);
    auto& state = result.model.state;
    const nn::AdamConfig adam{cfg.learning_rate};
    const nn::BatchNormConfig bn{};

    std::vector<int> order(sample_count);
    std::iota(order.begin(), order.end(), 0);

    auto step_loss = [&](const std::vector<int>& batch, bool update) {
        const auto x = problem.inputs(batch);
        const auto target = problem.targets(batch);
        const auto guidance = problem.guidance(batch);
        const auto* ext = guidance ? &*guidance : nullptr;
        auto trace = nn::forward(problem.spec, state, x, ext, nn::Mode::train, bn);
        auto loss = nn::frobenius_loss(trace.output, target);
        if (!std::isfinite(loss.value)) {
            throw DivergenceError(fmt::format("loss became non-finite ({})", loss.value));
        }
        if (update) {
            auto grads = nn::backward(problem.spec, state, trace, loss.gradient);
            nn::adam_step(state, grads.params, adam);
            nn::commit_batch_statistics(state, problem.spec, trace, bn);
        }
        return loss.value;
    };

    // Initial loss: batch statistics, no parameter or running-stat updates.
    {
        double total = 0.0;
        std::size_t seen = 0;
        for (const auto& batch : make_batches(order, cfg.batch)) {
            total += step_loss(batch, false) * static_cast<double>(batch.size());
            seen += batch.size();
        }
        result.loss_history.push_back(total / static_cast<double>(seen));
    }

    auto shuffle_rng = make_rng(cfg.seed, Stream::shuffle, init_index);
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double total = 0.0;
        std::size_t seen = 0;
        for (const auto& batch : make_batches(order, cfg.batch)) {
            total += step_loss(batch, true) * static_cast<double>(batch.size());
            seen += batch.size();
        }
        const double mean = total / static_cast<double>(seen);
        result.loss_history.push_back(mean);
        if (on_epoch) {
            on_epoch(epoch, mean);
        }
    }
    return result;
}

std::vector<const ImageTensor*> pick(const Dataset& data, const std::vector<int>& idx,
                                     ImageTensor TrainingSample::*field) {
    std::vector<const ImageTensor*> out;
    out.reserve(idx.size());
    for (int i : idx) {
        out.push_back(&(data[static_cast<std::size_t>(i)].*field));
    }
    return out;
}

}  // namespace

TrainResult train_param_net(const Dataset& data, const TrainConfig& cfg,
                            const EpochCallback& on_epoch) {
    const auto spec = param_net_spec();
    Problem problem{
        spec,
        [&](const std::vector<int>& idx) {
            return stack_images(pick(data, idx, &TrainingSample::texture));
        },
        [&](const std::vector<int>& idx) {
            nn::Tensor4 t(static_cast<int>(idx.size()), 1, 1, 2);
            for (std::size_t n = 0; n < idx.size(); ++n) {
                const auto& label = data[static_cast<std::size_t>(idx[n])].label;
                t.at(static_cast<int>(n), 0, 0, 0) = label[0];
                t.at(static_cast<int>(n), 0, 0, 1) = label[1];
            }
            return t;
        },
        [](const std::vector<int>&) { return std::optional<nn::ConstantChannels>{}; },
    };
    auto result = run_training(problem, data.size(), cfg, 0, on_epoch);
    result.model.metadata = {{"net", "param"}, {"seed", std::to_string(cfg.seed)}};
    return result;
}

TrainResult train_derain_net(const Dataset& data, int external_depth, const TrainConfig& cfg,
                             const EpochCallback& on_epoch) {
    for (const auto& s : data) {
        if (s.coeffs.size() != static_cast<std::size_t>(external_depth)) {
            throw std::invalid_argument(
                fmt::format("sample has {} kernel coefficients, network expects {}",
                            s.coeffs.size(), external_depth));
        }
    }
    const auto spec = derain_net_spec(external_depth, cfg.depth, cfg.filters);
    const bool guided = cfg.mode == AblationMode::full;
    Problem problem{
        spec,
        [&](const std::vector<int>& idx) {
            return stack_images(pick(data, idx, &TrainingSample::texture));
        },
        [&](const std::vector<int>& idx) {
            return stack_images(pick(data, idx, &TrainingSample::streaks));
        },
        [&](const std::vector<int>& idx) {
            nn::ConstantChannels maps{static_cast<int>(idx.size()), external_depth, {}};
            maps.values.assign(idx.size() * static_cast<std::size_t>(external_depth), 0.0);
            if (guided) {
                for (std::size_t n = 0; n < idx.size(); ++n) {
                    const auto& c = data[static_cast<std::size_t>(idx[n])].coeffs;
                    std::copy(c.begin(), c.end(),
                              maps.values.begin() +
                                  static_cast<std::ptrdiff_t>(n * external_depth));
                }
            }
            return std::optional<nn::ConstantChannels>(std::move(maps));
        },
    };
    // full and zero_kernel start from the same weights so they form a
    // controlled pair; derain_only is an independently initialized model.
    const std::uint64_t init_index = cfg.mode == AblationMode::derain_only ? 1 : 0;
    auto result = run_training(problem, data.size(), cfg, init_index, on_epoch);
    result.model.metadata = {{"net", "derain"},
                             {"mode", std::string(to_string(cfg.mode))},
                             {"seed", std::to_string(cfg.seed)},
                             {"depth", std::to_string(cfg.depth)},
                             {"filters", std::to_string(cfg.filters)}};
    return result;
}

KernelEstimate kernel_from_output(std::array<double, 2> network_output) {
    for (double& v : network_output) {
        v = std::clamp(v, 0.0, 1.0);
    }
    const auto params = denormalize_params(network_output);
    return {params[0], params[1], rain::make_motion_kernel(params[0], params[1], rain::kKernelSize)};
}

std::vector<KernelEstimate> estimate_kernels(std::span<const ImageTensor> texture_patches,
                                             const nn::Checkpoint& param_net) {
    std::vector<KernelEstimate> out;
    out.reserve(texture_patches.size());
    constexpr std::size_t kChunk = 32;
    for (std::size_t start = 0; start < texture_patches.size(); start += kChunk) {
        const auto end = std::min(texture_patches.size(), start + kChunk);
        std::vector<const ImageTensor*> chunk;
        for (std::size_t i = start; i < end; ++i) {
            chunk.push_back(&texture_patches[i]);
        }
        const auto y = nn::infer(param_net.spec, param_net.state, stack_images(chunk));
        if (y.sample_size() != 2) {
            throw nn::ShapeError("parameter network must produce two outputs");
        }
        for (int n = 0; n < y.batch(); ++n) {
            out.push_back(kernel_from_output({y.at(n, 0, 0, 0), y.at(n, 0, 0, 1)}));
        }
    }
    return out;
}

KernelEstimate estimate_kernel(const ImageTensor& texture_patch, const nn::Checkpoint& param_net) {
    return estimate_kernels(std::span(&texture_patch, 1), param_net).front();
}

DerainResult derain_image(const ImageTensor& rainy_input, const nn::Checkpoint& param_net,
                          const nn::Checkpoint& derain_net, const kspace::PcaBasis& pca,
                          AblationMode mode, const decomp::GuidedFilterConfig& filter) {
    const auto rainy = to_rgb(rainy_input);
    const int depth = nn::external_depth(derain_net.spec);
    if (depth != pca.dimension) {
        throw std::invalid_argument(fmt::format(
            "derain net expects {} guidance channels but the basis has {}", depth,
            pca.dimension));
    }
    auto patches = img::extract_patches(rainy, img::kPatchSize, img::kPatchStride);
    std::vector<ImageTensor> textures;
    textures.reserve(patches.size());
    for (const auto& p : patches) {
        textures.push_back(decomp::split_texture(p.tensor, filter).texture);
    }

    nn::ConstantChannels maps{static_cast<int>(patches.size()), depth, {}};
    maps.values.assign(patches.size() * static_cast<std::size_t>(depth), 0.0);
    if (mode == AblationMode::full) {
        const auto kernels = estimate_kernels(textures, param_net);
        for (std::size_t i = 0; i < kernels.size(); ++i) {
            const auto coeffs = kspace::project(kernels[i].kernel, pca);
            std::copy(coeffs.begin(), coeffs.end(),
                      maps.values.begin() + static_cast<std::ptrdiff_t>(i * depth));
        }
    }

    constexpr std::size_t kChunk = 16;
    std::vector<img::Patch> streak_patches;
    streak_patches.reserve(patches.size());
    for (std::size_t start = 0; start < patches.size(); start += kChunk) {
        const auto end = std::min(patches.size(), start + kChunk);
        std::vector<const ImageTensor*> chunk;
        for (std::size_t i = start; i < end; ++i) {
            chunk.push_back(&textures[i]);
        }
        nn::ConstantChannels chunk_maps{static_cast<int>(end - start), depth, {}};
        chunk_maps.values.assign(maps.values.begin() + static_cast<std::ptrdiff_t>(start * depth),
                                 maps.values.begin() + static_cast<std::ptrdiff_t>(end * depth));
        const auto y = nn::infer(derain_net.spec, derain_net.state, stack_images(chunk),
                                 &chunk_maps);
        for (std::size_t i = start; i < end; ++i) {
            const auto s = y.sample(static_cast<int>(i - start));
            streak_patches.push_back({patches[i].row, patches[i].col,
                                      ImageTensor(y.height(), y.width(), y.channels(),
                                                  std::vector<double>(s.begin(), s.end()))});
        }
    }
    auto streaks = img::stitch_patches(streak_patches, rainy.height(), rainy.width());
    for (double& v : streaks.data()) {
        v = std::max(v, 0.0);
    }
    auto derained = img::clamp01(rainy - streaks);
    return {std::move(derained), std::move(streaks)};
}

}  // namespace kgcnn::pipeline
