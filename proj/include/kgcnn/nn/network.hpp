#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "kgcnn/nn/layers.hpp"
#include "kgcnn/nn/tensor.hpp"
#include "kgcnn/random.hpp"

namespace kgcnn::nn {

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Stable numeric codes; they are written into checkpoints.
enum class LayerKind : std::uint8_t {
    conv3x3 = 0,
    relu = 1,
    batchnorm = 2,
    fully_connected = 3,
    residual_begin = 4,
    residual_end = 5,
    concat_external = 6,
    mean_pool2 = 7,
};

const char* to_string(LayerKind kind);

/// For fully_connected, in_channels is the flattened per-sample input size.
/// For concat_external, out_channels - in_channels is the external depth.
struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    int in_channels = 0;
    int out_channels = 0;

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

using NetSpec = std::vector<LayerSpec>;

namespace layer {
inline LayerSpec conv(int in, int out) { return {LayerKind::conv3x3, in, out}; }
inline LayerSpec relu(int c) { return {LayerKind::relu, c, c}; }
inline LayerSpec batchnorm(int c) { return {LayerKind::batchnorm, c, c}; }
inline LayerSpec fc(int in, int out) { return {LayerKind::fully_connected, in, out}; }
inline LayerSpec residual_begin(int c) { return {LayerKind::residual_begin, c, c}; }
inline LayerSpec residual_end(int c) { return {LayerKind::residual_end, c, c}; }
inline LayerSpec concat_external(int c, int depth) {
    return {LayerKind::concat_external, c, c + depth};
}
inline LayerSpec mean_pool2(int c) { return {LayerKind::mean_pool2, c, c}; }
}  // namespace layer

/// Throws ShapeError on inconsistent channel chains, unbalanced residual
/// markers or residual joins with mismatched widths.
void validate(const NetSpec& spec);

std::size_t parameter_count(const NetSpec& spec);

/// Number of external channels the spec consumes (0 without concat_external).
int external_depth(const NetSpec& spec);

struct Parameter {
    std::vector<double> value;
    std::vector<double> first_moment;
    std::vector<double> second_moment;

    explicit Parameter(std::vector<double> v = {})
        : value(std::move(v)), first_moment(value.size(), 0.0), second_moment(value.size(), 0.0) {}
};

/// conv3x3 / fully_connected: {weight, bias}. batchnorm: {gamma, beta} plus
/// running statistics. Other kinds hold nothing.
struct LayerState {
    std::vector<Parameter> params;
    std::vector<double> running_mean;
    std::vector<double> running_var;
};

struct NetState {
    std::vector<LayerState> layers;
    std::int64_t step = 0;
};

/// He-normal weights (std sqrt(2 / fan_in)), zero biases, unit batchnorm
/// scale and zero shift, running mean 0 and variance 1.
NetState init_state(const NetSpec& spec, Rng& rng);

/// Gradients indexed [layer][parameter], shaped like NetState values.
using Gradients = std::vector<std::vector<std::vector<double>>>;

Gradients zero_gradients(const NetState& state);

struct BatchNormConfig {
    double epsilon = 1e-5;
    double momentum = 0.9;
};

enum class Mode { train, inference };

struct LayerRecord {
    Tensor4 input;  // conv, fc, relu
    BatchNormCache batchnorm;
    bool tail_fused = false;  // conv consumed constant channels directly
};

/// Output of a forward pass plus what backward needs. Inference-mode traces
/// keep only the output.
struct Trace {
    Mode mode = Mode::inference;
    Tensor4 output;
    std::vector<LayerRecord> records;
    std::optional<ConstantChannels> external;
};

/// Runs the chain. At concat_external the constant channels are appended
/// (the following conv consumes them without materializing when it can);
/// residual_end adds the activation saved at its residual_begin.
Trace forward(const NetSpec& spec, const NetState& state, const Tensor4& input,
              const ConstantChannels* external, Mode mode, const BatchNormConfig& bn = {});

inline Tensor4 infer(const NetSpec& spec, const NetState& state, const Tensor4& input,
                     const ConstantChannels* external = nullptr) {
    return forward(spec, state, input, external, Mode::inference).output;
}

struct BackwardResult {
    Gradients params;
    Tensor4 input;
    std::vector<double> external;  // batch x depth, empty without external
};

BackwardResult backward(const NetSpec& spec, const NetState& state, const Trace& trace,
                        const Tensor4& grad_output);

/// Folds a training trace's batch statistics into the running averages.
void commit_batch_statistics(NetState& state, const NetSpec& spec, const Trace& trace,
                             const BatchNormConfig& bn = {});

struct AdamConfig {
    double learning_rate = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Bias-corrected Adam update of every parameter; increments state.step.
void adam_step(NetState& state, const Gradients& grads, const AdamConfig& cfg = {});

struct Checkpoint {
    NetSpec spec;
    NetState state;
    std::map<std::string, std::string> metadata;
};

/// "KGCN", u32 version, metadata strings, the layer list, then every
/// parameter's values and Adam moments, batchnorm running statistics and the
/// step counter, in spec order. Integers and reals are little-endian.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace kgcnn::nn
