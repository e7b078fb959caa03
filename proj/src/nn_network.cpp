#include <cmath>
#include <fmt/format.h>

#include "kgcnn/nn/network.hpp"

namespace kgcnn::nn {

const char* to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::conv3x3: return "conv3x3";
        case LayerKind::relu: return "relu";
        case LayerKind::batchnorm: return "batchnorm";
        case LayerKind::fully_connected: return "fully_connected";
        case LayerKind::residual_begin: return "residual_begin";
        case LayerKind::residual_end: return "residual_end";
        case LayerKind::concat_external: return "concat_external";
        case LayerKind::mean_pool2: return "mean_pool2";
    }
    return "unknown";
}

void validate(const NetSpec& spec) {
    std::vector<int> open_residuals;
    int concat_layers = 0;
    for (std::size_t i = 0; i < spec.size(); ++i) {
        const auto& l = spec[i];
        auto fail = [&](const std::string& why) {
            throw ShapeError(fmt::format("layer {} ({}): {}", i, to_string(l.kind), why));
        };
        if (l.in_channels <= 0 || l.out_channels <= 0) {
            fail("channel counts must be positive");
        }
        // A fully connected layer's width is the flattened input, which
        // depends on spatial size; it is checked at run time instead.
        if (i > 0 && l.kind != LayerKind::fully_connected &&
            l.in_channels != spec[i - 1].out_channels) {
            fail(fmt::format("expects {} input channels but previous layer produces {}",
                             l.in_channels, spec[i - 1].out_channels));
        }
        switch (l.kind) {
            case LayerKind::conv3x3:
            case LayerKind::fully_connected:
                break;
            case LayerKind::concat_external:
                if (l.out_channels <= l.in_channels) {
                    fail("must add at least one channel");
                }
                if (++concat_layers > 1) {
                    fail("at most one concat_external layer is supported");
                }
                break;
            case LayerKind::residual_begin:
                if (l.in_channels != l.out_channels) {
                    fail("channel count must be preserved");
                }
                open_residuals.push_back(l.in_channels);
                break;
            case LayerKind::residual_end:
                if (l.in_channels != l.out_channels) {
                    fail("channel count must be preserved");
                }
                if (open_residuals.empty()) {
                    fail("residual_end without matching residual_begin");
                }
                if (open_residuals.back() != l.in_channels) {
                    fail(fmt::format("joins {} channels with a {}-channel skip", l.in_channels,
                                     open_residuals.back()));
                }
                open_residuals.pop_back();
                break;
            case LayerKind::relu:
            case LayerKind::batchnorm:
            case LayerKind::mean_pool2:
                if (l.in_channels != l.out_channels) {
                    fail("channel count must be preserved");
                }
                break;
            default:
                fail("unknown layer kind");
        }
    }
    if (!open_residuals.empty()) {
        throw ShapeError("residual_begin without matching residual_end");
    }
}

std::size_t parameter_count(const NetSpec& spec) {
    std::size_t total = 0;
    for (const auto& l : spec) {
        const auto in = static_cast<std::size_t>(l.in_channels);
        const auto out = static_cast<std::size_t>(l.out_channels);
        switch (l.kind) {
            case LayerKind::conv3x3: total += 9 * in * out + out; break;
            case LayerKind::fully_connected: total += in * out + out; break;
            case LayerKind::batchnorm: total += 2 * out; break;
            default: break;
        }
    }
    return total;
}

int external_depth(const NetSpec& spec) {
    for (const auto& l : spec) {
        if (l.kind == LayerKind::concat_external) {
            return l.out_channels - l.in_channels;
        }
    }
    return 0;
}

NetState init_state(const NetSpec& spec, Rng& rng) {
    validate(spec);
    NetState state;
    state.layers.resize(spec.size());
    auto he_normal = [&](std::size_t count, double fan_in) {
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
        std::vector<double> v(count);
        for (double& x : v) {
            x = dist(rng);
        }
        return v;
    };
    for (std::size_t i = 0; i < spec.size(); ++i) {
        const auto& l = spec[i];
        auto& s = state.layers[i];
        const auto in = static_cast<std::size_t>(l.in_channels);
        const auto out = static_cast<std::size_t>(l.out_channels);
        switch (l.kind) {
            case LayerKind::conv3x3:
                s.params.emplace_back(he_normal(9 * in * out, 9.0 * static_cast<double>(in)));
                s.params.emplace_back(std::vector<double>(out, 0.0));
                break;
            case LayerKind::fully_connected:
                s.params.emplace_back(he_normal(in * out, static_cast<double>(in)));
                s.params.emplace_back(std::vector<double>(out, 0.0));
                break;
            case LayerKind::batchnorm:
                s.params.emplace_back(std::vector<double>(out, 1.0));
                s.params.emplace_back(std::vector<double>(out, 0.0));
                s.running_mean.assign(out, 0.0);
                s.running_var.assign(out, 1.0);
                break;
            default:
                break;
        }
    }
    return state;
}

Gradients zero_gradients(const NetState& state) {
    Gradients g(state.layers.size());
    for (std::size_t i = 0; i < state.layers.size(); ++i) {
        for (const auto& p : state.layers[i].params) {
            g[i].emplace_back(p.value.size(), 0.0);
        }
    }
    return g;
}

namespace {

void check_external(const NetSpec& spec, const Tensor4& input, const ConstantChannels* external) {
    const int depth = external_depth(spec);
    if (depth == 0 && external != nullptr) {
        throw ShapeError("external channels given to a network without concat_external");
    }
    if (depth > 0) {
        if (external == nullptr) {
            throw ShapeError("network expects external channels");
        }
        if (external->depth != depth || external->batch != input.batch() ||
            external->values.size() != static_cast<std::size_t>(depth) * input.batch()) {
            throw ShapeError(fmt::format(
                "external channels {}x{} do not match batch {} and depth {}", external->batch,
                external->depth, input.batch(), depth));
        }
    }
}

void add_inplace(Tensor4& a, const Tensor4& b, const char* what) {
    if (!a.same_shape(b)) {
        throw ShapeError(fmt::format("{}: shape mismatch {}x{}x{}x{} vs {}x{}x{}x{}", what,
                                     a.batch(), a.height(), a.width(), a.channels(), b.batch(),
                                     b.height(), b.width(), b.channels()));
    }
    auto x = a.data();
    auto y = b.data();
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] += y[i];
    }
}

}  // namespace

Trace forward(const NetSpec& spec, const NetState& state, const Tensor4& input,
              const ConstantChannels* external, Mode mode, const BatchNormConfig& bn) {
    validate(spec);
    check_external(spec, input, external);
    if (state.layers.size() != spec.size()) {
        throw ShapeError("network state does not match spec");
    }
    const bool train = mode == Mode::train;
    Trace trace;
    trace.mode = mode;
    if (train) {
        trace.records.resize(spec.size());
        if (external != nullptr) {
            trace.external = *external;
        }
    }

    Tensor4 cur = input;
    const ConstantChannels* tail = nullptr;
    std::vector<Tensor4> skips;
    auto materialize = [&] {
        if (tail != nullptr) {
            cur = concat_channels(cur, *tail);
            tail = nullptr;
        }
    };

    for (std::size_t i = 0; i < spec.size(); ++i) {
        const auto& l = spec[i];
        const auto& s = state.layers[i];
        const int channels = cur.channels() + (tail != nullptr ? tail->depth : 0);
        if (l.kind != LayerKind::fully_connected && channels != l.in_channels) {
            throw ShapeError(fmt::format("layer {} ({}) expects {} channels, got {}", i,
                                         to_string(l.kind), l.in_channels, channels));
        }
        LayerRecord* rec = train ? &trace.records[i] : nullptr;
        switch (l.kind) {
            case LayerKind::conv3x3: {
                auto out = conv3x3_forward(cur, s.params[0].value, s.params[1].value,
                                           l.out_channels, tail);
                if (rec != nullptr) {
                    rec->tail_fused = tail != nullptr;
                    rec->input = std::move(cur);
                }
                cur = std::move(out);
                tail = nullptr;
                break;
            }
            case LayerKind::relu: {
                materialize();
                auto out = relu_forward(cur);
                if (rec != nullptr) {
                    rec->input = std::move(cur);
                }
                cur = std::move(out);
                break;
            }
            case LayerKind::batchnorm:
                materialize();
                if (train) {
                    cur = batchnorm_forward_train(cur, s.params[0].value, s.params[1].value,
                                                  bn.epsilon, rec->batchnorm);
                } else {
                    cur = batchnorm_forward_inference(cur, s.params[0].value, s.params[1].value,
                                                      s.running_mean, s.running_var, bn.epsilon);
                }
                break;
            case LayerKind::fully_connected: {
                materialize();
                if (cur.sample_size() != static_cast<std::size_t>(l.in_channels)) {
                    throw ShapeError(fmt::format(
                        "layer {} (fully_connected) expects {} inputs, got {}x{}x{}", i,
                        l.in_channels, cur.height(), cur.width(), cur.channels()));
                }
                auto out = fc_forward(cur, s.params[0].value, s.params[1].value, l.out_channels);
                if (rec != nullptr) {
                    rec->input = std::move(cur);
                }
                cur = std::move(out);
                break;
            }
            case LayerKind::mean_pool2:
                materialize();
                cur = mean_pool2_forward(cur);
                break;
            case LayerKind::residual_begin:
                materialize();
                skips.push_back(cur);
                break;
            case LayerKind::residual_end:
                materialize();
                add_inplace(cur, skips.back(), "residual join");
                skips.pop_back();
                break;
            case LayerKind::concat_external:
                materialize();
                tail = external;
                break;
        }
    }
    materialize();
    trace.output = std::move(cur);
    return trace;
}

BackwardResult backward(const NetSpec& spec, const NetState& state, const Trace& trace,
                        const Tensor4& grad_output) {
    if (trace.mode != Mode::train || trace.records.size() != spec.size()) {
        throw std::invalid_argument("backward needs a training-mode trace of the same spec");
    }
    if (!grad_output.same_shape(trace.output)) {
        throw ShapeError("output gradient does not match network output");
    }
    BackwardResult result;
    result.params = zero_gradients(state);
    Tensor4 g = grad_output;
    std::vector<Tensor4> skip_grads;

    for (std::size_t r = spec.size(); r-- > 0;) {
        const auto& l = spec[r];
        const auto& s = state.layers[r];
        const auto& rec = trace.records[r];
        switch (l.kind) {
            case LayerKind::conv3x3: {
                const ConstantChannels* tail = rec.tail_fused ? &*trace.external : nullptr;
                auto cg = conv3x3_backward(rec.input, s.params[0].value, l.out_channels, g, tail);
                result.params[r][0] = std::move(cg.weight);
                result.params[r][1] = std::move(cg.bias);
                if (tail != nullptr) {
                    result.external = std::move(cg.tail);
                }
                g = std::move(cg.input);
                break;
            }
            case LayerKind::relu:
                g = relu_backward(rec.input, g);
                break;
            case LayerKind::batchnorm: {
                auto bg = batchnorm_backward(rec.batchnorm, s.params[0].value, g);
                result.params[r][0] = std::move(bg.gamma);
                result.params[r][1] = std::move(bg.beta);
                g = std::move(bg.input);
                break;
            }
            case LayerKind::fully_connected: {
                auto fg = fc_backward(rec.input, s.params[0].value, l.out_channels, g);
                result.params[r][0] = std::move(fg.weight);
                result.params[r][1] = std::move(fg.bias);
                g = std::move(fg.input);
                break;
            }
            case LayerKind::mean_pool2:
                g = mean_pool2_backward(g);
                break;
            case LayerKind::residual_end:
                skip_grads.push_back(g);
                break;
            case LayerKind::residual_begin:
                add_inplace(g, skip_grads.back(), "residual gradient");
                skip_grads.pop_back();
                break;
            case LayerKind::concat_external: {
                if (g.channels() == l.out_channels) {
                    // Materialized path: split off the external channels.
                    const int depth = l.out_channels - l.in_channels;
                    Tensor4 dense(g.batch(), g.height(), g.width(), l.in_channels);
                    result.external.assign(static_cast<std::size_t>(g.batch()) * depth, 0.0);
                    for (int n = 0; n < g.batch(); ++n) {
                        for (int y = 0; y < g.height(); ++y) {
                            for (int x = 0; x < g.width(); ++x) {
                                for (int c = 0; c < l.in_channels; ++c) {
                                    dense.at(n, y, x, c) = g.at(n, y, x, c);
                                }
                                for (int j = 0; j < depth; ++j) {
                                    result.external[static_cast<std::size_t>(n) * depth + j] +=
                                        g.at(n, y, x, l.in_channels + j);
                                }
                            }
                        }
                    }
                    g = std::move(dense);
                }
                break;
            }
        }
    }
    result.input = std::move(g);
    return result;
}

void commit_batch_statistics(NetState& state, const NetSpec& spec, const Trace& trace,
                             const BatchNormConfig& bn) {
    if (trace.mode != Mode::train) {
        return;
    }
    for (std::size_t i = 0; i < spec.size(); ++i) {
        if (spec[i].kind != LayerKind::batchnorm) {
            continue;
        }
        const auto& cache = trace.records[i].batchnorm;
        auto& s = state.layers[i];
        const double n = static_cast<double>(cache.count);
        const double unbias = n > 1.0 ? n / (n - 1.0) : 1.0;
        for (std::size_t k = 0; k < s.running_mean.size(); ++k) {
            s.running_mean[k] = bn.momentum * s.running_mean[k] + (1.0 - bn.momentum) * cache.mean[k];
            s.running_var[k] =
                bn.momentum * s.running_var[k] + (1.0 - bn.momentum) * cache.variance[k] * unbias;
        }
    }
}

void adam_step(NetState& state, const Gradients& grads, const AdamConfig& cfg) {
    if (grads.size() != state.layers.size()) {
        throw std::invalid_argument("adam_step: gradient layout does not match state");
    }
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t i = 0; i < grads.size(); ++i) {
        auto& params = state.layers[i].params;
        if (grads[i].size() != params.size()) {
            throw std::invalid_argument("adam_step: gradient layout does not match state");
        }
        for (std::size_t k = 0; k < params.size(); ++k) {
            auto& p = params[k];
            const auto& g = grads[i][k];
            if (g.size() != p.value.size()) {
                throw std::invalid_argument("adam_step: gradient shape does not match parameter");
            }
            for (std::size_t j = 0; j < g.size(); ++j) {
                p.first_moment[j] = cfg.beta1 * p.first_moment[j] + (1.0 - cfg.beta1) * g[j];
                p.second_moment[j] =
                    cfg.beta2 * p.second_moment[j] + (1.0 - cfg.beta2) * g[j] * g[j];
                const double m_hat = p.first_moment[j] / c1;
                const double v_hat = p.second_moment[j] / c2;
                p.value[j] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
            }
        }
    }
}

}  // namespace kgcnn::nn
