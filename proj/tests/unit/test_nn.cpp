#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "gradient_suite.hpp"
#include "kgcnn/nn/network.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"

using namespace kgcnn;
using namespace kgcnn::nn;

namespace {

void expect_all_below(const std::vector<gradsuite::Check>& checks, double tol) {
    EXPECT_GE(checks.size(), 3u);
    for (const auto& c : checks) {
        EXPECT_LT(c.error, tol) << c.name;
    }
}

void expect_tensors_near(const Tensor4& a, const Tensor4& b, double tol) {
    ASSERT_TRUE(a.same_shape(b));
    for (std::size_t i = 0; i < a.size(); ++i) {
        ASSERT_NEAR(a.data()[i], b.data()[i], tol) << "at " << i;
    }
}

}  // namespace

TEST(Gradients, Conv3x3) { expect_all_below(gradsuite::conv3x3(100), 1e-6); }
TEST(Gradients, Relu) { expect_all_below(gradsuite::relu(200), 1e-6); }
TEST(Gradients, BatchNorm) { expect_all_below(gradsuite::batchnorm(300), 1e-6); }
TEST(Gradients, FullyConnected) { expect_all_below(gradsuite::fully_connected(400), 1e-6); }
TEST(Gradients, MeanPool) { expect_all_below(gradsuite::mean_pool(500), 1e-6); }
TEST(Gradients, FrobeniusLoss) { expect_all_below(gradsuite::frobenius(600), 1e-8); }
TEST(Gradients, WholeNetwork) { expect_all_below(gradsuite::network(700), 1e-6); }

TEST(Conv3x3, IdentityCenterTapCopiesInput) {
    const int c = 3;
    std::vector<double> w(9 * c * c, 0.0);
    for (int k = 0; k < c; ++k) {
        w[(4 * c + k) * c + k] = 1.0;
    }
    const auto x = oracle::random_tensor(2, 5, 6, c, 1);
    EXPECT_EQ(conv3x3_forward(x, w, std::vector<double>(c, 0.0), c), x);
}

TEST(Conv3x3, OnesFilterCountsValidTaps) {
    const Tensor4 x(1, 5, 5, 1, 1.0);
    const auto y = conv3x3_forward(x, std::vector<double>(9, 1.0), {0.0}, 1);
    EXPECT_EQ(y.at(0, 2, 2, 0), 9.0);
    EXPECT_EQ(y.at(0, 0, 0, 0), 4.0);
    EXPECT_EQ(y.at(0, 0, 2, 0), 6.0);
}

TEST(Conv3x3, MatchesDirectLoopOracle) {
    const auto x = oracle::random_tensor(2, 7, 5, 3, 2);
    const auto w = oracle::random_vector(9 * 3 * 4, 3);
    const auto b = oracle::random_vector(4, 4);
    expect_tensors_near(conv3x3_forward(x, w, b, 4), oracle::conv3x3(x, w, b, 4), 1e-12);
}

TEST(Conv3x3, FusedConstantChannelsMatchMaterializedConcat) {
    const auto x = oracle::random_tensor(3, 6, 5, 2, 5);
    ConstantChannels tail{3, 4, oracle::random_vector(12, 6)};
    const auto w = oracle::random_vector(9 * 6 * 3, 7);
    const auto b = oracle::random_vector(3, 8);
    const auto dense = concat_channels(x, tail);
    expect_tensors_near(conv3x3_forward(x, w, b, 3, &tail), conv3x3_forward(dense, w, b, 3),
                        1e-12);

    const auto g = oracle::random_tensor(3, 6, 5, 3, 9);
    const auto fused = conv3x3_backward(x, w, 3, g, &tail);
    const auto plain = conv3x3_backward(dense, w, 3, g);
    for (std::size_t i = 0; i < fused.weight.size(); ++i) {
        ASSERT_NEAR(fused.weight[i], plain.weight[i], 1e-11);
    }
    for (std::size_t i = 0; i < fused.bias.size(); ++i) {
        ASSERT_NEAR(fused.bias[i], plain.bias[i], 1e-12);
    }
    for (int n = 0; n < 3; ++n) {
        for (int y = 0; y < 6; ++y) {
            for (int xx = 0; xx < 5; ++xx) {
                for (int c = 0; c < 2; ++c) {
                    ASSERT_NEAR(fused.input.at(n, y, xx, c), plain.input.at(n, y, xx, c), 1e-12);
                }
            }
        }
        // A constant channel's gradient is the sum of its dense gradient map.
        for (int j = 0; j < 4; ++j) {
            double sum = 0.0;
            for (int y = 0; y < 6; ++y) {
                for (int xx = 0; xx < 5; ++xx) {
                    sum += plain.input.at(n, y, xx, 2 + j);
                }
            }
            ASSERT_NEAR(fused.tail[n * 4 + j], sum, 1e-11);
        }
    }
}

TEST(Conv3x3, RejectsWrongWeightShape) {
    const Tensor4 x(1, 3, 3, 2);
    EXPECT_THROW(conv3x3_forward(x, std::vector<double>(9 * 3 * 2), {0, 0}, 2),
                 std::invalid_argument);
}

TEST(Relu, ClipsNegatives) {
    const Tensor4 x(1, 1, 1, 2, std::vector<double>{-3.0, 2.0});
    const auto y = relu_forward(x);
    EXPECT_EQ(y.at(0, 0, 0, 0), 0.0);
    EXPECT_EQ(y.at(0, 0, 0, 1), 2.0);
}

TEST(BatchNorm, TrainingOutputIsStandardized) {
    const auto x = oracle::random_tensor(4, 5, 5, 3, 10, 3.0);
    const double eps = 1e-5;
    BatchNormCache cache;
    const auto y = batchnorm_forward_train(x, {1, 1, 1}, {0, 0, 0}, eps, cache);
    auto moments = [](const Tensor4& t, int c) {
        double m = 0, v = 0;
        const double count = static_cast<double>(t.size() / 3);
        for (std::size_t i = c; i < t.size(); i += 3) m += t.data()[i];
        m /= count;
        for (std::size_t i = c; i < t.size(); i += 3) v += (t.data()[i] - m) * (t.data()[i] - m);
        return std::pair{m, v / count};
    };
    for (int c = 0; c < 3; ++c) {
        const auto [mx, vx] = moments(x, c);
        const auto [my, vy] = moments(y, c);
        EXPECT_NEAR(my, 0.0, 1e-12);
        // Unit variance up to the epsilon in the denominator.
        EXPECT_NEAR(vy, vx / (vx + eps), 1e-12);
        EXPECT_NEAR(vy, 1.0, 1e-5);
        EXPECT_NEAR(cache.mean[c], mx, 1e-12);
    }
}

TEST(BatchNorm, SingleSampleTrainingIsAnError) {
    BatchNormCache cache;
    EXPECT_THROW(batchnorm_forward_train(Tensor4(1, 2, 2, 1), {1}, {0}, 1e-5, cache),
                 std::invalid_argument);
}

TEST(BatchNorm, RunningStatisticsUseMomentumAndUnbiasedVariance) {
    const NetSpec spec{layer::batchnorm(1)};
    Rng rng(1);
    auto state = init_state(spec, rng);
    const Tensor4 x(2, 1, 1, 1, std::vector<double>{1.0, 3.0});
    const auto trace = forward(spec, state, x, nullptr, Mode::train);
    commit_batch_statistics(state, spec, trace);
    // batch mean 2, biased variance 1, unbiased 2
    EXPECT_NEAR(state.layers[0].running_mean[0], 0.9 * 0.0 + 0.1 * 2.0, 1e-15);
    EXPECT_NEAR(state.layers[0].running_var[0], 0.9 * 1.0 + 0.1 * 2.0, 1e-15);
}

TEST(Frobenius, HandCases) {
    const auto p = oracle::random_tensor(2, 3, 3, 2, 11);
    EXPECT_EQ(frobenius_loss(p, p).value, 0.0);
    const Tensor4 a(1, 2, 2, 1, 1.0);
    const Tensor4 b(1, 2, 2, 1, 0.0);
    const auto r = frobenius_loss(a, b);
    EXPECT_EQ(r.value, 4.0);
    for (double g : r.gradient.data()) {
        EXPECT_EQ(g, 2.0);
    }
    EXPECT_THROW(frobenius_loss(a, Tensor4(1, 2, 1, 1)), std::invalid_argument);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
    const NetSpec spec{layer::conv(2, 2)};
    Rng rng(3);
    auto state = init_state(spec, rng);
    const auto before = state.layers[0].params[0].value;
    adam_step(state, zero_gradients(state));
    EXPECT_EQ(state.layers[0].params[0].value, before);
    EXPECT_EQ(state.step, 1);
}

TEST(Adam, FirstStepMovesByLearningRate) {
    NetState state;
    state.layers.resize(1);
    state.layers[0].params.emplace_back(std::vector<double>{0.5, -0.25});
    Gradients g{{{3.0, -0.2}}};
    adam_step(state, g, {0.01});
    // m_hat = g and v_hat = g^2, so each step is lr * g / (|g| + eps).
    EXPECT_NEAR(state.layers[0].params[0].value[0], 0.5 - 0.01 * 3.0 / (3.0 + 1e-8), 1e-15);
    EXPECT_NEAR(state.layers[0].params[0].value[1], -0.25 + 0.01 * 0.2 / (0.2 + 1e-8), 1e-15);
}

TEST(Adam, MinimizesQuadraticToy) {
    NetState state;
    state.layers.resize(1);
    state.layers[0].params.emplace_back(std::vector<double>{1.0, 1.0});
    for (int i = 0; i < 200; ++i) {
        const auto& w = state.layers[0].params[0].value;
        adam_step(state, Gradients{{{2 * w[0], 2 * w[1]}}}, {0.1});
    }
    const auto& w = state.layers[0].params[0].value;
    EXPECT_LT(std::hypot(w[0], w[1]), 1e-2);
}

TEST(Forward, EmptySpecIsIdentity) {
    const auto x = oracle::random_tensor(2, 3, 3, 2, 12);
    EXPECT_EQ(infer({}, {}, x), x);
}

TEST(Forward, ZeroResidualBranchIsIdentity) {
    const NetSpec spec{layer::residual_begin(3), layer::conv(3, 3), layer::residual_end(3)};
    Rng rng(4);
    auto state = init_state(spec, rng);
    std::fill(state.layers[1].params[0].value.begin(), state.layers[1].params[0].value.end(), 0.0);
    const auto x = oracle::random_tensor(2, 4, 4, 3, 13);
    EXPECT_EQ(infer(spec, state, x), x);
}

TEST(Forward, FullDepthDerainShape) {
    using namespace layer;
    NetSpec spec{conv(3, 36), relu(36), concat_external(36, 162), conv(198, 36), batchnorm(36),
                 relu(36)};
    for (int b = 0; b < 11; ++b) {
        spec.push_back(residual_begin(36));
        for (int k = 0; k < 2; ++k) {
            spec.insert(spec.end(), {conv(36, 36), batchnorm(36), relu(36)});
        }
        spec.push_back(residual_end(36));
    }
    spec.insert(spec.end(), {conv(36, 36), batchnorm(36), relu(36), conv(36, 3)});
    Rng rng(5);
    const auto state = init_state(spec, rng);
    ConstantChannels maps{1, 162, std::vector<double>(162, 0.01)};
    const auto y = infer(spec, state, Tensor4(1, 64, 64, 3, 0.5), &maps);
    EXPECT_EQ(y.batch(), 1);
    EXPECT_EQ(y.height(), 64);
    EXPECT_EQ(y.width(), 64);
    EXPECT_EQ(y.channels(), 3);
}

TEST(Forward, InferenceIsPerSampleIndependent) {
    using namespace layer;
    const NetSpec spec{conv(2, 4), batchnorm(4), relu(4), conv(4, 1)};
    Rng rng(6);
    auto state = init_state(spec, rng);
    state.layers[1].running_mean = {0.1, -0.2, 0.3, 0.0};
    state.layers[1].running_var = {1.5, 0.5, 2.0, 1.0};
    const auto batch = oracle::random_tensor(3, 4, 4, 2, 14);
    const auto all = infer(spec, state, batch);
    for (int n = 0; n < 3; ++n) {
        Tensor4 one(1, 4, 4, 2, std::vector<double>(batch.sample(n).begin(), batch.sample(n).end()));
        const auto single = infer(spec, state, one);
        for (std::size_t i = 0; i < single.size(); ++i) {
            EXPECT_EQ(single.data()[i], all.sample(n)[i]);
        }
    }
}

TEST(Forward, ShapeErrors) {
    using namespace layer;
    EXPECT_THROW(validate({conv(3, 4), relu(5)}), ShapeError);
    EXPECT_THROW(validate({residual_begin(3)}), ShapeError);
    EXPECT_THROW(validate({residual_end(3)}), ShapeError);
    EXPECT_THROW(validate({residual_begin(3), conv(3, 4), residual_end(4)}), ShapeError);
    EXPECT_THROW(validate({concat_external(3, 2), conv(5, 5), concat_external(5, 1)}), ShapeError);

    const NetSpec spec{conv(2, 2), concat_external(2, 3), conv(5, 1)};
    Rng rng(7);
    const auto state = init_state(spec, rng);
    const Tensor4 x(2, 3, 3, 2);
    EXPECT_THROW(infer(spec, state, x), ShapeError);
    ConstantChannels wrong{2, 4, std::vector<double>(8)};
    EXPECT_THROW(infer(spec, state, x, &wrong), ShapeError);
    EXPECT_THROW(infer(spec, state, Tensor4(2, 3, 3, 3)), ShapeError);
    const NetSpec plain{conv(2, 2)};
    ConstantChannels extra{2, 3, std::vector<double>(6)};
    EXPECT_THROW(infer(plain, init_state(plain, rng), x, &extra), ShapeError);
}

TEST(Init, HeNormalScaleAndBatchNormDefaults) {
    const NetSpec spec{layer::conv(50, 40), layer::batchnorm(40)};
    Rng rng(8);
    const auto s = init_state(spec, rng);
    double sq = 0;
    for (double v : s.layers[0].params[0].value) sq += v * v;
    const double sd = std::sqrt(sq / s.layers[0].params[0].value.size());
    EXPECT_NEAR(sd, std::sqrt(2.0 / 450.0), 0.05 * std::sqrt(2.0 / 450.0));
    for (double v : s.layers[0].params[1].value) EXPECT_EQ(v, 0.0);
    for (double v : s.layers[1].params[0].value) EXPECT_EQ(v, 1.0);
    for (double v : s.layers[1].params[1].value) EXPECT_EQ(v, 0.0);
    for (double v : s.layers[1].running_var) EXPECT_EQ(v, 1.0);
}

TEST(ParameterCount, CountsWeightsBiasesAndScales) {
    using namespace layer;
    const NetSpec spec{conv(3, 4), batchnorm(4), relu(4), fc(64, 2)};
    EXPECT_EQ(parameter_count(spec), 9u * 3 * 4 + 4 + 8 + 64 * 2 + 2);
}

TEST(Checkpoint, RoundTripPreservesEverything) {
    using namespace layer;
    const NetSpec spec{conv(2, 3), batchnorm(3), relu(3), residual_begin(3), conv(3, 3),
                       residual_end(3), concat_external(3, 2), conv(5, 1), mean_pool2(1),
                       fc(4, 2)};
    Rng rng(9);
    Checkpoint ckpt{spec, init_state(spec, rng), {{"net", "test"}, {"seed", "9"}}};
    ckpt.state.step = 17;
    ckpt.state.layers[0].params[0].first_moment[3] = 0.25;
    ckpt.state.layers[1].running_mean[2] = -1.5;
    TempDir dir;
    save_checkpoint(ckpt, dir / "c.kgcn");
    const auto back = load_checkpoint(dir / "c.kgcn");
    EXPECT_EQ(back.spec, ckpt.spec);
    EXPECT_EQ(back.metadata, ckpt.metadata);
    EXPECT_EQ(back.state.step, 17);
    for (std::size_t i = 0; i < spec.size(); ++i) {
        const auto& a = back.state.layers[i];
        const auto& b = ckpt.state.layers[i];
        ASSERT_EQ(a.params.size(), b.params.size());
        for (std::size_t k = 0; k < a.params.size(); ++k) {
            EXPECT_EQ(a.params[k].value, b.params[k].value);
            EXPECT_EQ(a.params[k].first_moment, b.params[k].first_moment);
            EXPECT_EQ(a.params[k].second_moment, b.params[k].second_moment);
        }
        EXPECT_EQ(a.running_mean, b.running_mean);
        EXPECT_EQ(a.running_var, b.running_var);
    }
    std::ifstream in(dir / "c.kgcn", std::ios::binary);
    char magic[4];
    in.read(magic, 4);
    EXPECT_EQ(std::string(magic, 4), "KGCN");
}

TEST(Checkpoint, RejectsTruncatedAndPaddedFiles) {
    const NetSpec spec{layer::conv(1, 1)};
    Rng rng(10);
    TempDir dir;
    save_checkpoint({spec, init_state(spec, rng), {}}, dir / "c.kgcn");
    const auto size = std::filesystem::file_size(dir / "c.kgcn");
    std::filesystem::copy_file(dir / "c.kgcn", dir / "short.kgcn");
    std::filesystem::resize_file(dir / "short.kgcn", size - 3);
    EXPECT_THROW(load_checkpoint(dir / "short.kgcn"), std::runtime_error);
    std::filesystem::copy_file(dir / "c.kgcn", dir / "long.kgcn");
    {
        std::ofstream out(dir / "long.kgcn", std::ios::binary | std::ios::app);
        out.put('x');
    }
    EXPECT_THROW(load_checkpoint(dir / "long.kgcn"), std::runtime_error);
}
