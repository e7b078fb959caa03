#pragma once

// Per-layer forward/backward kernels. Every function is pure; parameters
// and gradients are flat vectors in the layouts documented below.

#include <vector>

#include "kgcnn/nn/tensor.hpp"

namespace kgcnn::nn {

/// 3x3 same-size cross-correlation with zero padding.
/// Weights are laid out [ky][kx][in_channel][out_channel]; `tail`, when
/// given, supplies extra constant input channels that follow the dense ones
/// (weight rows for channel index >= x.channels()).
Tensor4 conv3x3_forward(const Tensor4& x, const std::vector<double>& weight,
                        const std::vector<double>& bias, int out_channels,
                        const ConstantChannels* tail = nullptr);

struct ConvGrads {
    Tensor4 input;
    std::vector<double> weight;
    std::vector<double> bias;
    std::vector<double> tail;  // batch x depth, empty without a tail
};

ConvGrads conv3x3_backward(const Tensor4& x, const std::vector<double>& weight,
                           int out_channels, const Tensor4& grad_out,
                           const ConstantChannels* tail = nullptr);

Tensor4 relu_forward(const Tensor4& x);
Tensor4 relu_backward(const Tensor4& x, const Tensor4& grad_out);

/// Fully connected layer over each sample flattened in (h, w, c) order.
/// Weight is in_features x out_features row-major. Output is N x 1 x 1 x out.
Tensor4 fc_forward(const Tensor4& x, const std::vector<double>& weight,
                   const std::vector<double>& bias, int out_features);

struct FcGrads {
    Tensor4 input;
    std::vector<double> weight;
    std::vector<double> bias;
};

FcGrads fc_backward(const Tensor4& x, const std::vector<double>& weight, int out_features,
                    const Tensor4& grad_out);

/// 2x2 average pooling; height and width must be even.
Tensor4 mean_pool2_forward(const Tensor4& x);
Tensor4 mean_pool2_backward(const Tensor4& grad_out);

struct BatchNormCache {
    Tensor4 normalized;              // x_hat
    std::vector<double> mean;        // per channel, batch statistics
    std::vector<double> variance;    // biased
    std::vector<double> inv_std;
    std::size_t count = 0;           // elements per channel
};

/// Training-mode batch normalization; requires batch >= 2.
Tensor4 batchnorm_forward_train(const Tensor4& x, const std::vector<double>& gamma,
                                const std::vector<double>& beta, double epsilon,
                                BatchNormCache& cache);

Tensor4 batchnorm_forward_inference(const Tensor4& x, const std::vector<double>& gamma,
                                    const std::vector<double>& beta,
                                    const std::vector<double>& running_mean,
                                    const std::vector<double>& running_var, double epsilon);

struct BatchNormGrads {
    Tensor4 input;
    std::vector<double> gamma;
    std::vector<double> beta;
};

BatchNormGrads batchnorm_backward(const BatchNormCache& cache, const std::vector<double>& gamma,
                                  const Tensor4& grad_out);

struct LossResult {
    double value = 0.0;
    Tensor4 gradient;
};

/// Mean over the batch of the squared Frobenius norm of (pred - target).
LossResult frobenius_loss(const Tensor4& pred, const Tensor4& target);

}  // namespace kgcnn::nn
