#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <fmt/format.h>
#include <stdexcept>

#include "kgcnn/nn/layers.hpp"

namespace kgcnn::nn {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

constexpr int kTaps = 9;

// Row p = y * W + x holds the 3x3 neighbourhood of pixel p, tap-major.
void im2col(const double* in, int h, int w, int c, double* cols) {
    const std::size_t row_len = static_cast<std::size_t>(kTaps) * c;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double* row = cols + (static_cast<std::size_t>(y) * w + x) * row_len;
            for (int ky = 0; ky < 3; ++ky) {
                const int iy = y + ky - 1;
                for (int kx = 0; kx < 3; ++kx) {
                    const int ix = x + kx - 1;
                    double* dst = row + static_cast<std::size_t>(ky * 3 + kx) * c;
                    if (iy >= 0 && iy < h && ix >= 0 && ix < w) {
                        std::memcpy(dst, in + (static_cast<std::size_t>(iy) * w + ix) * c,
                                    sizeof(double) * c);
                    } else {
                        std::fill(dst, dst + c, 0.0);
                    }
                }
            }
        }
    }
}

void col2im_add(const double* cols, int h, int w, int c, double* out) {
    const std::size_t row_len = static_cast<std::size_t>(kTaps) * c;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double* row = cols + (static_cast<std::size_t>(y) * w + x) * row_len;
            for (int ky = 0; ky < 3; ++ky) {
                const int iy = y + ky - 1;
                if (iy < 0 || iy >= h) {
                    continue;
                }
                for (int kx = 0; kx < 3; ++kx) {
                    const int ix = x + kx - 1;
                    if (ix < 0 || ix >= w) {
                        continue;
                    }
                    const double* src = row + static_cast<std::size_t>(ky * 3 + kx) * c;
                    double* dst = out + (static_cast<std::size_t>(iy) * w + ix) * c;
                    for (int k = 0; k < c; ++k) {
                        dst[k] += src[k];
                    }
                }
            }
        }
    }
}

// Valid output rows/cols for a tap: the input pixel (y + ky - 1) must exist.
struct TapRange {
    int y0, y1, x0, x1;
};

TapRange tap_range(int tap, int h, int w) {
    const int ky = tap / 3;
    const int kx = tap % 3;
    return {std::max(0, 1 - ky), std::min(h, h + 1 - ky), std::max(0, 1 - kx),
            std::min(w, w + 1 - kx)};
}

struct ConvLayout {
    int dense_in;
    int tail_in;
    int out;
    int total_in() const { return dense_in + tail_in; }
    std::size_t index(int tap, int ci, int co) const {
        return (static_cast<std::size_t>(tap) * total_in() + ci) * out + co;
    }
};

ConvLayout check_conv(const Tensor4& x, const std::vector<double>& weight, int out_channels,
                      const ConstantChannels* tail) {
    ConvLayout layout{x.channels(), tail != nullptr ? tail->depth : 0, out_channels};
    if (tail != nullptr && tail->batch != x.batch()) {
        throw std::invalid_argument("conv3x3: constant channel batch mismatch");
    }
    const auto expected = static_cast<std::size_t>(kTaps) * layout.total_in() * out_channels;
    if (weight.size() != expected) {
        throw std::invalid_argument(fmt::format(
            "conv3x3: weight has {} values, expected 3x3x{}x{} = {}", weight.size(),
            layout.total_in(), out_channels, expected));
    }
    return layout;
}

// Weight rows that act on the dense channels, as a (9 * dense_in) x out matrix.
RowMatrix dense_weights(const std::vector<double>& weight, const ConvLayout& l) {
    RowMatrix wd(kTaps * l.dense_in, l.out);
    for (int tap = 0; tap < kTaps; ++tap) {
        for (int ci = 0; ci < l.dense_in; ++ci) {
            for (int co = 0; co < l.out; ++co) {
                wd(tap * l.dense_in + ci, co) = weight[l.index(tap, ci, co)];
            }
        }
    }
    return wd;
}

}  // namespace

Tensor4 conv3x3_forward(const Tensor4& x, const std::vector<double>& weight,
                        const std::vector<double>& bias, int out_channels,
                        const ConstantChannels* tail) {
    const auto l = check_conv(x, weight, out_channels, tail);
    if (bias.size() != static_cast<std::size_t>(out_channels)) {
        throw std::invalid_argument("conv3x3: bias size mismatch");
    }
    const int h = x.height();
    const int w = x.width();
    const int hw = h * w;
    const RowMatrix wd = dense_weights(weight, l);
    const Eigen::Map<const Eigen::RowVectorXd> b(bias.data(), out_channels);

    Tensor4 out(x.batch(), h, w, out_channels);
    RowMatrix cols(hw, kTaps * l.dense_in);
    RowMatrix tail_taps(kTaps, out_channels);
    for (int n = 0; n < x.batch(); ++n) {
        MatrixMap y(out.sample(n).data(), hw, out_channels);
        if (l.dense_in > 0) {
            im2col(x.sample(n).data(), h, w, l.dense_in, cols.data());
            y.noalias() = cols * wd;
        } else {
            y.setZero();
        }
        y.rowwise() += b;
        if (l.tail_in == 0) {
            continue;
        }
        // A constant channel contributes, per tap, c_j * w(tap, j, :) wherever
        // the tap falls inside the image.
        tail_taps.setZero();
        for (int tap = 0; tap < kTaps; ++tap) {
            for (int j = 0; j < l.tail_in; ++j) {
                const double c = tail->at(n, j);
                for (int co = 0; co < out_channels; ++co) {
                    tail_taps(tap, co) += c * weight[l.index(tap, l.dense_in + j, co)];
                }
            }
        }
        for (int tap = 0; tap < kTaps; ++tap) {
            const auto r = tap_range(tap, h, w);
            for (int yy = r.y0; yy < r.y1; ++yy) {
                for (int xx = r.x0; xx < r.x1; ++xx) {
                    y.row(yy * w + xx) += tail_taps.row(tap);
                }
            }
        }
    }
    return out;
}

ConvGrads conv3x3_backward(const Tensor4& x, const std::vector<double>& weight, int out_channels,
                           const Tensor4& grad_out, const ConstantChannels* tail) {
    const auto l = check_conv(x, weight, out_channels, tail);
    const int h = x.height();
    const int w = x.width();
    const int hw = h * w;
    if (grad_out.batch() != x.batch() || grad_out.height() != h || grad_out.width() != w ||
        grad_out.channels() != out_channels) {
        throw std::invalid_argument("conv3x3_backward: gradient shape mismatch");
    }
    const RowMatrix wd = dense_weights(weight, l);

    ConvGrads g;
    g.input = Tensor4(x.batch(), h, w, l.dense_in);
    g.weight.assign(weight.size(), 0.0);
    g.bias.assign(out_channels, 0.0);
    if (l.tail_in > 0) {
        g.tail.assign(static_cast<std::size_t>(x.batch()) * l.tail_in, 0.0);
    }

    RowMatrix dwd = RowMatrix::Zero(kTaps * l.dense_in, out_channels);
    Eigen::RowVectorXd db = Eigen::RowVectorXd::Zero(out_channels);
    RowMatrix cols(hw, kTaps * l.dense_in);
    RowMatrix dcols(hw, kTaps * l.dense_in);
    RowMatrix tap_sums(kTaps, out_channels);
    for (int n = 0; n < x.batch(); ++n) {
        ConstMatrixMap gy(grad_out.sample(n).data(), hw, out_channels);
        db += gy.colwise().sum();
        if (l.dense_in > 0) {
            im2col(x.sample(n).data(), h, w, l.dense_in, cols.data());
            dwd.noalias() += cols.transpose() * gy;
            dcols.noalias() = gy * wd.transpose();
            col2im_add(dcols.data(), h, w, l.dense_in, g.input.sample(n).data());
        }
        if (l.tail_in == 0) {
            continue;
        }
        tap_sums.setZero();
        for (int tap = 0; tap < kTaps; ++tap) {
            const auto r = tap_range(tap, h, w);
            for (int yy = r.y0; yy < r.y1; ++yy) {
                for (int xx = r.x0; xx < r.x1; ++xx) {
                    tap_sums.row(tap) += gy.row(yy * w + xx);
                }
            }
        }
        for (int tap = 0; tap < kTaps; ++tap) {
            for (int j = 0; j < l.tail_in; ++j) {
                const double c = tail->at(n, j);
                double dc = 0.0;
                for (int co = 0; co < out_channels; ++co) {
                    const auto idx = l.index(tap, l.dense_in + j, co);
                    g.weight[idx] += c * tap_sums(tap, co);
                    dc += weight[idx] * tap_sums(tap, co);
                }
                g.tail[static_cast<std::size_t>(n) * l.tail_in + j] += dc;
            }
        }
    }
    for (int tap = 0; tap < kTaps; ++tap) {
        for (int ci = 0; ci < l.dense_in; ++ci) {
            for (int co = 0; co < out_channels; ++co) {
                g.weight[l.index(tap, ci, co)] = dwd(tap * l.dense_in + ci, co);
            }
        }
    }
    std::copy(db.data(), db.data() + out_channels, g.bias.begin());
    return g;
}

Tensor4 relu_forward(const Tensor4& x) {
    Tensor4 out = x;
    for (double& v : out.data()) {
        v = v > 0.0 ? v : 0.0;
    }
    return out;
}

Tensor4 relu_backward(const Tensor4& x, const Tensor4& grad_out) {
    if (!x.same_shape(grad_out)) {
        throw std::invalid_argument("relu_backward: shape mismatch");
    }
    Tensor4 g = grad_out;
    auto xs = x.data();
    auto gs = g.data();
    for (std::size_t i = 0; i < gs.size(); ++i) {
        if (!(xs[i] > 0.0)) {
            gs[i] = 0.0;
        }
    }
    return g;
}

Tensor4 fc_forward(const Tensor4& x, const std::vector<double>& weight,
                   const std::vector<double>& bias, int out_features) {
    const auto in = static_cast<Eigen::Index>(x.sample_size());
    if (weight.size() != static_cast<std::size_t>(in) * out_features ||
        bias.size() != static_cast<std::size_t>(out_features)) {
        throw std::invalid_argument(fmt::format(
            "fully_connected: parameters do not match {} -> {}", in, out_features));
    }
    Tensor4 out(x.batch(), 1, 1, out_features);
    ConstMatrixMap xm(x.data().data(), x.batch(), in);
    ConstMatrixMap wm(weight.data(), in, out_features);
    MatrixMap ym(out.data().data(), x.batch(), out_features);
    ym.noalias() = xm * wm;
    ym.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.data(), out_features);
    return out;
}

FcGrads fc_backward(const Tensor4& x, const std::vector<double>& weight, int out_features,
                    const Tensor4& grad_out) {
    const auto in = static_cast<Eigen::Index>(x.sample_size());
    if (grad_out.batch() != x.batch() ||
        grad_out.sample_size() != static_cast<std::size_t>(out_features)) {
        throw std::invalid_argument("fc_backward: gradient shape mismatch");
    }
    FcGrads g;
    g.input = Tensor4(x.batch(), x.height(), x.width(), x.channels());
    g.weight.assign(weight.size(), 0.0);
    g.bias.assign(out_features, 0.0);
    ConstMatrixMap xm(x.data().data(), x.batch(), in);
    ConstMatrixMap wm(weight.data(), in, out_features);
    ConstMatrixMap gy(grad_out.data().data(), x.batch(), out_features);
    MatrixMap(g.weight.data(), in, out_features).noalias() = xm.transpose() * gy;
    Eigen::Map<Eigen::RowVectorXd>(g.bias.data(), out_features) = gy.colwise().sum();
    MatrixMap(g.input.data().data(), x.batch(), in).noalias() = gy * wm.transpose();
    return g;
}

Tensor4 mean_pool2_forward(const Tensor4& x) {
    if (x.height() % 2 != 0 || x.width() % 2 != 0) {
        throw std::invalid_argument(
            fmt::format("mean_pool2: {}x{} input is not even-sized", x.height(), x.width()));
    }
    Tensor4 out(x.batch(), x.height() / 2, x.width() / 2, x.channels());
    for (int n = 0; n < x.batch(); ++n) {
        for (int y = 0; y < out.height(); ++y) {
            for (int w = 0; w < out.width(); ++w) {
                for (int c = 0; c < x.channels(); ++c) {
                    out.at(n, y, w, c) = 0.25 * (x.at(n, 2 * y, 2 * w, c) +
                                                 x.at(n, 2 * y, 2 * w + 1, c) +
                                                 x.at(n, 2 * y + 1, 2 * w, c) +
                                                 x.at(n, 2 * y + 1, 2 * w + 1, c));
                }
            }
        }
    }
    return out;
}

Tensor4 mean_pool2_backward(const Tensor4& grad_out) {
    Tensor4 g(grad_out.batch(), grad_out.height() * 2, grad_out.width() * 2,
              grad_out.channels());
    for (int n = 0; n < g.batch(); ++n) {
        for (int y = 0; y < g.height(); ++y) {
            for (int w = 0; w < g.width(); ++w) {
                for (int c = 0; c < g.channels(); ++c) {
                    g.at(n, y, w, c) = 0.25 * grad_out.at(n, y / 2, w / 2, c);
                }
            }
        }
    }
    return g;
}

Tensor4 batchnorm_forward_train(const Tensor4& x, const std::vector<double>& gamma,
                                const std::vector<double>& beta, double epsilon,
                                BatchNormCache& cache) {
    const int c = x.channels();
    if (x.batch() < 2) {
        throw std::invalid_argument("batchnorm in training mode needs a batch of at least 2");
    }
    if (gamma.size() != static_cast<std::size_t>(c) || beta.size() != gamma.size()) {
        throw std::invalid_argument("batchnorm: parameter size mismatch");
    }
    const std::size_t count = x.size() / c;
    cache.count = count;
    cache.mean.assign(c, 0.0);
    cache.variance.assign(c, 0.0);
    cache.inv_std.assign(c, 0.0);
    const double* xs = x.data().data();
    double* mean = cache.mean.data();
    double* var = cache.variance.data();
    for (std::size_t p = 0; p < count; ++p) {
        const double* row = xs + p * c;
        for (int k = 0; k < c; ++k) {
            mean[k] += row[k];
        }
    }
    for (int k = 0; k < c; ++k) {
        mean[k] /= static_cast<double>(count);
    }
    for (std::size_t p = 0; p < count; ++p) {
        const double* row = xs + p * c;
        for (int k = 0; k < c; ++k) {
            const double d = row[k] - mean[k];
            var[k] += d * d;
        }
    }
    for (int k = 0; k < c; ++k) {
        var[k] /= static_cast<double>(count);
        cache.inv_std[k] = 1.0 / std::sqrt(var[k] + epsilon);
    }
    cache.normalized = Tensor4(x.batch(), x.height(), x.width(), c);
    Tensor4 out(x.batch(), x.height(), x.width(), c);
    double* xh = cache.normalized.data().data();
    double* ys = out.data().data();
    const double* inv = cache.inv_std.data();
    for (std::size_t p = 0; p < count; ++p) {
        const std::size_t o = p * c;
        for (int k = 0; k < c; ++k) {
            xh[o + k] = (xs[o + k] - mean[k]) * inv[k];
            ys[o + k] = gamma[k] * xh[o + k] + beta[k];
        }
    }
    return out;
}

Tensor4 batchnorm_forward_inference(const Tensor4& x, const std::vector<double>& gamma,
                                    const std::vector<double>& beta,
                                    const std::vector<double>& running_mean,
                                    const std::vector<double>& running_var, double epsilon) {
    const int c = x.channels();
    if (gamma.size() != static_cast<std::size_t>(c) || running_mean.size() != gamma.size()) {
        throw std::invalid_argument("batchnorm: parameter size mismatch");
    }
    std::vector<double> scale(c);
    std::vector<double> shift(c);
    for (int k = 0; k < c; ++k) {
        scale[k] = gamma[k] / std::sqrt(running_var[k] + epsilon);
        shift[k] = beta[k] - scale[k] * running_mean[k];
    }
    Tensor4 out = x;
    double* ys = out.data().data();
    const std::size_t count = out.size() / c;
    for (std::size_t p = 0; p < count; ++p) {
        double* row = ys + p * c;
        for (int k = 0; k < c; ++k) {
            row[k] = scale[k] * row[k] + shift[k];
        }
    }
    return out;
}

BatchNormGrads batchnorm_backward(const BatchNormCache& cache, const std::vector<double>& gamma,
                                  const Tensor4& grad_out) {
    const auto& xh = cache.normalized;
    if (!xh.same_shape(grad_out)) {
        throw std::invalid_argument("batchnorm_backward: gradient shape mismatch");
    }
    const int c = xh.channels();
    BatchNormGrads g;
    g.gamma.assign(c, 0.0);
    g.beta.assign(c, 0.0);
    const double* gy = grad_out.data().data();
    const double* xs = xh.data().data();
    const std::size_t count = xh.size() / c;
    for (std::size_t p = 0; p < count; ++p) {
        const std::size_t o = p * c;
        for (int k = 0; k < c; ++k) {
            g.gamma[k] += gy[o + k] * xs[o + k];
            g.beta[k] += gy[o + k];
        }
    }
    g.input = Tensor4(xh.batch(), xh.height(), xh.width(), c);
    double* gx = g.input.data().data();
    const double n = static_cast<double>(cache.count);
    std::vector<double> scale(c);
    for (int k = 0; k < c; ++k) {
        scale[k] = gamma[k] * cache.inv_std[k] / n;
    }
    for (std::size_t p = 0; p < count; ++p) {
        const std::size_t o = p * c;
        for (int k = 0; k < c; ++k) {
            gx[o + k] = scale[k] * (n * gy[o + k] - g.beta[k] - xs[o + k] * g.gamma[k]);
        }
    }
    return g;
}

LossResult frobenius_loss(const Tensor4& pred, const Tensor4& target) {
    if (!pred.same_shape(target)) {
        throw std::invalid_argument(fmt::format(
            "frobenius_loss: prediction {}x{}x{}x{} vs target {}x{}x{}x{}", pred.batch(),
            pred.height(), pred.width(), pred.channels(), target.batch(), target.height(),
            target.width(), target.channels()));
    }
    if (pred.batch() == 0) {
        throw std::invalid_argument("frobenius_loss: empty batch");
    }
    LossResult r;
    r.gradient = Tensor4(pred.batch(), pred.height(), pred.width(), pred.channels());
    const double inv_batch = 1.0 / pred.batch();
    auto p = pred.data();
    auto t = target.data();
    auto g = r.gradient.data();
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double d = p[i] - t[i];
        sum += d * d;
        g[i] = 2.0 * d * inv_batch;
    }
    r.value = sum * inv_batch;
    return r;
}

}  // namespace kgcnn::nn
