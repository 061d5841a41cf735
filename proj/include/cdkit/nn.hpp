#pragma once

#include "cdkit/ops.hpp"

namespace cdkit {

/// Convolution geometry. `output_padding` is meaningful for the transposed
/// convolution only and must stay below the stride there.
struct ConvSpec {
    std::int64_t kernel = 3;
    std::int64_t stride = 1;
    std::int64_t padding = 0;
    std::int64_t output_padding = 0;
    std::int64_t in_channels = 0;
    std::int64_t out_channels = 0;
    bool depthwise = false;

    void validate(bool transposed = false) const {
        if (kernel < 1 || stride < 1 || padding < 0 || output_padding < 0)
            throw std::invalid_argument("conv spec: K,S >= 1 and P,OP >= 0 required");
        if (transposed && output_padding >= stride)
            throw std::invalid_argument("conv spec: output_padding must be < stride for transposed conv");
        if (depthwise && in_channels != out_channels)
            throw std::invalid_argument("conv spec: depthwise requires in_channels == out_channels");
    }

    std::int64_t out_size(std::int64_t in) const {
        if (in + 2 * padding < kernel)
            throw std::invalid_argument("conv: kernel " + std::to_string(kernel) +
                                        " larger than padded input " + std::to_string(in + 2 * padding));
        return (in + 2 * padding - kernel) / stride + 1;
    }

    std::int64_t transposed_out_size(std::int64_t in) const {
        return (in - 1) * stride - 2 * padding + kernel + output_padding;
    }
};

template <typename T>
struct Param {
    std::string name;
    TensorPtr<T> tensor;
};

template <typename T>
using ParamList = std::vector<Param<T>>;

namespace detail {

template <typename T>
struct Rank3Guard {
    // Channels-last spatial ops accept [H,W,C] by viewing it as batch 1.
    TensorPtr<T> x4;
    bool was_rank3 = false;

    Rank3Guard(const TensorPtr<T>& x, const char* op) {
        if (x->rank() == 4) {
            x4 = x;
        } else if (x->rank() == 3) {
            x4 = reshape(x, Shape{1, x->dim(0), x->dim(1), x->dim(2)});
            was_rank3 = true;
        } else {
            throw std::invalid_argument(std::string(op) + ": expected rank 3 or 4 input, got " +
                                        shape_str(x->shape));
        }
    }

    TensorPtr<T> restore(const TensorPtr<T>& y) const {
        if (!was_rank3) return y;
        return reshape(y, Shape{y->dim(1), y->dim(2), y->dim(3)});
    }
};

}  // namespace detail

/// Affine map along the last axis: y = x W + b with W of shape [C_in, C_out].
template <typename T>
TensorPtr<T> linear(const TensorPtr<T>& x, const TensorPtr<T>& weight, const TensorPtr<T>& bias) {
    if (weight->rank() != 2) throw std::invalid_argument("linear: weight must be rank 2");
    const std::int64_t cin = weight->dim(0);
    const std::int64_t cout = weight->dim(1);
    if (x->dim(x->rank() - 1) != cin)
        throw std::invalid_argument("linear: input channels " + std::to_string(x->dim(x->rank() - 1)) +
                                    " != weight C_in " + std::to_string(cin));
    auto flat = reshape(x, Shape{-1, cin});
    auto y = matmul(flat, weight);
    if (bias) y = add_rowwise(y, bias);
    Shape out_shape(x->shape.begin(), x->shape.end() - 1);
    out_shape.push_back(cout);
    return reshape(y, out_shape);
}

/// Cross-correlation over [N,H,W,C_in] (or [H,W,C_in]) with weight
/// [K,K,C_in,C_out] and optional bias [C_out].
template <typename T>
TensorPtr<T> conv2d(const TensorPtr<T>& input, const TensorPtr<T>& weight, const TensorPtr<T>& bias,
                    std::int64_t stride, std::int64_t padding) {
    detail::Rank3Guard<T> g(input, "conv2d");
    auto x = g.x4;
    if (weight->rank() != 4 || weight->dim(0) != weight->dim(1))
        throw std::invalid_argument("conv2d: weight must be [K,K,C_in,C_out]");
    const std::int64_t K = weight->dim(0), Ci = weight->dim(2), Co = weight->dim(3);
    if (x->dim(3) != Ci)
        throw std::invalid_argument("conv2d: input channels " + std::to_string(x->dim(3)) +
                                    " != weight C_in " + std::to_string(Ci));
    ConvSpec spec{K, stride, padding, 0, Ci, Co, false};
    spec.validate();
    const std::int64_t N = x->dim(0), H = x->dim(1), W = x->dim(2);
    const std::int64_t Ho = spec.out_size(H), Wo = spec.out_size(W);

    auto out = Tensor<T>::create({N, Ho, Wo, Co});
    for (std::int64_t n = 0; n < N; ++n) {
        for (std::int64_t oh = 0; oh < Ho; ++oh) {
            for (std::int64_t ow = 0; ow < Wo; ++ow) {
                T* dst = out->data.data() + ((n * Ho + oh) * Wo + ow) * Co;
                if (bias)
                    for (std::int64_t co = 0; co < Co; ++co) dst[co] = bias->data[static_cast<std::size_t>(co)];
                for (std::int64_t kh = 0; kh < K; ++kh) {
                    const std::int64_t ih = oh * stride - padding + kh;
                    if (ih < 0 || ih >= H) continue;
                    for (std::int64_t kw = 0; kw < K; ++kw) {
                        const std::int64_t iw = ow * stride - padding + kw;
                        if (iw < 0 || iw >= W) continue;
                        const T* src = x->data.data() + ((n * H + ih) * W + iw) * Ci;
                        const T* wbase = weight->data.data() + (kh * K + kw) * Ci * Co;
                        for (std::int64_t ci = 0; ci < Ci; ++ci) {
                            const T v = src[ci];
                            const T* wrow = wbase + ci * Co;
                            for (std::int64_t co = 0; co < Co; ++co) dst[co] += v * wrow[co];
                        }
                    }
                }
            }
        }
    }
    detail::record_op<T>("conv2d", {x, weight, bias ? bias : x}, out,
                         [x, weight, bias, out, N, H, W, Ho, Wo, K, Ci, Co, stride, padding] {
        for (std::int64_t n = 0; n < N; ++n) {
            for (std::int64_t oh = 0; oh < Ho; ++oh) {
                for (std::int64_t ow = 0; ow < Wo; ++ow) {
                    const T* g = out->grad.data() + ((n * Ho + oh) * Wo + ow) * Co;
                    if (bias && bias->requires_grad)
                        for (std::int64_t co = 0; co < Co; ++co) bias->grad[static_cast<std::size_t>(co)] += g[co];
                    for (std::int64_t kh = 0; kh < K; ++kh) {
                        const std::int64_t ih = oh * stride - padding + kh;
                        if (ih < 0 || ih >= H) continue;
                        for (std::int64_t kw = 0; kw < K; ++kw) {
                            const std::int64_t iw = ow * stride - padding + kw;
                            if (iw < 0 || iw >= W) continue;
                            const std::int64_t in_at = ((n * H + ih) * W + iw) * Ci;
                            const std::int64_t w_at = (kh * K + kw) * Ci * Co;
                            if (x->requires_grad) {
                                T* dx = x->grad.data() + in_at;
                                for (std::int64_t ci = 0; ci < Ci; ++ci) {
                                    const T* wrow = weight->data.data() + w_at + ci * Co;
                                    T acc = 0;
                                    for (std::int64_t co = 0; co < Co; ++co) acc += g[co] * wrow[co];
                                    dx[ci] += acc;
                                }
                            }
                            if (weight->requires_grad) {
                                const T* src = x->data.data() + in_at;
                                for (std::int64_t ci = 0; ci < Ci; ++ci) {
                                    const T v = src[ci];
                                    T* dwrow = weight->grad.data() + w_at + ci * Co;
                                    for (std::int64_t co = 0; co < Co; ++co) dwrow[co] += v * g[co];
                                }
                            }
                        }
                    }
                }
            }
        }
    });
    return g.restore(out);
}

/// Per-channel 3x3-style convolution: weight [K,K,C], one filter per channel.
template <typename T>
TensorPtr<T> depthwise_conv2d(const TensorPtr<T>& input, const TensorPtr<T>& weight, const TensorPtr<T>& bias,
                              std::int64_t stride, std::int64_t padding) {
    detail::Rank3Guard<T> g(input, "depthwise_conv2d");
    auto x = g.x4;
    if (weight->rank() != 3 || weight->dim(0) != weight->dim(1))
        throw std::invalid_argument("depthwise_conv2d: weight must be [K,K,C]");
    const std::int64_t K = weight->dim(0), C = weight->dim(2);
    if (x->dim(3) != C)
        throw std::invalid_argument("depthwise_conv2d: input channels " + std::to_string(x->dim(3)) +
                                    " != weight C " + std::to_string(C));
    ConvSpec spec{K, stride, padding, 0, C, C, true};
    spec.validate();
    const std::int64_t N = x->dim(0), H = x->dim(1), W = x->dim(2);
    const std::int64_t Ho = spec.out_size(H), Wo = spec.out_size(W);

    auto out = Tensor<T>::create({N, Ho, Wo, C});
    for (std::int64_t n = 0; n < N; ++n) {
        for (std::int64_t oh = 0; oh < Ho; ++oh) {
            for (std::int64_t ow = 0; ow < Wo; ++ow) {
                T* dst = out->data.data() + ((n * Ho + oh) * Wo + ow) * C;
                if (bias)
                    for (std::int64_t c = 0; c < C; ++c) dst[c] = bias->data[static_cast<std::size_t>(c)];
                for (std::int64_t kh = 0; kh < K; ++kh) {
                    const std::int64_t ih = oh * stride - padding + kh;
                    if (ih < 0 || ih >= H) continue;
                    for (std::int64_t kw = 0; kw < K; ++kw) {
                        const std::int64_t iw = ow * stride - padding + kw;
                        if (iw < 0 || iw >= W) continue;
                        const T* src = x->data.data() + ((n * H + ih) * W + iw) * C;
                        const T* wrow = weight->data.data() + (kh * K + kw) * C;
                        for (std::int64_t c = 0; c < C; ++c) dst[c] += src[c] * wrow[c];
                    }
                }
            }
        }
    }
    detail::record_op<T>("depthwise_conv2d", {x, weight, bias ? bias : x}, out,
                         [x, weight, bias, out, N, H, W, Ho, Wo, K, C, stride, padding] {
        for (std::int64_t n = 0; n < N; ++n) {
            for (std::int64_t oh = 0; oh < Ho; ++oh) {
                for (std::int64_t ow = 0; ow < Wo; ++ow) {
                    const T* g = out->grad.data() + ((n * Ho + oh) * Wo + ow) * C;
                    if (bias && bias->requires_grad)
                        for (std::int64_t c = 0; c < C; ++c) bias->grad[static_cast<std::size_t>(c)] += g[c];
                    for (std::int64_t kh = 0; kh < K; ++kh) {
                        const std::int64_t ih = oh * stride - padding + kh;
                        if (ih < 0 || ih >= H) continue;
                        for (std::int64_t kw = 0; kw < K; ++kw) {
                            const std::int64_t iw = ow * stride - padding + kw;
                            if (iw < 0 || iw >= W) continue;
                            const std::int64_t in_at = ((n * H + ih) * W + iw) * C;
                            const std::int64_t w_at = (kh * K + kw) * C;
                            if (x->requires_grad) {
                                T* dx = x->grad.data() + in_at;
                                const T* wrow = weight->data.data() + w_at;
                                for (std::int64_t c = 0; c < C; ++c) dx[c] += g[c] * wrow[c];
                            }
                            if (weight->requires_grad) {
                                const T* src = x->data.data() + in_at;
                                T* dw = weight->grad.data() + w_at;
                                for (std::int64_t c = 0; c < C; ++c) dw[c] += src[c] * g[c];
                            }
                        }
                    }
                }
            }
        }
    });
    return g.restore(out);
}

/// Transposed convolution (scatter form): weight [K,K,C_in,C_out],
/// output size (H-1)*S - 2P + K + OP.
template <typename T>
TensorPtr<T> conv_transpose2d(const TensorPtr<T>& input, const TensorPtr<T>& weight, const TensorPtr<T>& bias,
                              std::int64_t stride, std::int64_t padding, std::int64_t output_padding) {
    detail::Rank3Guard<T> g(input, "conv_transpose2d");
    auto x = g.x4;
    if (weight->rank() != 4 || weight->dim(0) != weight->dim(1))
        throw std::invalid_argument("conv_transpose2d: weight must be [K,K,C_in,C_out]");
    const std::int64_t K = weight->dim(0), Ci = weight->dim(2), Co = weight->dim(3);
    if (x->dim(3) != Ci)
        throw std::invalid_argument("conv_transpose2d: input channels " + std::to_string(x->dim(3)) +
                                    " != weight C_in " + std::to_string(Ci));
    ConvSpec spec{K, stride, padding, output_padding, Ci, Co, false};
    spec.validate(true);
    const std::int64_t N = x->dim(0), H = x->dim(1), W = x->dim(2);
    const std::int64_t Ho = spec.transposed_out_size(H), Wo = spec.transposed_out_size(W);
    if (Ho < 1 || Wo < 1) throw std::invalid_argument("conv_transpose2d: empty output");

    auto out = Tensor<T>::create({N, Ho, Wo, Co});
    if (bias) {
        for (std::int64_t p = 0; p < N * Ho * Wo; ++p) {
            T* dst = out->data.data() + p * Co;
            for (std::int64_t co = 0; co < Co; ++co) dst[co] = bias->data[static_cast<std::size_t>(co)];
        }
    }
    for (std::int64_t n = 0; n < N; ++n) {
        for (std::int64_t h = 0; h < H; ++h) {
            for (std::int64_t w = 0; w < W; ++w) {
                const T* src = x->data.data() + ((n * H + h) * W + w) * Ci;
                for (std::int64_t kh = 0; kh < K; ++kh) {
                    const std::int64_t oh = h * stride - padding + kh;
                    if (oh < 0 || oh >= Ho) continue;
                    for (std::int64_t kw = 0; kw < K; ++kw) {
                        const std::int64_t ow = w * stride - padding + kw;
                        if (ow < 0 || ow >= Wo) continue;
                        T* dst = out->data.data() + ((n * Ho + oh) * Wo + ow) * Co;
                        const T* wbase = weight->data.data() + (kh * K + kw) * Ci * Co;
                        for (std::int64_t ci = 0; ci < Ci; ++ci) {
                            const T v = src[ci];
                            const T* wrow = wbase + ci * Co;
                            for (std::int64_t co = 0; co < Co; ++co) dst[co] += v * wrow[co];
                        }
                    }
                }
            }
        }
    }
    detail::record_op<T>("conv_transpose2d", {x, weight, bias ? bias : x}, out,
                         [x, weight, bias, out, N, H, W, Ho, Wo, K, Ci, Co, stride, padding] {
        if (bias && bias->requires_grad) {
            for (std::int64_t p = 0; p < N * Ho * Wo; ++p) {
                const T* g = out->grad.data() + p * Co;
                for (std::int64_t co = 0; co < Co; ++co) bias->grad[static_cast<std::size_t>(co)] += g[co];
            }
        }
        for (std::int64_t n = 0; n < N; ++n) {
            for (std::int64_t h = 0; h < H; ++h) {
                for (std::int64_t w = 0; w < W; ++w) {
                    const std::int64_t in_at = ((n * H + h) * W + w) * Ci;
                    for (std::int64_t kh = 0; kh < K; ++kh) {
                        const std::int64_t oh = h * stride - padding + kh;
                        if (oh < 0 || oh >= Ho) continue;
                        for (std::int64_t kw = 0; kw < K; ++kw) {
                            const std::int64_t ow = w * stride - padding + kw;
                            if (ow < 0 || ow >= Wo) continue;
                            const T* g = out->grad.data() + ((n * Ho + oh) * Wo + ow) * Co;
                            const std::int64_t w_at = (kh * K + kw) * Ci * Co;
                            if (x->requires_grad) {
                                T* dx = x->grad.data() + in_at;
                                for (std::int64_t ci = 0; ci < Ci; ++ci) {
                                    const T* wrow = weight->data.data() + w_at + ci * Co;
                                    T acc = 0;
                                    for (std::int64_t co = 0; co < Co; ++co) acc += g[co] * wrow[co];
                                    dx[ci] += acc;
                                }
                            }
                            if (weight->requires_grad) {
                                const T* src = x->data.data() + in_at;
                                for (std::int64_t ci = 0; ci < Ci; ++ci) {
                                    const T v = src[ci];
                                    T* dwrow = weight->grad.data() + w_at + ci * Co;
                                    for (std::int64_t co = 0; co < Co; ++co) dwrow[co] += v * g[co];
                                }
                            }
                        }
                    }
                }
            }
        }
    });
    return g.restore(out);
}

/// Batch norm over [N,H,W,C]. Training mode normalizes with batch statistics
/// (biased variance) and updates running stats in place; eval mode uses the
/// running stats. Running tensors are buffers, never differentiated.
template <typename T>
TensorPtr<T> batchnorm2d(const TensorPtr<T>& input, const TensorPtr<T>& gamma, const TensorPtr<T>& beta,
                         const TensorPtr<T>& running_mean, const TensorPtr<T>& running_var,
                         bool training, double momentum = 0.1, double eps = 1e-5) {
    detail::Rank3Guard<T> guard(input, "batchnorm2d");
    auto x = guard.x4;
    const std::int64_t C = x->dim(3);
    if (gamma->numel() != C || beta->numel() != C || running_mean->numel() != C || running_var->numel() != C)
        throw std::invalid_argument("batchnorm2d: per-channel state length != C");
    const std::int64_t rows = x->numel() / C;

    std::vector<T> mean(static_cast<std::size_t>(C), T(0));
    std::vector<T> var(static_cast<std::size_t>(C), T(0));
    if (training) {
        for (std::int64_t r = 0; r < rows; ++r) {
            const T* src = x->data.data() + r * C;
            for (std::int64_t c = 0; c < C; ++c) mean[static_cast<std::size_t>(c)] += src[c];
        }
        for (std::int64_t c = 0; c < C; ++c) mean[static_cast<std::size_t>(c)] /= static_cast<T>(rows);
        for (std::int64_t r = 0; r < rows; ++r) {
            const T* src = x->data.data() + r * C;
            for (std::int64_t c = 0; c < C; ++c) {
                const T d = src[c] - mean[static_cast<std::size_t>(c)];
                var[static_cast<std::size_t>(c)] += d * d;
            }
        }
        for (std::int64_t c = 0; c < C; ++c) var[static_cast<std::size_t>(c)] /= static_cast<T>(rows);
        // Unbiased variance feeds the running estimate when possible.
        const T unbias = rows > 1 ? static_cast<T>(rows) / static_cast<T>(rows - 1) : T(1);
        for (std::int64_t c = 0; c < C; ++c) {
            auto cu = static_cast<std::size_t>(c);
            running_mean->data[cu] = static_cast<T>((1.0 - momentum) * running_mean->data[cu] + momentum * mean[cu]);
            running_var->data[cu] = static_cast<T>((1.0 - momentum) * running_var->data[cu] + momentum * var[cu] * unbias);
        }
    } else {
        for (std::int64_t c = 0; c < C; ++c) {
            mean[static_cast<std::size_t>(c)] = running_mean->data[static_cast<std::size_t>(c)];
            var[static_cast<std::size_t>(c)] = running_var->data[static_cast<std::size_t>(c)];
        }
    }

    std::vector<T> inv_std(static_cast<std::size_t>(C));
    for (std::int64_t c = 0; c < C; ++c)
        inv_std[static_cast<std::size_t>(c)] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(var[static_cast<std::size_t>(c)]) + eps));

    auto out = Tensor<T>::create(x->shape);
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* src = x->data.data() + r * C;
        T* dst = out->data.data() + r * C;
        for (std::int64_t c = 0; c < C; ++c) {
            auto cu = static_cast<std::size_t>(c);
            dst[c] = gamma->data[cu] * (src[c] - mean[cu]) * inv_std[cu] + beta->data[cu];
        }
    }
    detail::record_op<T>("batchnorm2d", {x, gamma, beta}, out,
                         [x, gamma, beta, out, rows, C, mean, inv_std, training] {
        const T n = static_cast<T>(rows);
        std::vector<T> sum_g(static_cast<std::size_t>(C), T(0));
        std::vector<T> sum_gx(static_cast<std::size_t>(C), T(0));
        for (std::int64_t r = 0; r < rows; ++r) {
            const T* g = out->grad.data() + r * C;
            const T* src = x->data.data() + r * C;
            for (std::int64_t c = 0; c < C; ++c) {
                auto cu = static_cast<std::size_t>(c);
                const T xh = (src[c] - mean[cu]) * inv_std[cu];
                sum_g[cu] += g[c];
                sum_gx[cu] += g[c] * xh;
            }
        }
        if (gamma->requires_grad)
            for (std::int64_t c = 0; c < C; ++c) gamma->grad[static_cast<std::size_t>(c)] += sum_gx[static_cast<std::size_t>(c)];
        if (beta->requires_grad)
            for (std::int64_t c = 0; c < C; ++c) beta->grad[static_cast<std::size_t>(c)] += sum_g[static_cast<std::size_t>(c)];
        if (x->requires_grad) {
            for (std::int64_t r = 0; r < rows; ++r) {
                const T* g = out->grad.data() + r * C;
                const T* src = x->data.data() + r * C;
                T* dx = x->grad.data() + r * C;
                for (std::int64_t c = 0; c < C; ++c) {
                    auto cu = static_cast<std::size_t>(c);
                    if (training) {
                        const T xh = (src[c] - mean[cu]) * inv_std[cu];
                        dx[c] += gamma->data[cu] * inv_std[cu] * (g[c] - sum_g[cu] / n - xh * sum_gx[cu] / n);
                    } else {
                        dx[c] += gamma->data[cu] * inv_std[cu] * g[c];
                    }
                }
            }
        }
    });
    return guard.restore(out);
}

/// Layer norm over the last axis followed by the per-channel affine.
template <typename T>
TensorPtr<T> layernorm(const TensorPtr<T>& x, const TensorPtr<T>& gamma, const TensorPtr<T>& beta,
                       double eps = 1e-5) {
    const std::int64_t C = x->dim(x->rank() - 1);
    if (gamma->numel() != C || beta->numel() != C)
        throw std::invalid_argument("layernorm: affine length != last axis " + std::to_string(C));
    const std::int64_t rows = x->numel() / C;

    auto out = Tensor<T>::create(x->shape);
    std::vector<T> inv_std(static_cast<std::size_t>(rows));
    std::vector<T> means(static_cast<std::size_t>(rows));
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* src = x->data.data() + r * C;
        T m = 0;
        for (std::int64_t c = 0; c < C; ++c) m += src[c];
        m /= static_cast<T>(C);
        T v = 0;
        for (std::int64_t c = 0; c < C; ++c) {
            const T d = src[c] - m;
            v += d * d;
        }
        v /= static_cast<T>(C);
        const T is = static_cast<T>(1.0 / std::sqrt(static_cast<double>(v) + eps));
        means[static_cast<std::size_t>(r)] = m;
        inv_std[static_cast<std::size_t>(r)] = is;
        T* dst = out->data.data() + r * C;
        for (std::int64_t c = 0; c < C; ++c)
            dst[c] = gamma->data[static_cast<std::size_t>(c)] * (src[c] - m) * is + beta->data[static_cast<std::size_t>(c)];
    }
    detail::record_op<T>("layernorm", {x, gamma, beta}, out, [x, gamma, beta, out, rows, C, means, inv_std] {
        for (std::int64_t r = 0; r < rows; ++r) {
            const T* g = out->grad.data() + r * C;
            const T* src = x->data.data() + r * C;
            const T m = means[static_cast<std::size_t>(r)];
            const T is = inv_std[static_cast<std::size_t>(r)];
            T sum_g = 0, sum_gx = 0;
            for (std::int64_t c = 0; c < C; ++c) {
                const T gg = g[c] * gamma->data[static_cast<std::size_t>(c)];
                const T xh = (src[c] - m) * is;
                sum_g += gg;
                sum_gx += gg * xh;
            }
            for (std::int64_t c = 0; c < C; ++c) {
                auto cu = static_cast<std::size_t>(c);
                const T xh = (src[c] - m) * is;
                if (gamma->requires_grad) gamma->grad[cu] += g[c] * xh;
                if (beta->requires_grad) beta->grad[cu] += g[c];
                if (x->requires_grad) {
                    const T gg = g[c] * gamma->data[cu];
                    x->grad[static_cast<std::size_t>(r * C + c)] +=
                        is * (gg - sum_g / static_cast<T>(C) - xh * sum_gx / static_cast<T>(C));
                }
            }
        }
    });
    return out;
}

/// Bilinear interpolation to (H',W') with half-pixel centers
/// (align_corners=false); preserves constants and is the identity when the
/// target equals the source size.
template <typename T>
TensorPtr<T> bilinear_upsample(const TensorPtr<T>& input, std::int64_t target_h, std::int64_t target_w) {
    if (target_h < 1 || target_w < 1) throw std::invalid_argument("bilinear_upsample: target must be >= 1");
    detail::Rank3Guard<T> guard(input, "bilinear_upsample");
    auto x = guard.x4;
    const std::int64_t N = x->dim(0), H = x->dim(1), W = x->dim(2), C = x->dim(3);

    struct Axis {
        std::int64_t lo, hi;
        T w_hi;
    };
    auto build = [](std::int64_t src, std::int64_t dst) {
        std::vector<Axis> m(static_cast<std::size_t>(dst));
        for (std::int64_t o = 0; o < dst; ++o) {
            const double pos = (static_cast<double>(o) + 0.5) * static_cast<double>(src) / static_cast<double>(dst) - 0.5;
            const double clamped = std::min(std::max(pos, 0.0), static_cast<double>(src - 1));
            const auto lo = static_cast<std::int64_t>(std::floor(clamped));
            const std::int64_t hi = std::min(lo + 1, src - 1);
            m[static_cast<std::size_t>(o)] = {lo, hi, static_cast<T>(clamped - static_cast<double>(lo))};
        }
        return m;
    };
    const auto ymap = build(H, target_h);
    const auto xmap = build(W, target_w);

    auto out = Tensor<T>::create({N, target_h, target_w, C});
    for (std::int64_t n = 0; n < N; ++n) {
        for (std::int64_t oy = 0; oy < target_h; ++oy) {
            const auto& ay = ymap[static_cast<std::size_t>(oy)];
            for (std::int64_t ox = 0; ox < target_w; ++ox) {
                const auto& ax = xmap[static_cast<std::size_t>(ox)];
                const T w00 = (T(1) - ay.w_hi) * (T(1) - ax.w_hi);
                const T w01 = (T(1) - ay.w_hi) * ax.w_hi;
                const T w10 = ay.w_hi * (T(1) - ax.w_hi);
                const T w11 = ay.w_hi * ax.w_hi;
                const T* p00 = x->data.data() + ((n * H + ay.lo) * W + ax.lo) * C;
                const T* p01 = x->data.data() + ((n * H + ay.lo) * W + ax.hi) * C;
                const T* p10 = x->data.data() + ((n * H + ay.hi) * W + ax.lo) * C;
                const T* p11 = x->data.data() + ((n * H + ay.hi) * W + ax.hi) * C;
                T* dst = out->data.data() + ((n * target_h + oy) * target_w + ox) * C;
                for (std::int64_t c = 0; c < C; ++c)
                    dst[c] = w00 * p00[c] + w01 * p01[c] + w10 * p10[c] + w11 * p11[c];
            }
        }
    }
    detail::record_op<T>("bilinear_upsample", {x}, out, [x, out, N, H, W, C, target_h, target_w, ymap, xmap] {
        if (!x->requires_grad) return;
        for (std::int64_t n = 0; n < N; ++n) {
            for (std::int64_t oy = 0; oy < target_h; ++oy) {
                const auto& ay = ymap[static_cast<std::size_t>(oy)];
                for (std::int64_t ox = 0; ox < target_w; ++ox) {
                    const auto& ax = xmap[static_cast<std::size_t>(ox)];
                    const T w00 = (T(1) - ay.w_hi) * (T(1) - ax.w_hi);
                    const T w01 = (T(1) - ay.w_hi) * ax.w_hi;
                    const T w10 = ay.w_hi * (T(1) - ax.w_hi);
                    const T w11 = ay.w_hi * ax.w_hi;
                    const T* g = out->grad.data() + ((n * target_h + oy) * target_w + ox) * C;
                    T* p00 = x->grad.data() + ((n * H + ay.lo) * W + ax.lo) * C;
                    T* p01 = x->grad.data() + ((n * H + ay.lo) * W + ax.hi) * C;
                    T* p10 = x->grad.data() + ((n * H + ay.hi) * W + ax.lo) * C;
                    T* p11 = x->grad.data() + ((n * H + ay.hi) * W + ax.hi) * C;
                    for (std::int64_t c = 0; c < C; ++c) {
                        p00[c] += w00 * g[c];
                        p01[c] += w01 * g[c];
                        p10[c] += w10 * g[c];
                        p11[c] += w11 * g[c];
                    }
                }
            }
        }
    });
    return guard.restore(out);
}

/// Mean over all pixels of -log softmax(logits)[label]; logits [...,N_cls]
/// with one integer label per leading position.
template <typename T>
TensorPtr<T> cross_entropy(const TensorPtr<T>& logits, const std::vector<std::int64_t>& labels) {
    const std::int64_t ncls = logits->dim(logits->rank() - 1);
    const std::int64_t pixels = logits->numel() / ncls;
    if (static_cast<std::int64_t>(labels.size()) != pixels)
        throw std::invalid_argument("cross_entropy: label count " + std::to_string(labels.size()) +
                                    " != pixel count " + std::to_string(pixels));
    for (auto l : labels)
        if (l < 0 || l >= ncls)
            throw std::invalid_argument("cross_entropy: label " + std::to_string(l) +
                                        " out of range [0," + std::to_string(ncls) + ")");

    double total = 0;
    for (std::int64_t p = 0; p < pixels; ++p) {
        const T* row = logits->data.data() + p * ncls;
        T mx = row[0];
        for (std::int64_t c = 1; c < ncls; ++c) mx = std::max(mx, row[c]);
        double denom = 0;
        for (std::int64_t c = 0; c < ncls; ++c) denom += std::exp(static_cast<double>(row[c] - mx));
        total += std::log(denom) - static_cast<double>(row[labels[static_cast<std::size_t>(p)]] - mx);
    }
    auto out = Tensor<T>::scalar(static_cast<T>(total / static_cast<double>(pixels)));
    detail::record_op<T>("cross_entropy", {logits}, out, [logits, out, labels, pixels, ncls] {
        if (!logits->requires_grad) return;
        const T g = out->grad[0] / static_cast<T>(pixels);
        for (std::int64_t p = 0; p < pixels; ++p) {
            const T* row = logits->data.data() + p * ncls;
            T* drow = logits->grad.data() + p * ncls;
            T mx = row[0];
            for (std::int64_t c = 1; c < ncls; ++c) mx = std::max(mx, row[c]);
            double denom = 0;
            for (std::int64_t c = 0; c < ncls; ++c) denom += std::exp(static_cast<double>(row[c] - mx));
            for (std::int64_t c = 0; c < ncls; ++c) {
                const double prob = std::exp(static_cast<double>(row[c] - mx)) / denom;
                const double onehot = (c == labels[static_cast<std::size_t>(p)]) ? 1.0 : 0.0;
                drow[c] += g * static_cast<T>(prob - onehot);
            }
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// Parameterized layers. Construction allocates zeroed parameters; weight
// initialization is a separate pass (see model.hpp).
// ---------------------------------------------------------------------------

template <typename T>
struct LinearLayer {
    TensorPtr<T> weight;  // [C_in, C_out]
    TensorPtr<T> bias;    // [C_out]

    LinearLayer() = default;
    LinearLayer(std::int64_t cin, std::int64_t cout)
        : weight(Tensor<T>::create({cin, cout}, true)), bias(Tensor<T>::create({cout}, true)) {}

    TensorPtr<T> operator()(const TensorPtr<T>& x) const { return linear(x, weight, bias); }

    void collect(ParamList<T>& out, const std::string& prefix) const {
        out.push_back({prefix + ".weight", weight});
        out.push_back({prefix + ".bias", bias});
    }
};

template <typename T>
struct Conv2dLayer {
    TensorPtr<T> weight;  // [K,K,C_in,C_out]
    TensorPtr<T> bias;    // [C_out]
    std::int64_t stride = 1;
    std::int64_t padding = 0;

    Conv2dLayer() = default;
    Conv2dLayer(std::int64_t k, std::int64_t cin, std::int64_t cout, std::int64_t s, std::int64_t p)
        : weight(Tensor<T>::create({k, k, cin, cout}, true)),
          bias(Tensor<T>::create({cout}, true)),
          stride(s),
          padding(p) {}

    TensorPtr<T> operator()(const TensorPtr<T>& x) const { return conv2d(x, weight, bias, stride, padding); }

    void collect(ParamList<T>& out, const std::string& prefix) const {
        out.push_back({prefix + ".weight", weight});
        out.push_back({prefix + ".bias", bias});
    }
};

template <typename T>
struct DepthwiseConv2dLayer {
    TensorPtr<T> weight;  // [K,K,C]
    TensorPtr<T> bias;    // [C]
    std::int64_t stride = 1;
    std::int64_t padding = 1;

    DepthwiseConv2dLayer() = default;
    DepthwiseConv2dLayer(std::int64_t k, std::int64_t c, std::int64_t s, std::int64_t p)
        : weight(Tensor<T>::create({k, k, c}, true)), bias(Tensor<T>::create({c}, true)), stride(s), padding(p) {}

    TensorPtr<T> operator()(const TensorPtr<T>& x) const {
        return depthwise_conv2d(x, weight, bias, stride, padding);
    }

    void collect(ParamList<T>& out, const std::string& prefix) const {
        out.push_back({prefix + ".weight", weight});
        out.push_back({prefix + ".bias", bias});
    }
};

template <typename T>
struct ConvTranspose2dLayer {
    TensorPtr<T> weight;  // [K,K,C_in,C_out]
    TensorPtr<T> bias;    // [C_out]
    std::int64_t stride = 1;
    std::int64_t padding = 0;
    std::int64_t output_padding = 0;

    ConvTranspose2dLayer() = default;
    ConvTranspose2dLayer(std::int64_t k, std::int64_t cin, std::int64_t cout, std::int64_t s, std::int64_t p,
                         std::int64_t op)
        : weight(Tensor<T>::create({k, k, cin, cout}, true)),
          bias(Tensor<T>::create({cout}, true)),
          stride(s),
          padding(p),
          output_padding(op) {}

    TensorPtr<T> operator()(const TensorPtr<T>& x) const {
        return conv_transpose2d(x, weight, bias, stride, padding, output_padding);
    }

    void collect(ParamList<T>& out, const std::string& prefix) const {
        out.push_back({prefix + ".weight", weight});
        out.push_back({prefix + ".bias", bias});
    }
};

template <typename T>
struct LayerNormLayer {
    TensorPtr<T> gamma;
    TensorPtr<T> beta;

    LayerNormLayer() = default;
    explicit LayerNormLayer(std::int64_t c)
        : gamma(Tensor<T>::create({c}, true)), beta(Tensor<T>::create({c}, true)) {}

    TensorPtr<T> operator()(const TensorPtr<T>& x) const { return layernorm(x, gamma, beta); }

    void collect(ParamList<T>& out, const std::string& prefix) const {
        out.push_back({prefix + ".gamma", gamma});
        out.push_back({prefix + ".beta", beta});
    }
};

template <typename T>
struct BatchNorm2dLayer {
    TensorPtr<T> gamma;
    TensorPtr<T> beta;
    TensorPtr<T> running_mean;
    TensorPtr<T> running_var;
    double momentum = 0.1;
    double eps = 1e-5;

    BatchNorm2dLayer() = default;
    explicit BatchNorm2dLayer(std::int64_t c)
        : gamma(Tensor<T>::create({c}, true)),
          beta(Tensor<T>::create({c}, true)),
          running_mean(Tensor<T>::create({c})),
          running_var(Tensor<T>::create({c})) {}

    TensorPtr<T> operator()(const TensorPtr<T>& x, bool training) const {
        return batchnorm2d(x, gamma, beta, running_mean, running_var, training, momentum, eps);
    }

    void collect(ParamList<T>& out, const std::string& prefix) const {
        out.push_back({prefix + ".gamma", gamma});
        out.push_back({prefix + ".beta", beta});
    }

    void collect_buffers(ParamList<T>& out, const std::string& prefix) const {
        out.push_back({prefix + ".running_mean", running_mean});
        out.push_back({prefix + ".running_var", running_var});
    }
};

}  // namespace cdkit
