#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>

#include "cdkit/tensor.hpp"

namespace cdkit {

namespace detail {

inline Shape resolve_reshape(const Shape& target, std::int64_t numel) {
    Shape out = target;
    std::int64_t known = 1;
    std::int64_t infer = -1;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (out[i] == -1) {
            if (infer >= 0) throw std::invalid_argument("reshape: more than one -1 dimension");
            infer = static_cast<std::int64_t>(i);
        } else {
            known *= out[i];
        }
    }
    if (infer >= 0) {
        if (known == 0 || numel % known != 0)
            throw std::invalid_argument("reshape: cannot infer dimension for shape " + shape_str(target));
        out[static_cast<std::size_t>(infer)] = numel / known;
    }
    return out;
}

}  // namespace detail

template <typename T>
TensorPtr<T> reshape(const TensorPtr<T>& x, const Shape& new_shape) {
    Shape resolved = detail::resolve_reshape(new_shape, x->numel());
    if (shape_numel(resolved) != x->numel()) {
        throw std::invalid_argument("reshape: element count mismatch, " + shape_str(x->shape) +
                                    " -> " + shape_str(resolved));
    }
    auto out = Tensor<T>::from(resolved, x->data);
    detail::record_op<T>("reshape", {x}, out, [x, out] {
        if (!x->requires_grad) return;
        for (std::size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += out->grad[i];
    });
    return out;
}

template <typename T>
TensorPtr<T> permute(const TensorPtr<T>& x, const std::vector<std::int64_t>& axes) {
    const auto r = static_cast<std::size_t>(x->rank());
    if (axes.size() != r) throw std::invalid_argument("permute: axes count mismatch");
    std::vector<bool> seen(r, false);
    Shape out_shape(r);
    for (std::size_t i = 0; i < r; ++i) {
        auto a = axes[i];
        if (a < 0 || a >= static_cast<std::int64_t>(r) || seen[static_cast<std::size_t>(a)])
            throw std::invalid_argument("permute: invalid axis list");
        seen[static_cast<std::size_t>(a)] = true;
        out_shape[i] = x->shape[static_cast<std::size_t>(a)];
    }
    // Strides of the source, then walk the destination in row-major order.
    std::vector<std::int64_t> src_stride(r, 1);
    for (std::int64_t i = static_cast<std::int64_t>(r) - 2; i >= 0; --i)
        src_stride[static_cast<std::size_t>(i)] = src_stride[static_cast<std::size_t>(i) + 1] * x->shape[static_cast<std::size_t>(i) + 1];
    std::vector<std::int64_t> perm_stride(r);
    for (std::size_t i = 0; i < r; ++i) perm_stride[i] = src_stride[static_cast<std::size_t>(axes[i])];

    auto out = Tensor<T>::create(out_shape);
    const std::int64_t n = x->numel();
    std::vector<std::int64_t> idx(r, 0);
    std::int64_t src = 0;
    for (std::int64_t flat = 0; flat < n; ++flat) {
        out->data[static_cast<std::size_t>(flat)] = x->data[static_cast<std::size_t>(src)];
        for (std::int64_t d = static_cast<std::int64_t>(r) - 1; d >= 0; --d) {
            auto du = static_cast<std::size_t>(d);
            if (++idx[du] < out_shape[du]) {
                src += perm_stride[du];
                break;
            }
            src -= perm_stride[du] * (out_shape[du] - 1);
            idx[du] = 0;
        }
    }
    detail::record_op<T>("permute", {x}, out, [x, out, out_shape, perm_stride, r] {
        if (!x->requires_grad) return;
        const std::int64_t n = out->numel();
        std::vector<std::int64_t> idx(r, 0);
        std::int64_t src = 0;
        for (std::int64_t flat = 0; flat < n; ++flat) {
            x->grad[static_cast<std::size_t>(src)] += out->grad[static_cast<std::size_t>(flat)];
            for (std::int64_t d = static_cast<std::int64_t>(r) - 1; d >= 0; --d) {
                auto du = static_cast<std::size_t>(d);
                if (++idx[du] < out_shape[du]) {
                    src += perm_stride[du];
                    break;
                }
                src -= perm_stride[du] * (out_shape[du] - 1);
                idx[du] = 0;
            }
        }
    });
    return out;
}

template <typename T>
TensorPtr<T> concat(const std::vector<TensorPtr<T>>& xs, std::int64_t axis) {
    if (xs.empty()) throw std::invalid_argument("concat: empty tensor list");
    const auto r = xs[0]->rank();
    if (axis < 0 || axis >= r) throw std::invalid_argument("concat: axis out of range");
    Shape out_shape = xs[0]->shape;
    std::int64_t axis_total = 0;
    for (const auto& x : xs) {
        if (x->rank() != r) throw std::invalid_argument("concat: rank mismatch");
        for (std::int64_t d = 0; d < r; ++d) {
            if (d != axis && x->dim(d) != xs[0]->dim(d))
                throw std::invalid_argument("concat: incompatible shapes " + shape_str(xs[0]->shape) +
                                            " vs " + shape_str(x->shape));
        }
        axis_total += x->dim(axis);
    }
    out_shape[static_cast<std::size_t>(axis)] = axis_total;

    std::int64_t outer = 1, inner = 1;
    for (std::int64_t d = 0; d < axis; ++d) outer *= out_shape[static_cast<std::size_t>(d)];
    for (std::int64_t d = axis + 1; d < r; ++d) inner *= out_shape[static_cast<std::size_t>(d)];

    auto out = Tensor<T>::create(out_shape);
    std::int64_t offset = 0;
    for (const auto& x : xs) {
        const std::int64_t block = x->dim(axis) * inner;
        for (std::int64_t o = 0; o < outer; ++o) {
            std::memcpy(out->data.data() + o * axis_total * inner + offset,
                        x->data.data() + o * block, static_cast<std::size_t>(block) * sizeof(T));
        }
        offset += block;
    }

    bool needs = false;
    for (const auto& x : xs) needs |= x->requires_grad;
    if (auto* tape = GradTape<T>::active(); tape && needs) {
        out->set_requires_grad(true);
        auto inputs = xs;
        tape->record("concat", out, [inputs, out, outer, inner, axis_total, axis] {
            std::int64_t offset = 0;
            for (const auto& x : inputs) {
                const std::int64_t block = x->dim(axis) * inner;
                if (x->requires_grad) {
                    for (std::int64_t o = 0; o < outer; ++o) {
                        const T* g = out->grad.data() + o * axis_total * inner + offset;
                        T* dst = x->grad.data() + o * block;
                        for (std::int64_t i = 0; i < block; ++i) dst[i] += g[i];
                    }
                }
                offset += block;
            }
        });
    }
    return out;
}

template <typename T>
TensorPtr<T> add(const TensorPtr<T>& a, const TensorPtr<T>& b) {
    if (a->shape != b->shape)
        throw std::invalid_argument("add: shape mismatch " + shape_str(a->shape) + " vs " + shape_str(b->shape));
    auto out = Tensor<T>::create(a->shape);
    for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = a->data[i] + b->data[i];
    detail::record_op<T>("add", {a, b}, out, [a, b, out] {
        if (a->requires_grad)
            for (std::size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += out->grad[i];
        if (b->requires_grad)
            for (std::size_t i = 0; i < b->grad.size(); ++i) b->grad[i] += out->grad[i];
    });
    return out;
}

template <typename T>
TensorPtr<T> mul(const TensorPtr<T>& a, const TensorPtr<T>& b) {
    if (a->shape != b->shape)
        throw std::invalid_argument("mul: shape mismatch " + shape_str(a->shape) + " vs " + shape_str(b->shape));
    auto out = Tensor<T>::create(a->shape);
    for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = a->data[i] * b->data[i];
    detail::record_op<T>("mul", {a, b}, out, [a, b, out] {
        if (a->requires_grad)
            for (std::size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += out->grad[i] * b->data[i];
        if (b->requires_grad)
            for (std::size_t i = 0; i < b->grad.size(); ++i) b->grad[i] += out->grad[i] * a->data[i];
    });
    return out;
}

template <typename T>
TensorPtr<T> scale(const TensorPtr<T>& x, T c) {
    auto out = Tensor<T>::create(x->shape);
    for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = x->data[i] * c;
    detail::record_op<T>("scale", {x}, out, [x, out, c] {
        if (!x->requires_grad) return;
        for (std::size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += out->grad[i] * c;
    });
    return out;
}

template <typename T>
TensorPtr<T> sum(const TensorPtr<T>& x) {
    T acc = 0;
    for (const T v : x->data) acc += v;
    auto out = Tensor<T>::scalar(acc);
    detail::record_op<T>("sum", {x}, out, [x, out] {
        if (!x->requires_grad) return;
        const T g = out->grad[0];
        for (std::size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += g;
    });
    return out;
}

/// Adds a length-C vector along the last axis of x.
template <typename T>
TensorPtr<T> add_rowwise(const TensorPtr<T>& x, const TensorPtr<T>& bias) {
    if (bias->rank() != 1 || bias->dim(0) != x->dim(x->rank() - 1))
        throw std::invalid_argument("add_rowwise: bias length " + shape_str(bias->shape) +
                                    " does not match last axis of " + shape_str(x->shape));
    const std::int64_t c = bias->dim(0);
    const std::int64_t rows = x->numel() / c;
    auto out = Tensor<T>::create(x->shape);
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* src = x->data.data() + r * c;
        T* dst = out->data.data() + r * c;
        for (std::int64_t i = 0; i < c; ++i) dst[i] = src[i] + bias->data[static_cast<std::size_t>(i)];
    }
    detail::record_op<T>("add_rowwise", {x, bias}, out, [x, bias, out, rows, c] {
        if (x->requires_grad)
            for (std::size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += out->grad[i];
        if (bias->requires_grad) {
            for (std::int64_t r = 0; r < rows; ++r) {
                const T* g = out->grad.data() + r * c;
                for (std::int64_t i = 0; i < c; ++i) bias->grad[static_cast<std::size_t>(i)] += g[i];
            }
        }
    });
    return out;
}

/// Matrix product over the trailing two axes. Leading axes of `a` form the
/// batch; `b` is either rank-2 (shared across the batch) or carries identical
/// leading axes.
template <typename T>
TensorPtr<T> matmul(const TensorPtr<T>& a, const TensorPtr<T>& b) {
    if (a->rank() < 2 || b->rank() < 2)
        throw std::invalid_argument("matmul: operands must have rank >= 2, got " +
                                    shape_str(a->shape) + " and " + shape_str(b->shape));
    const std::int64_t m = a->dim(a->rank() - 2);
    const std::int64_t k = a->dim(a->rank() - 1);
    const std::int64_t kb = b->dim(b->rank() - 2);
    const std::int64_t n = b->dim(b->rank() - 1);
    if (k != kb)
        throw std::invalid_argument("matmul: inner dimensions disagree, " + shape_str(a->shape) +
                                    " vs " + shape_str(b->shape));
    const bool shared_b = (b->rank() == 2);
    Shape lead(a->shape.begin(), a->shape.end() - 2);
    if (!shared_b) {
        Shape lead_b(b->shape.begin(), b->shape.end() - 2);
        if (lead != lead_b)
            throw std::invalid_argument("matmul: batch dimensions disagree, " + shape_str(a->shape) +
                                        " vs " + shape_str(b->shape));
    }
    const std::int64_t batch = shape_numel(lead);
    Shape out_shape = lead;
    out_shape.push_back(m);
    out_shape.push_back(n);
    auto out = Tensor<T>::create(out_shape);

    detail::mac_counter() += static_cast<std::uint64_t>(batch) * static_cast<std::uint64_t>(m) *
                             static_cast<std::uint64_t>(k) * static_cast<std::uint64_t>(n);

    for (std::int64_t bt = 0; bt < batch; ++bt) {
        const T* A = a->data.data() + bt * m * k;
        const T* B = b->data.data() + (shared_b ? 0 : bt * k * n);
        T* C = out->data.data() + bt * m * n;
        for (std::int64_t i = 0; i < m; ++i) {
            for (std::int64_t kk = 0; kk < k; ++kk) {
                const T av = A[i * k + kk];
                const T* brow = B + kk * n;
                T* crow = C + i * n;
                for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    }
    detail::record_op<T>("matmul", {a, b}, out, [a, b, out, batch, m, k, n, shared_b] {
        for (std::int64_t bt = 0; bt < batch; ++bt) {
            const T* A = a->data.data() + bt * m * k;
            const T* B = b->data.data() + (shared_b ? 0 : bt * k * n);
            const T* G = out->grad.data() + bt * m * n;
            if (a->requires_grad) {
                T* dA = a->grad.data() + bt * m * k;
                for (std::int64_t i = 0; i < m; ++i) {
                    for (std::int64_t kk = 0; kk < k; ++kk) {
                        const T* brow = B + kk * n;
                        const T* grow = G + i * n;
                        T acc = 0;
                        for (std::int64_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                        dA[i * k + kk] += acc;
                    }
                }
            }
            if (b->requires_grad) {
                T* dB = b->grad.data() + (shared_b ? 0 : bt * k * n);
                for (std::int64_t i = 0; i < m; ++i) {
                    const T* grow = G + i * n;
                    for (std::int64_t kk = 0; kk < k; ++kk) {
                        const T av = A[i * k + kk];
                        T* brow = dB + kk * n;
                        for (std::int64_t j = 0; j < n; ++j) brow[j] += av * grow[j];
                    }
                }
            }
        }
    });
    return out;
}

template <typename T>
TensorPtr<T> relu(const TensorPtr<T>& x) {
    auto out = Tensor<T>::create(x->shape);
    for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = x->data[i] > T(0) ? x->data[i] : T(0);
    detail::record_op<T>("relu", {x}, out, [x, out] {
        if (!x->requires_grad) return;
        for (std::size_t i = 0; i < x->grad.size(); ++i)
            if (x->data[i] > T(0)) x->grad[i] += out->grad[i];
    });
    return out;
}

/// Exact-erf GELU: x * Phi(x).
template <typename T>
TensorPtr<T> gelu(const TensorPtr<T>& x) {
    auto out = Tensor<T>::create(x->shape);
    constexpr double inv_sqrt2 = 0.7071067811865475244;
    for (std::size_t i = 0; i < out->data.size(); ++i) {
        const double v = static_cast<double>(x->data[i]);
        out->data[i] = static_cast<T>(v * 0.5 * (1.0 + std::erf(v * inv_sqrt2)));
    }
    detail::record_op<T>("gelu", {x}, out, [x, out] {
        if (!x->requires_grad) return;
        constexpr double inv_sqrt2 = 0.7071067811865475244;
        constexpr double inv_sqrt2pi = 0.3989422804014326779;
        for (std::size_t i = 0; i < x->grad.size(); ++i) {
            const double v = static_cast<double>(x->data[i]);
            const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
            const double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
            x->grad[i] += out->grad[i] * static_cast<T>(cdf + v * pdf);
        }
    });
    return out;
}

/// Max-shifted softmax along `axis`. A row whose maximum is +inf puts uniform
/// mass on its +inf entries and zero elsewhere, so inf inputs never yield NaN.
template <typename T>
TensorPtr<T> softmax(const TensorPtr<T>& x, std::int64_t axis) {
    if (axis < 0) axis += x->rank();
    if (axis < 0 || axis >= x->rank()) throw std::invalid_argument("softmax: axis out of range");
    const std::int64_t c = x->dim(axis);
    std::int64_t outer = 1, inner = 1;
    for (std::int64_t d = 0; d < axis; ++d) outer *= x->dim(d);
    for (std::int64_t d = axis + 1; d < x->rank(); ++d) inner *= x->dim(d);

    auto out = Tensor<T>::create(x->shape);
    for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t in = 0; in < inner; ++in) {
            const std::int64_t base = o * c * inner + in;
            T mx = x->data[static_cast<std::size_t>(base)];
            for (std::int64_t i = 1; i < c; ++i) mx = std::max(mx, x->data[static_cast<std::size_t>(base + i * inner)]);
            if (std::isinf(static_cast<double>(mx)) && mx > T(0)) {
                std::int64_t count = 0;
                for (std::int64_t i = 0; i < c; ++i)
                    if (x->data[static_cast<std::size_t>(base + i * inner)] == mx) ++count;
                for (std::int64_t i = 0; i < c; ++i)
                    out->data[static_cast<std::size_t>(base + i * inner)] =
                        x->data[static_cast<std::size_t>(base + i * inner)] == mx ? T(1) / static_cast<T>(count) : T(0);
                continue;
            }
            T denom = 0;
            for (std::int64_t i = 0; i < c; ++i) {
                const T e = std::exp(x->data[static_cast<std::size_t>(base + i * inner)] - mx);
                out->data[static_cast<std::size_t>(base + i * inner)] = e;
                denom += e;
            }
            for (std::int64_t i = 0; i < c; ++i) out->data[static_cast<std::size_t>(base + i * inner)] /= denom;
        }
    }
    detail::record_op<T>("softmax", {x}, out, [x, out, outer, inner, c] {
        if (!x->requires_grad) return;
        for (std::int64_t o = 0; o < outer; ++o) {
            for (std::int64_t in = 0; in < inner; ++in) {
                const std::int64_t base = o * c * inner + in;
                T dot = 0;
                for (std::int64_t i = 0; i < c; ++i) {
                    const auto at = static_cast<std::size_t>(base + i * inner);
                    dot += out->grad[at] * out->data[at];
                }
                for (std::int64_t i = 0; i < c; ++i) {
                    const auto at = static_cast<std::size_t>(base + i * inner);
                    x->grad[at] += (out->grad[at] - dot) * out->data[at];
                }
            }
        }
    });
    return out;
}

}  // namespace cdkit
