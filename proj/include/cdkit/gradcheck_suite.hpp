#pragma once

#include "cdkit/model.hpp"

namespace cdkit {

struct GradcheckRow {
    std::string name;
    double max_rel_error = 0;
    bool pass = false;
};

namespace detail {

inline std::vector<double> suite_random(std::size_t n, std::uint64_t seed, double lo = -1.0,
                                        double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) x = dist(rng);
    return v;
}

/// Identity forward whose backward flips the gradient sign. Test fixture for
/// proving the suite catches a broken backward pass.
inline TensorPtr<double> sign_flip_backward(const TensorPtr<double>& y) {
    auto out = Tensor<double>::create(y->shape);
    out->data = y->data;
    record_op<double>("sign_flip", {y}, out, [y, out] {
        for (std::size_t i = 0; i < y->grad.size(); ++i) y->grad[i] -= out->grad[i];
    });
    return out;
}

}  // namespace detail

/// Finite-difference verification of every differentiable op plus the full
/// tiny model on an 8x8 input, all in float64. `sabotage_conv` injects a
/// sign-flipped conv backward so the conv row must fail (fault-injection
/// fixture for the suite's own tests).
inline std::vector<GradcheckRow> run_gradcheck_suite(std::uint64_t seed, bool sabotage_conv = false) {
    using detail::suite_random;
    std::vector<GradcheckRow> rows;
    auto add_row = [&rows](const std::string& name, const GradCheckResult& r) {
        rows.push_back({name, r.has_nan ? std::numeric_limits<double>::quiet_NaN() : r.max_rel_error,
                        r.pass(1e-4)});
    };

    {
        auto w = Tensor<double>::from({4, 3}, suite_random(12, seed + 1));
        auto x = Tensor<double>::from({2, 4}, suite_random(8, seed + 2));
        add_row("matmul", gradcheck([&](const TensorPtr<double>& t) { return sum(mul(matmul(t, w), matmul(t, w))); }, x));
    }
    {
        auto x = Tensor<double>::from({2, 6}, suite_random(12, seed + 3));
        add_row("reshape_permute_concat", gradcheck(
                                              [](const TensorPtr<double>& t) {
                                                  auto a = permute(reshape(t, {3, 4}), {1, 0});
                                                  return sum(mul(concat<double>({a, a}, 1), concat<double>({a, a}, 1)));
                                              },
                                              x));
    }
    {
        auto x = Tensor<double>::from({3, 5}, suite_random(15, seed + 4));
        add_row("softmax", gradcheck([](const TensorPtr<double>& t) { return sum(mul(softmax(t, 1), t)); }, x));
    }
    {
        auto w = Tensor<double>::from({3, 2}, suite_random(6, seed + 5));
        auto b = Tensor<double>::from({2}, suite_random(2, seed + 6));
        auto x = Tensor<double>::from({4, 3}, suite_random(12, seed + 7));
        add_row("linear", gradcheck([&](const TensorPtr<double>& t) {
                    auto y = linear(t, w, b);
                    return sum(mul(y, y));
                }, x));
    }
    {
        auto w = Tensor<double>::from({3, 3, 2, 3}, suite_random(54, seed + 8));
        auto b = Tensor<double>::from({3}, suite_random(3, seed + 9));
        auto x = Tensor<double>::from({1, 4, 4, 2}, suite_random(32, seed + 10));
        add_row("conv2d", gradcheck([&](const TensorPtr<double>& t) {
                    auto y = conv2d(t, w, b, 1, 1);
                    if (sabotage_conv) y = detail::sign_flip_backward(y);
                    return sum(mul(y, y));
                }, x));
    }
    {
        auto w = Tensor<double>::from({3, 3, 2}, suite_random(18, seed + 11));
        auto b = Tensor<double>::from({2}, suite_random(2, seed + 12));
        auto x = Tensor<double>::from({1, 4, 4, 2}, suite_random(32, seed + 13));
        add_row("depthwise_conv2d", gradcheck([&](const TensorPtr<double>& t) {
                    auto y = depthwise_conv2d(t, w, b, 1, 1);
                    return sum(mul(y, y));
                }, x));
    }
    {
        auto w = Tensor<double>::from({3, 3, 2, 2}, suite_random(36, seed + 14));
        auto b = Tensor<double>::from({2}, suite_random(2, seed + 15));
        auto x = Tensor<double>::from({1, 2, 2, 2}, suite_random(8, seed + 16));
        add_row("conv_transpose2d", gradcheck([&](const TensorPtr<double>& t) {
                    auto y = conv_transpose2d(t, w, b, 4, 0, 1);
                    return sum(mul(y, y));
                }, x));
    }
    {
        auto gamma = Tensor<double>::from({3}, suite_random(3, seed + 17, 0.5, 1.5));
        auto beta = Tensor<double>::from({3}, suite_random(3, seed + 18));
        auto cot = Tensor<double>::from({1, 3, 3, 3}, suite_random(27, seed + 19));
        auto x = Tensor<double>::from({1, 3, 3, 3}, suite_random(27, seed + 20));
        add_row("batchnorm2d", gradcheck([&](const TensorPtr<double>& t) {
                    auto rm2 = Tensor<double>::create({3});
                    auto rv2 = Tensor<double>::full({3}, 1.0);
                    auto y = batchnorm2d(t, gamma, beta, rm2, rv2, true);
                    return sum(mul(mul(y, y), cot));
                }, x));
    }
    {
        auto gamma = Tensor<double>::from({4}, suite_random(4, seed + 21, 0.5, 1.5));
        auto beta = Tensor<double>::from({4}, suite_random(4, seed + 22));
        auto cot = Tensor<double>::from({3, 4}, suite_random(12, seed + 23));
        auto x = Tensor<double>::from({3, 4}, suite_random(12, seed + 24));
        add_row("layernorm", gradcheck([&](const TensorPtr<double>& t) {
                    auto y = layernorm(t, gamma, beta);
                    return sum(mul(mul(y, y), cot));
                }, x));
    }
    {
        auto x = Tensor<double>::from({3, 4}, suite_random(12, seed + 25));
        // Keep clear of the non-differentiable point at zero.
        for (auto& v : x->data) v += (v >= 0 ? 0.25 : -0.25);
        add_row("relu", gradcheck([](const TensorPtr<double>& t) { return sum(mul(relu(t), relu(t))); }, x));
    }
    {
        auto x = Tensor<double>::from({3, 4}, suite_random(12, seed + 26));
        add_row("gelu", gradcheck([](const TensorPtr<double>& t) { return sum(mul(gelu(t), gelu(t))); }, x));
    }
    {
        auto x = Tensor<double>::from({1, 2, 2, 3}, suite_random(12, seed + 27));
        add_row("bilinear_upsample", gradcheck(
                                         [](const TensorPtr<double>& t) {
                                             auto y = bilinear_upsample(t, 5, 5);
                                             return sum(mul(y, y));
                                         },
                                         x));
    }
    {
        std::mt19937_64 rng(seed + 28);
        std::vector<std::int64_t> labels(9);
        for (auto& l : labels) l = static_cast<std::int64_t>(rng() % 2);
        auto x = Tensor<double>::from({1, 3, 3, 2}, suite_random(18, seed + 29));
        add_row("cross_entropy",
                gradcheck([&](const TensorPtr<double>& t) { return cross_entropy(t, labels); }, x));
    }
    {
        StageConfig cfg{4, 1, 2, 4};
        EfficientSelfAttention<double> esa(cfg);
        ParamList<double> ps;
        esa.collect(ps, "esa");
        std::mt19937_64 rng(seed + 30);
        std::normal_distribution<double> dist(0.0, 0.2);
        for (const auto& p : ps)
            for (auto& v : p.tensor->data) v = dist(rng);
        auto x = Tensor<double>::from({1, 16, 4}, suite_random(64, seed + 31));
        add_row("attention", gradcheck([&](const TensorPtr<double>& t) {
                    auto y = esa.forward(t, 4, 4);
                    return sum(mul(y, y));
                }, x));
    }
    {
        MixFfn<double> ffn(3, 2);
        ParamList<double> ps;
        ffn.collect(ps, "ffn");
        std::mt19937_64 rng(seed + 32);
        std::normal_distribution<double> dist(0.0, 0.2);
        for (const auto& p : ps)
            for (auto& v : p.tensor->data) v = dist(rng);
        auto x = Tensor<double>::from({1, 3, 3, 3}, suite_random(27, seed + 33));
        add_row("mix_ffn", gradcheck([&](const TensorPtr<double>& t) {
                    auto y = ffn.forward(t);
                    return sum(mul(y, y));
                }, x));
    }
    {
        StageConfig cfg{4, 1, 2, 1};
        TransformerBlock<double> blk(cfg, 2);
        ParamList<double> ps;
        blk.collect(ps, "blk");
        std::mt19937_64 rng(seed + 34);
        std::normal_distribution<double> dist(0.0, 0.2);
        for (const auto& p : ps)
            for (auto& v : p.tensor->data) v = dist(rng);
        auto x = Tensor<double>::from({1, 4, 4}, suite_random(16, seed + 35));
        add_row("transformer_block", gradcheck([&](const TensorPtr<double>& t) {
                    auto y = blk.forward(t, 2, 2);
                    return sum(mul(y, y));
                }, x));
    }
    {
        ChangeFormer<double> model(ModelConfig::tiny());
        model.init_weights(seed);
        auto post = Tensor<double>::from({8, 8, 3}, suite_random(192, seed + 36, 0.0, 1.0));
        auto cot = Tensor<double>::from({8, 8, 2}, suite_random(128, seed + 37));
        auto x = Tensor<double>::from({8, 8, 3}, suite_random(192, seed + 38, 0.0, 1.0));
        add_row("model_end_to_end", gradcheck([&](const TensorPtr<double>& t) {
                    auto y = model.forward(t, post, /*training=*/true, /*strict=*/false);
                    return sum(mul(mul(y, y), cot));
                }, x));
    }
    return rows;
}

}  // namespace cdkit
