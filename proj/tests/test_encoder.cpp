#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "cdkit/encoder.hpp"

using namespace cdkit;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) x = dist(rng);
    return v;
}

template <typename T>
void randomize(const ParamList<T>& params, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 0.1);
    for (const auto& p : params) {
        const bool is_gamma = p.name.size() >= 6 && p.name.compare(p.name.size() - 6, 6, ".gamma") == 0;
        for (auto& v : p.tensor->data) v = is_gamma ? T(1) : static_cast<T>(dist(rng));
    }
}

std::array<StageConfig, 4> tiny_stages() {
    return {StageConfig{8, 1, 1, 4}, StageConfig{16, 1, 2, 1}, StageConfig{32, 1, 4, 1},
            StageConfig{64, 1, 8, 1}};
}

// Dense multi-head attention reference: plain loops, no autodiff, shares the
// layer's weights. Applies the same reduce linear (identity fold at R=1).
std::vector<double> dense_attention_reference(const EfficientSelfAttention<double>& esa,
                                              const std::vector<double>& x, std::int64_t len,
                                              std::int64_t c) {
    const std::int64_t heads = esa.heads;
    const std::int64_t d = c / heads;
    auto apply_linear = [](const std::vector<double>& in, std::int64_t rows, std::int64_t cin,
                           const LinearLayer<double>& l) {
        const std::int64_t cout = l.weight->dim(1);
        std::vector<double> out(static_cast<std::size_t>(rows * cout), 0.0);
        for (std::int64_t r = 0; r < rows; ++r)
            for (std::int64_t k = 0; k < cin; ++k) {
                const double v = in[static_cast<std::size_t>(r * cin + k)];
                for (std::int64_t j = 0; j < cout; ++j)
                    out[static_cast<std::size_t>(r * cout + j)] +=
                        v * l.weight->data[static_cast<std::size_t>(k * cout + j)];
            }
        for (std::int64_t r = 0; r < rows; ++r)
            for (std::int64_t j = 0; j < cout; ++j)
                out[static_cast<std::size_t>(r * cout + j)] += l.bias->data[static_cast<std::size_t>(j)];
        return out;
    };

    auto reduced = apply_linear(x, len, c, esa.reduce);
    auto q = apply_linear(x, len, c, esa.q);
    auto k = apply_linear(reduced, len, c, esa.k);
    auto v = apply_linear(reduced, len, c, esa.v);

    std::vector<double> ctx(static_cast<std::size_t>(len * c), 0.0);
    for (std::int64_t h = 0; h < heads; ++h) {
        for (std::int64_t i = 0; i < len; ++i) {
            std::vector<double> row(static_cast<std::size_t>(len));
            for (std::int64_t j = 0; j < len; ++j) {
                double acc = 0;
                for (std::int64_t e = 0; e < d; ++e)
                    acc += q[static_cast<std::size_t>(i * c + h * d + e)] *
                           k[static_cast<std::size_t>(j * c + h * d + e)];
                row[static_cast<std::size_t>(j)] = acc * (1.0 / std::sqrt(static_cast<double>(d)));
            }
            double mx = row[0];
            for (double r : row) mx = std::max(mx, r);
            double denom = 0;
            for (auto& r : row) {
                r = std::exp(r - mx);
                denom += r;
            }
            for (auto& r : row) r /= denom;
            for (std::int64_t e = 0; e < d; ++e) {
                double acc = 0;
                for (std::int64_t j = 0; j < len; ++j)
                    acc += row[static_cast<std::size_t>(j)] * v[static_cast<std::size_t>(j * c + h * d + e)];
                ctx[static_cast<std::size_t>(i * c + h * d + e)] = acc;
            }
        }
    }
    return apply_linear(ctx, len, c, esa.out);
}

}  // namespace

TEST_CASE("patch embed shapes across stages") {
    PatchEmbed<double> s1(0, 3, 8);
    auto x = Tensor<double>::from({1, 256, 256, 3}, random_vec(256 * 256 * 3, 1, 0, 1));
    std::fill(s1.norm.gamma->data.begin(), s1.norm.gamma->data.end(), 1.0);
    auto y = s1.forward(x);
    CHECK(y->shape == Shape{1, 64, 64, 8});

    PatchEmbed<double> s2(1, 8, 16);
    std::fill(s2.norm.gamma->data.begin(), s2.norm.gamma->data.end(), 1.0);
    CHECK(s2.forward(y)->shape == Shape{1, 32, 32, 16});

    PatchEmbed<double> s4(3, 32, 64);
    std::fill(s4.norm.gamma->data.begin(), s4.norm.gamma->data.end(), 1.0);
    auto small = Tensor<double>::from({1, 8, 8, 32}, random_vec(8 * 8 * 32, 2));
    CHECK(s4.forward(small)->shape == Shape{1, 4, 4, 64});
}

TEST_CASE("sequence reduce shapes and R=1 identity") {
    // (64, 4) tokens of an 8x8 grid, R=4 -> fold (16, 16) -> linear -> (16, 4).
    LinearLayer<double> proj(16, 4);
    randomize(ParamList<double>{{"w", proj.weight}, {"b", proj.bias}}, 3);
    auto x = Tensor<double>::from({1, 64, 4}, random_vec(256, 4));
    auto folded = fold_tokens(x, 8, 8, 2);
    CHECK(folded->shape == Shape{1, 16, 16});
    auto y = sequence_reduce(x, 8, 8, 2, proj);
    CHECK(y->shape == Shape{1, 16, 4});

    // R=1 with identity linear weights -> output == input.
    LinearLayer<double> ident(4, 4);
    for (std::int64_t i = 0; i < 4; ++i) ident.weight->data[static_cast<std::size_t>(i * 4 + i)] = 1.0;
    auto same = sequence_reduce(x, 8, 8, 1, ident);
    for (std::size_t i = 0; i < x->data.size(); ++i) CHECK(same->data[i] == x->data[i]);

    // Large-sequence shape arithmetic: 4096 tokens, R=16 -> 256 tokens.
    LinearLayer<double> big(32 * 16, 32);
    auto xl = Tensor<double>::create({1, 4096, 32});
    CHECK(sequence_reduce(xl, 64, 64, 4, big)->shape == Shape{1, 256, 32});

    // HW not divisible by the fold window is rejected.
    CHECK_THROWS_AS(fold_tokens(Tensor<double>::create({1, 9, 4}), 3, 3, 2), std::invalid_argument);
}

TEST_CASE("single-token attention is the projected value") {
    StageConfig cfg{4, 1, 1, 1};
    EfficientSelfAttention<double> esa(cfg);
    randomize(ParamList<double>{{"q.w", esa.q.weight}, {"q.b", esa.q.bias},
                                {"k.w", esa.k.weight}, {"k.b", esa.k.bias},
                                {"v.w", esa.v.weight}, {"v.b", esa.v.bias},
                                {"o.w", esa.out.weight}, {"o.b", esa.out.bias},
                                {"r.w", esa.reduce.weight}, {"r.b", esa.reduce.bias}}, 5);
    auto x = Tensor<double>::from({1, 1, 4}, random_vec(4, 6));
    auto y = esa.forward(x, 1, 1);
    // One key: softmax weight is exactly 1, so output = out(v(reduce(x))).
    auto expect = esa.out(esa.v(esa.reduce(x)));
    for (std::size_t i = 0; i < y->data.size(); ++i) CHECK(y->data[i] == doctest::Approx(expect->data[i]).epsilon(1e-12));
}

TEST_CASE("R=1 attention equals dense reference bitwise in float64") {
    StageConfig cfg{16, 1, 4, 1};
    EfficientSelfAttention<double> esa(cfg);
    ParamList<double> ps;
    esa.collect(ps, "esa");
    randomize(ps, 7);
    const std::int64_t len = 64, c = 16;
    auto xv = random_vec(static_cast<std::size_t>(len * c), 8);
    auto y = esa.forward(Tensor<double>::from({1, len, c}, xv), 8, 8);
    auto ref = dense_attention_reference(esa, xv, len, c);
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(y->data[i] == ref[i]);
}

TEST_CASE("attention weight rows sum to one (HW=64, R=4)") {
    StageConfig cfg{8, 1, 2, 4};
    EfficientSelfAttention<double> esa(cfg);
    ParamList<double> ps;
    esa.collect(ps, "esa");
    randomize(ps, 9);
    auto x = Tensor<double>::from({1, 64, 8}, random_vec(512, 10));
    // Rebuild the weight matrix from the layer's own projections.
    auto reduced = sequence_reduce(x, 8, 8, 2, esa.reduce);
    auto q = reshape(permute(reshape(esa.q(x), {1, 64, 2, 4}), {0, 2, 1, 3}), {2, 64, 4});
    auto k = reshape(permute(reshape(esa.k(reduced), {1, 16, 2, 4}), {0, 2, 1, 3}), {2, 16, 4});
    auto attn = softmax(scale(matmul(q, permute(k, {0, 2, 1})), 0.5), 2);
    for (std::int64_t h = 0; h < 2; ++h)
        for (std::int64_t i = 0; i < 64; ++i) {
            double s = 0;
            for (std::int64_t j = 0; j < 16; ++j)
                s += attn->data[static_cast<std::size_t>((h * 64 + i) * 16 + j)];
            CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
        }
}

TEST_CASE("attention cost scales as 1/R") {
    for (std::int64_t hw : {256, 1024}) {
        const auto side = static_cast<std::int64_t>(std::llround(std::sqrt(static_cast<double>(hw))));
        std::uint64_t base = 0;
        for (std::int64_t reduction : {1, 4, 16}) {
            StageConfig cfg{8, 1, 1, reduction};
            EfficientSelfAttention<double> esa(cfg);
            auto x = Tensor<double>::create({1, hw, 8});
            AttentionStats stats;
            esa.forward(x, side, side, &stats);
            if (reduction == 1)
                base = stats.score_value_macs;
            else
                CHECK(stats.score_value_macs * static_cast<std::uint64_t>(reduction) == base);
        }
    }
}

TEST_CASE("mix-ffn residual identity and resolution agnosticism") {
    MixFfn<double> ffn(6, 2);
    std::fill(ffn.norm.gamma->data.begin(), ffn.norm.gamma->data.end(), 1.0);
    // Zero branch weights: output == input.
    auto x = Tensor<double>::from({1, 4, 4, 6}, random_vec(96, 11));
    auto y = ffn.forward(x);
    for (std::size_t i = 0; i < x->data.size(); ++i) CHECK(y->data[i] == x->data[i]);

    ParamList<double> ps;
    ffn.collect(ps, "ffn");
    randomize(ps, 12);
    for (auto [h, w] : std::vector<std::pair<std::int64_t, std::int64_t>>{{1, 1}, {3, 5}, {8, 8}}) {
        auto xi = Tensor<double>::from({1, h, w, 6}, random_vec(static_cast<std::size_t>(h * w * 6), 13));
        CHECK(ffn.forward(xi)->shape == xi->shape);
    }
}

TEST_CASE("mix-ffn matches the composition of its primitives") {
    MixFfn<double> ffn(4, 2);
    ParamList<double> ps;
    ffn.collect(ps, "ffn");
    randomize(ps, 14);
    auto x = Tensor<double>::from({1, 8, 8, 4}, random_vec(256, 15));
    auto y = ffn.forward(x);
    // Independent composition through the primitive free functions.
    auto branch = layernorm(x, ffn.norm.gamma, ffn.norm.beta);
    branch = linear(branch, ffn.fc1.weight, ffn.fc1.bias);
    branch = depthwise_conv2d(branch, ffn.dw.weight, ffn.dw.bias, 1, 1);
    branch = gelu(branch);
    branch = linear(branch, ffn.fc2.weight, ffn.fc2.bias);
    auto expect = add(x, branch);
    for (std::size_t i = 0; i < y->data.size(); ++i) CHECK(y->data[i] == expect->data[i]);
}

TEST_CASE("transformer block: zero weights give the double residual identity") {
    StageConfig cfg{4, 1, 2, 1};
    TransformerBlock<double> blk(cfg, 2);
    std::fill(blk.norm1.gamma->data.begin(), blk.norm1.gamma->data.end(), 1.0);
    std::fill(blk.ffn.norm.gamma->data.begin(), blk.ffn.norm.gamma->data.end(), 1.0);
    auto x = Tensor<double>::from({1, 16, 4}, random_vec(64, 16));
    auto y = blk.forward(x, 4, 4);
    CHECK(y->shape == x->shape);
    for (std::size_t i = 0; i < x->data.size(); ++i) CHECK(y->data[i] == x->data[i]);
}

TEST_CASE("transformer block gradcheck") {
    StageConfig cfg{4, 1, 2, 1};
    TransformerBlock<double> blk(cfg, 2);
    ParamList<double> ps;
    blk.collect(ps, "blk");
    randomize(ps, 17);
    auto x = Tensor<double>::from({1, 4, 4}, random_vec(16, 18));
    auto res = gradcheck(
        [&](const TensorPtr<double>& t) {
            auto y = blk.forward(t, 2, 2);
            return sum(mul(y, y));
        },
        x);
    CHECK(res.max_rel_error <= 1e-4);
}

TEST_CASE("encode produces the pyramid shape law") {
    Encoder<double> enc(tiny_stages(), 2);
    ParamList<double> ps;
    enc.collect(ps, "enc");
    randomize(ps, 19);

    auto img = Tensor<double>::from({64, 64, 3}, random_vec(64 * 64 * 3, 20, 0, 1));
    auto pyr = enc.forward(img);
    const std::int64_t cs[4] = {8, 16, 32, 64};
    for (int i = 0; i < 4; ++i) {
        const std::int64_t s = 64 >> (i + 2);
        CHECK(pyr.levels[static_cast<std::size_t>(i)]->shape == Shape{s, s, cs[i]});
    }

    // Same weights at a different resolution.
    auto big = Tensor<double>::from({128, 128, 3}, random_vec(128 * 128 * 3, 21, 0, 1));
    auto pyr2 = enc.forward(big);
    for (int i = 0; i < 4; ++i) {
        const std::int64_t s = 128 >> (i + 2);
        CHECK(pyr2.levels[static_cast<std::size_t>(i)]->shape == Shape{s, s, cs[i]});
    }
}

TEST_CASE("encode rejects sizes not divisible by 32 before compute") {
    Encoder<double> enc(tiny_stages(), 2);
    auto img = Tensor<double>::create({48, 48, 3});
    CHECK_THROWS_AS(enc.forward(img), std::invalid_argument);
}

TEST_CASE("encode is deterministic and weight-stateless across branches") {
    Encoder<double> enc(tiny_stages(), 2);
    ParamList<double> ps;
    enc.collect(ps, "enc");
    randomize(ps, 22);
    auto img = Tensor<double>::from({64, 64, 3}, random_vec(64 * 64 * 3, 23, 0, 1));
    auto a = enc.forward(img);
    auto b = enc.forward(img);
    for (int i = 0; i < 4; ++i)
        CHECK(a.levels[static_cast<std::size_t>(i)]->data == b.levels[static_cast<std::size_t>(i)]->data);
}

TEST_CASE("channels must strictly increase across stages") {
    auto bad = tiny_stages();
    bad[1].channels = 8;
    CHECK_THROWS_AS(Encoder<double>(bad, 2), std::invalid_argument);
}
