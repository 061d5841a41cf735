#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "cdkit/ops.hpp"

using namespace cdkit;

namespace {

// Independent O(mkn) oracle: plain i,j,k loops over raw vectors.
std::vector<double> matmul_oracle(const std::vector<double>& a, const std::vector<double>& b,
                                  std::int64_t m, std::int64_t k, std::int64_t n) {
    std::vector<double> c(static_cast<std::size_t>(m * n), 0.0);
    for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::int64_t kk = 0; kk < k; ++kk)
                acc += a[static_cast<std::size_t>(i * k + kk)] * b[static_cast<std::size_t>(kk * n + j)];
            c[static_cast<std::size_t>(i * n + j)] = acc;
        }
    return c;
}

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<double> v(n);
    for (auto& x : v) x = dist(rng);
    return v;
}

}  // namespace

TEST_CASE("matmul identity") {
    auto eye = Tensor<double>::from({2, 2}, {1, 0, 0, 1});
    auto b = Tensor<double>::from({2, 2}, {5, 6, 7, 8});
    auto c = matmul(eye, b);
    CHECK(c->data == std::vector<double>{5, 6, 7, 8});
}

TEST_CASE("matmul 2x2 against frozen oracle value") {
    auto a = Tensor<double>::from({2, 2}, {1, 2, 3, 4});
    auto b = Tensor<double>::from({2, 2}, {5, 6, 7, 8});
    auto c = matmul(a, b);
    // Frozen from the triple-loop oracle.
    CHECK(c->data == std::vector<double>{19, 22, 43, 50});
    CHECK(c->data == matmul_oracle(a->data, b->data, 2, 2, 2));
}

TEST_CASE("matmul all-ones row-column is the summation") {
    auto a = Tensor<double>::full({1, 4}, 1.0);
    auto b = Tensor<double>::full({4, 1}, 1.0);
    CHECK(matmul(a, b)->data[0] == 4.0);
}

TEST_CASE("matmul bitwise equals triple-loop oracle up to 16x16") {
    for (std::int64_t s : {3, 7, 16}) {
        auto av = random_vec(static_cast<std::size_t>(s * s), 11 + static_cast<std::uint64_t>(s));
        auto bv = random_vec(static_cast<std::size_t>(s * s), 29 + static_cast<std::uint64_t>(s));
        auto c = matmul(Tensor<double>::from({s, s}, av), Tensor<double>::from({s, s}, bv));
        auto ref = matmul_oracle(av, bv, s, s, s);
        for (std::size_t i = 0; i < ref.size(); ++i) CHECK(c->data[i] == ref[i]);
    }
}

TEST_CASE("matmul shape mismatch names both shapes") {
    auto a = Tensor<double>::create({2, 3});
    auto b = Tensor<double>::create({4, 2});
    CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("(2,3)"), std::invalid_argument);
}

TEST_CASE("reshape follows row-major layout") {
    auto x = Tensor<double>::from({6}, {1, 2, 3, 4, 5, 6});
    auto y = reshape(x, {2, 3});
    CHECK(y->shape == Shape{2, 3});
    CHECK(y->data == std::vector<double>{1, 2, 3, 4, 5, 6});

    auto z = reshape(Tensor<double>::create({64, 4}), {16, 16});
    CHECK(z->shape == Shape{16, 16});

    auto same = reshape(x, {6});
    CHECK(same->data == x->data);
    CHECK_THROWS_AS(reshape(x, {4}), std::invalid_argument);
}

TEST_CASE("reshape round trip is bitwise") {
    auto x = Tensor<double>::from({3, 4}, random_vec(12, 5));
    auto rt = reshape(reshape(x, {2, 6}), {3, 4});
    CHECK(rt->data == x->data);
}

TEST_CASE("concat along channel axis") {
    auto a = Tensor<double>::full({2, 2, 3}, 1.0);
    auto b = Tensor<double>::full({2, 2, 3}, 2.0);
    auto c = concat<double>({a, b}, 2);
    CHECK(c->shape == Shape{2, 2, 6});
    CHECK(c->data[0] == 1.0);
    CHECK(c->data[3] == 2.0);

    auto single = concat<double>({a}, 0);
    CHECK(single->data == a->data);

    auto bad = Tensor<double>::create({2, 3, 3});
    CHECK_THROWS_AS(concat<double>({a, bad}, 2), std::invalid_argument);
}

TEST_CASE("permute transposes") {
    auto x = Tensor<double>::from({2, 3}, {1, 2, 3, 4, 5, 6});
    auto y = permute(x, {1, 0});
    CHECK(y->shape == Shape{3, 2});
    CHECK(y->data == std::vector<double>{1, 4, 2, 5, 3, 6});
}

TEST_CASE("backward of sum gives all-ones gradient") {
    auto x = Tensor<double>::from({2, 3}, random_vec(6, 3), true);
    GradTape<double> tape;
    {
        TapeScope<double> scope(tape);
        auto loss = sum(x);
        tape.backward(loss);
    }
    for (double g : x->grad) CHECK(g == 1.0);
}

TEST_CASE("backward of sum of squares") {
    auto x = Tensor<double>::from({3}, {1, 2, 3}, true);
    GradTape<double> tape;
    {
        TapeScope<double> scope(tape);
        auto loss = sum(mul(x, x));
        tape.backward(loss);
    }
    CHECK(x->grad == std::vector<double>{2, 4, 6});
}

TEST_CASE("backward rejects non-scalar loss") {
    auto x = Tensor<double>::from({2}, {1, 2}, true);
    GradTape<double> tape;
    TapeScope<double> scope(tape);
    auto y = mul(x, x);
    CHECK_THROWS_AS(tape.backward(y), std::invalid_argument);
}

TEST_CASE("gradient accumulation across reuse: y = x + x") {
    auto x = Tensor<double>::from({4}, random_vec(4, 9), true);
    GradTape<double> tape;
    {
        TapeScope<double> scope(tape);
        tape.backward(sum(add(x, x)));
    }
    for (double g : x->grad) CHECK(g == 2.0);
}

TEST_CASE("tape replays each record exactly once") {
    auto x = Tensor<double>::from({2}, {1.0, 2.0}, true);
    GradTape<double> tape;
    {
        TapeScope<double> scope(tape);
        auto y = mul(x, x);
        auto loss = sum(y);
        CHECK(tape.size() == 2);
        tape.backward(loss);
    }
    CHECK(x->grad == std::vector<double>{2, 4});
}

TEST_CASE("gradcheck: sum of squares") {
    auto x = Tensor<double>::from({2, 3}, random_vec(6, 17));
    auto res = gradcheck([](const TensorPtr<double>& t) { return sum(mul(t, t)); }, x);
    CHECK(res.max_rel_error <= 1e-6);
}

TEST_CASE("gradcheck: sum(matmul(x, W))") {
    auto w = Tensor<double>::from({4, 3}, random_vec(12, 23));
    auto x = Tensor<double>::from({2, 4}, random_vec(8, 31));
    auto res = gradcheck([w](const TensorPtr<double>& t) { return sum(matmul(t, w)); }, x);
    CHECK(res.max_rel_error <= 1e-6);
}

TEST_CASE("gradcheck: constant function has zero error") {
    auto x = Tensor<double>::from({3}, {1, 2, 3});
    auto res = gradcheck([](const TensorPtr<double>&) { return Tensor<double>::scalar(7.0); }, x);
    CHECK(res.max_rel_error == 0.0);
}

TEST_CASE("gradcheck covers reshape, permute, concat, softmax paths") {
    auto x = Tensor<double>::from({2, 6}, random_vec(12, 41));
    auto res = gradcheck(
        [](const TensorPtr<double>& t) {
            auto a = reshape(t, {3, 4});
            auto b = permute(a, {1, 0});
            auto c = concat<double>({b, b}, 1);
            return sum(mul(softmax(c, 1), c));
        },
        x);
    CHECK(res.max_rel_error <= 1e-4);
}

TEST_CASE("softmax basics") {
    auto x = Tensor<double>::from({2}, {0.0, 0.0});
    auto y = softmax(x, 0);
    CHECK(y->data[0] == doctest::Approx(0.5));

    auto z = softmax(Tensor<double>::from({2}, {std::log(2.0), 0.0}), 0);
    CHECK(z->data[0] == doctest::Approx(2.0 / 3.0));
    CHECK(z->data[1] == doctest::Approx(1.0 / 3.0));

    auto big = softmax(Tensor<double>::from({2}, {1000.0, 0.0}), 0);
    CHECK(big->data[0] == doctest::Approx(1.0));
    CHECK(big->data[1] == doctest::Approx(0.0));
}

TEST_CASE("softmax rows sum to one and inf does not produce NaN") {
    auto x = Tensor<double>::from({4, 8}, random_vec(32, 53));
    for (auto& v : x->data) v *= 500.0;
    auto y = softmax(x, 1);
    for (std::int64_t r = 0; r < 4; ++r) {
        double s = 0;
        for (std::int64_t c = 0; c < 8; ++c) s += y->data[static_cast<std::size_t>(r * 8 + c)];
        CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    }
    const double inf = std::numeric_limits<double>::infinity();
    auto z = softmax(Tensor<double>::from({3}, {inf, 0.0, -inf}), 0);
    for (double v : z->data) CHECK_FALSE(std::isnan(v));
    CHECK(z->data[0] == 1.0);
}
