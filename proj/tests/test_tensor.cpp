#include <doctest.h>

#include <cmath>

#include "test_support.hpp"
#include "tmdit/tensor.hpp"

using namespace tmdit;

TEST_CASE("matmul small cases") {
    const Tensor id = Tensor::from({2, 2}, {1, 0, 0, 1});
    const Tensor m = Tensor::from({2, 2}, {2, 3, 4, 5});
    CHECK(testing::bitwise_equal(matmul(id, m), m));
    CHECK(matmul(Tensor::from({1, 2}, {1, 2}), Tensor::from({2, 1}, {3, 4})).item() == 11.0);
    CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ShapeError);
}

TEST_CASE("matmul gradient against finite differences") {
    RngStream rng(11);
    Tensor a = rng.normal_tensor({4, 5});
    Tensor b = rng.normal_tensor({5, 3});
    CHECK(testing::fd_rel_error([&] { return matmul(a, b); }, {a, b}, 1) < 1e-6);
    Tensor c = rng.normal_tensor({2, 3, 4});
    Tensor d = rng.normal_tensor({2, 5, 4});
    CHECK(testing::fd_rel_error([&] { return matmul_nt(c, d); }, {c, d}, 2) < 1e-6);
    Tensor e = rng.normal_tensor({2, 5, 4});
    CHECK(testing::fd_rel_error([&] { return matmul(c, reshape(e, {2, 4, 5})); }, {c, e}, 3) < 1e-6);
}

TEST_CASE("softmax values") {
    auto s = softmax_lastdim(Tensor::from({2}, {0, 0}));
    CHECK(s.data()[0] == doctest::Approx(0.5).epsilon(1e-15));
    s = softmax_lastdim(Tensor::from({2}, {1000, 0}));
    CHECK(std::abs(s.data()[0] - 1.0) < 1e-12);
    CHECK(std::abs(s.data()[1]) < 1e-12);
    s = softmax_lastdim(Tensor::from({3}, {1, 2, 3}));
    const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
    for (int i = 0; i < 3; ++i) CHECK(std::abs(s.data()[i] - std::exp(i + 1.0) / z) < 1e-12);
}

TEST_CASE("masked softmax gives hidden keys zero weight") {
    const double inf = std::numeric_limits<double>::infinity();
    const std::vector<double> bias{0, -inf, 0};
    auto s = softmax_lastdim_biased(Tensor::from({1, 3}, {1, 50, 1}), bias);
    CHECK(s.data()[1] == 0.0);
    CHECK(s.data()[0] == doctest::Approx(0.5));
}

TEST_CASE("layernorm without affine") {
    auto y = layernorm_noaffine(Tensor::from({3}, {2, 2, 2}));
    for (double v : y.data()) CHECK(v == 0.0);
    y = layernorm_noaffine(Tensor::from({2}, {1, -1}), 0.0);
    CHECK(y.data()[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(y.data()[1] == doctest::Approx(-1.0).epsilon(1e-15));

    RngStream rng(4);
    const Tensor x = rng.normal_tensor({5, 16}, 3.0);
    y = layernorm_noaffine(x, 0.0);
    for (int r = 0; r < 5; ++r) {
        double m = 0, v = 0;
        for (int j = 0; j < 16; ++j) m += y.at({r, j});
        m /= 16;
        for (int j = 0; j < 16; ++j) v += (y.at({r, j}) - m) * (y.at({r, j}) - m);
        CHECK(std::abs(m) < 1e-9);
        CHECK(std::abs(v / 16 - 1.0) < 1e-6);
    }
}

TEST_CASE("elementwise and structural ops have correct gradients") {
    RngStream rng(5);
    Tensor a = rng.normal_tensor({2, 3, 4});
    Tensor b = rng.normal_tensor({3, 1});
    Tensor c = rng.normal_tensor({1, 3, 4});
    CHECK(testing::fd_rel_error([&] { return add(a, b); }, {a, b}, 1) < 1e-5);
    CHECK(testing::fd_rel_error([&] { return sub(a, c); }, {a, c}, 2) < 1e-5);
    CHECK(testing::fd_rel_error([&] { return mul(a, b); }, {a, b}, 3) < 1e-5);
    CHECK(testing::fd_rel_error([&] { return gelu(a); }, {a}, 4) < 1e-5);
    CHECK(testing::fd_rel_error([&] { return silu(a); }, {a}, 5) < 1e-5);
    CHECK(testing::fd_rel_error([&] { return square(scale(add_scalar(a, 0.5), 2.0)); }, {a}, 6) < 1e-5);
    CHECK(testing::fd_rel_error([&] { return softmax_lastdim(a); }, {a}, 7) < 1e-5);
    CHECK(testing::fd_rel_error([&] { return layernorm_noaffine(a); }, {a}, 8) < 1e-5);
    CHECK(testing::fd_rel_error([&] { return permute(a, {2, 0, 1}); }, {a}, 9) < 1e-5);
    CHECK(testing::fd_rel_error([&] { return concat({a, c}, 0); }, {a, c}, 10) < 1e-5);
    CHECK(testing::fd_rel_error([&] { return narrow(a, 2, 1, 2); }, {a}, 11) < 1e-5);
    CHECK(testing::fd_rel_error([&] { return mean_lastdim(a); }, {a}, 12) < 1e-5);
    CHECK(testing::fd_rel_error([&] { return mean(a); }, {a}, 13) < 1e-5);
    const std::vector<double> bias{0.0, -std::numeric_limits<double>::infinity(), 0.3, 0.0};
    CHECK(testing::fd_rel_error([&] { return softmax_lastdim_biased(a, bias); }, {a}, 14) < 1e-5);
}

TEST_CASE("shared subexpressions accumulate gradients") {
    Tensor x = Tensor::from({1}, {3.0}, true);
    Tensor y = mul(x, x);
    Tensor z = add(y, x);
    sum(z).backward();
    CHECK(x.grad()[0] == 7.0);
}

TEST_CASE("no-grad guard stops recording") {
    Tensor x = Tensor::from({2}, {1, 2}, true);
    {
        NoGradGuard g;
        CHECK_FALSE(square(x).requires_grad());
    }
    CHECK(square(x).requires_grad());
}

TEST_CASE("non-finite results raise") {
    CHECK_THROWS_AS(scale(Tensor::from({1}, {1e308}), 10.0), NumericalError);
}

TEST_CASE("reshape and permute") {
    const Tensor x = Tensor::from({2, 3}, {0, 1, 2, 3, 4, 5});
    CHECK(reshape(x, {3, -1}).shape() == Shape{3, 2});
    CHECK_THROWS_AS(reshape(x, {4, -1}), ShapeError);
    const Tensor t = permute(x, {1, 0});
    CHECK(t.at({2, 1}) == 5.0);
    CHECK(t.at({0, 1}) == 3.0);
}

TEST_CASE("rng streams are reproducible and distinct") {
    RngStream a(42, 7), b(42, 7);
    for (int i = 0; i < 10; ++i) CHECK(a.next_u64() == b.next_u64());
    auto s1 = RngStream::named(1, "noise");
    auto s2 = RngStream::named(1, "sigma");
    CHECK(s1.next_u64() != s2.next_u64());
    RngStream u(3);
    double mean = 0, var = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double v = u.normal();
        mean += v;
        var += v * v;
    }
    CHECK(std::abs(mean / n) < 0.03);
    CHECK(std::abs(var / n - 1.0) < 0.05);
    for (int i = 0; i < 1000; ++i) CHECK(u.uniform_int(5) < 5);
}
