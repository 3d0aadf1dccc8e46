#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "exstyle/autograd.hpp"
#include "exstyle/gradcheck_suite.hpp"

#include <cmath>

using namespace exstyle;

TEST_CASE("l2_normalize 3-4-5 triangle") {
    Tensor x = Tensor::from({2}, {3.0, 4.0});
    Tensor y = ops::l2_normalize(nullptr, x);
    CHECK(y[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(y[1] == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("l2_normalize output is unit for norms above 1e-6") {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 20; ++i) {
        Tensor x = Tensor::uniform({16}, -1.0, 1.0, rng);
        x.array() *= 1e-5;  // small but above the guard
        Tensor y = ops::l2_normalize(nullptr, x);
        CHECK(std::abs(std::sqrt(y.array().square().sum()) - 1.0) < 1e-9);
    }
}

TEST_CASE("instance norm of constant channel is zero") {
    Tensor x = Tensor::full({2, 4, 4}, 3.25);
    Tensor y = ops::instance_norm(nullptr, x);
    for (std::int64_t i = 0; i < y.size(); ++i) CHECK(y[i] == 0.0);
}

TEST_CASE("conv with all-ones summing kernel") {
    std::mt19937_64 rng(1);
    Tensor x = Tensor::uniform({1, 3, 3}, 0.0, 1.0, rng);
    Tensor w = Tensor::full({1, 1, 3, 3}, 1.0);
    Tensor b = Tensor::zeros({1});
    Tensor y = ops::conv2d(nullptr, x, w, b, 1, 0);
    CHECK(y.shape == std::vector<int>{1, 1, 1});
    CHECK(y[0] == doctest::Approx(x.array().sum()).epsilon(1e-12));
}

TEST_CASE("backward of linear form: grad(w) == x") {
    std::mt19937_64 rng(2);
    Tensor w = Tensor::uniform({8}, -1.0, 1.0, rng, true);
    Tensor x = Tensor::uniform({8}, -1.0, 1.0, rng);
    Tape tape;
    Tensor loss = ops::sum(&tape, ops::mul(&tape, w, x));
    tape.backward(loss);
    for (int i = 0; i < 8; ++i) CHECK(w.gradvec()[i] == doctest::Approx(x[i]).epsilon(1e-12));
}

TEST_CASE("backward of mean of squares: grad(w) == 2w/n") {
    std::mt19937_64 rng(3);
    Tensor w = Tensor::uniform({10}, -2.0, 2.0, rng, true);
    Tape tape;
    Tensor loss = ops::mean(&tape, ops::mul(&tape, w, w));
    tape.backward(loss);
    for (int i = 0; i < 10; ++i)
        CHECK(w.gradvec()[i] == doctest::Approx(2.0 * w[i] / 10.0).epsilon(1e-12));
}

TEST_CASE("dot(v,v) gradient is 2v") {
    std::mt19937_64 rng(4);
    Tensor v = Tensor::uniform({12}, -1.0, 1.0, rng, true);
    auto f = [](Tape* t, std::vector<Tensor>& xs) { return ops::dot(t, xs[0], xs[0]); };
    CHECK(gradient_check(f, {v}, 1e-5) < 1e-6);
    v.zero_grad();
    Tape tape;
    Tensor loss = ops::dot(&tape, v, v);
    tape.backward(loss);
    for (int i = 0; i < 12; ++i) CHECK(v.gradvec()[i] == doctest::Approx(2.0 * v[i]));
}

TEST_CASE("gradient accumulates across fan-out") {
    Tensor x = Tensor::from({1}, {2.0});
    x.requires_grad = true;
    Tape tape;
    Tensor y = ops::add(&tape, x, x);  // y = 2x
    Tensor loss = ops::sum(&tape, y);
    tape.backward(loss);
    CHECK(x.gradvec()[0] == doctest::Approx(2.0));
}

TEST_CASE("every registered op passes finite-difference checks") {
    // the same suite the grad-check CLI and acceptance A2 run
    auto results = run_op_gradient_suite(1234);
    CHECK(!results.empty());
    for (const auto& r : results) {
        INFO(r.name);
        CHECK(r.max_rel_error < 1e-4);
    }
}

TEST_CASE("replaying a tape twice yields bit-identical gradients") {
    std::mt19937_64 rng(7);
    Tensor x = Tensor::uniform({1, 8, 8}, -1.0, 1.0, rng, true);
    Tensor w = Tensor::uniform({4, 1, 3, 3}, -0.5, 0.5, rng, true);
    Tensor b = Tensor::uniform({4}, -0.1, 0.1, rng, true);
    auto run = [&]() {
        x.zero_grad();
        w.zero_grad();
        b.zero_grad();
        Tape tape;
        Tensor h = ops::conv2d(&tape, x, w, b, 2, 1);
        h = ops::tanh(&tape, h);
        Tensor loss = ops::mean(&tape, ops::mul(&tape, h, h));
        tape.backward(loss);
        return w.gradvec();
    };
    auto g1 = run();
    auto g2 = run();
    CHECK(g1 == g2);
}

TEST_CASE("shape mismatch diagnostics name the op") {
    Tensor a = Tensor::zeros({3});
    Tensor b = Tensor::zeros({4});
    CHECK_THROWS_WITH_AS(ops::add(nullptr, a, b), doctest::Contains("add"),
                         std::invalid_argument);
    Tensor x = Tensor::zeros({2, 4, 4});
    Tensor w = Tensor::zeros({1, 3, 3, 3});
    CHECK_THROWS_WITH_AS(ops::conv2d(nullptr, x, w, Tensor::zeros({1}), 1, 0),
                         doctest::Contains("conv2d"), std::invalid_argument);
}

TEST_CASE("unknown op kind is rejected") {
    CHECK_THROWS_AS(forward_op(nullptr, "frobnicate", {}), std::invalid_argument);
}

TEST_CASE("backward rejects non-scalar loss") {
    Tensor x = Tensor::zeros({3}, true);
    Tape tape;
    Tensor y = ops::scale(&tape, x, 2.0);
    CHECK_THROWS_AS(tape.backward(y), std::invalid_argument);
}

TEST_CASE("forward_op dispatcher matches the typed functions") {
    std::mt19937_64 rng(9);
    Tensor x = Tensor::uniform({2, 4, 4}, 0.1, 1.0, rng);
    Tensor via_dispatch = forward_op(nullptr, "instance_norm", {x}, {{"eps", 1e-5}});
    Tensor direct = ops::instance_norm(nullptr, x, 1e-5);
    for (std::int64_t i = 0; i < x.size(); ++i) CHECK(via_dispatch[i] == direct[i]);
}
