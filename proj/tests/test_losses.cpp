#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "exstyle/gradcheck_suite.hpp"
#include "exstyle/losses.hpp"

#include <algorithm>
#include <cmath>
#include <random>

using namespace exstyle;

namespace {

Tensor unit_vec(int n, std::mt19937_64& rng) {
    Tensor v = Tensor::normal({n}, 0.0, 1.0, rng);
    return ops::l2_normalize(nullptr, v);
}

// Direct (N+1)-way cross-entropy in extended precision.
long double style_nce_oracle(const Tensor& v, const Tensor& vp, const std::vector<Tensor>& negs,
                             double tau) {
    auto dotv = [](const Tensor& a, const Tensor& b) {
        long double s = 0.0L;
        for (std::int64_t i = 0; i < a.size(); ++i)
            s += static_cast<long double>(a[i]) * static_cast<long double>(b[i]);
        return s;
    };
    std::vector<long double> logits = {dotv(v, vp) / tau};
    for (const Tensor& n : negs) logits.push_back(dotv(v, n) / tau);
    const long double mx = *std::max_element(logits.begin(), logits.end());
    long double denom = 0.0L;
    for (long double l : logits) denom += expl(l - mx);
    return -(logits[0] - mx - logl(denom));
}

}  // namespace

TEST_CASE("style_nce: equal similarities give ln(N+1)") {
    std::mt19937_64 rng(1);
    Tensor v = unit_vec(16, rng);
    // positive and all negatives identical -> all similarities equal
    Tensor other = unit_vec(16, rng);
    std::vector<Tensor> negs(8, other);
    Tensor loss = style_nce(nullptr, v, other, negs, 0.01);
    CHECK(std::abs(loss.value() - std::log(9.0)) < 1e-9);
    // value is tau-independent in the equal-similarity case
    Tensor loss2 = style_nce(nullptr, v, other, negs, 0.5);
    CHECK(std::abs(loss2.value() - std::log(9.0)) < 1e-9);
}

TEST_CASE("style_nce: saturated positive is numerically zero") {
    const int k = 8;
    Tensor v = Tensor::zeros({k});
    v[0] = 1.0;
    std::vector<Tensor> negs;
    for (int i = 1; i <= 4; ++i) {
        Tensor n = Tensor::zeros({k});
        n[i] = 1.0;  // orthogonal to v
        negs.push_back(n);
        negs.push_back(ops::scale(nullptr, n, -1.0));
    }
    Tensor loss = style_nce(nullptr, v, v, negs, 0.01);
    CHECK(loss.value() >= 0.0);
    CHECK(loss.value() < 1e-12);
}

TEST_CASE("style_nce matches extended-precision oracle at tau=0.01") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor v = unit_vec(32, rng), vp = unit_vec(32, rng);
        std::vector<Tensor> negs;
        for (int i = 0; i < 8; ++i) negs.push_back(unit_vec(32, rng));
        const double got = style_nce(nullptr, v, vp, negs, 0.01).value();
        const double want = static_cast<double>(style_nce_oracle(v, vp, negs, 0.01));
        CHECK(std::abs(got - want) < 1e-9 * std::max(1.0, std::abs(want)));
        CHECK(got >= 0.0);
    }
}

TEST_CASE("style_nce rejections and invariances") {
    std::mt19937_64 rng(3);
    Tensor v = unit_vec(8, rng), vp = unit_vec(8, rng);
    std::vector<Tensor> negs;
    for (int i = 0; i < 8; ++i) negs.push_back(unit_vec(8, rng));
    CHECK_THROWS_AS(style_nce(nullptr, v, vp, negs, 0.0), std::invalid_argument);
    Tensor bad = Tensor::full({8}, 0.9);
    CHECK_THROWS_AS(style_nce(nullptr, bad, vp, negs, 0.01), std::invalid_argument);

    // permutation invariance of the negatives
    const double base = style_nce(nullptr, v, vp, negs, 0.01).value();
    std::reverse(negs.begin(), negs.end());
    CHECK(style_nce(nullptr, v, vp, negs, 0.01).value() == doctest::Approx(base).epsilon(1e-14));

    // monotone decreasing in v.v+ with negatives held fixed
    double prev = 1e300;
    for (double c : {-0.5, 0.0, 0.5, 0.9}) {
        Tensor pos = Tensor::zeros({8});
        Tensor q = Tensor::zeros({8});
        q[0] = 1.0;
        pos[0] = c;
        pos[1] = std::sqrt(1.0 - c * c);
        const double l = style_nce(nullptr, q, pos, negs, 0.1).value();
        CHECK(l < prev);
        prev = l;
    }
}

TEST_CASE("style_consistency values and symmetry") {
    std::mt19937_64 rng(4);
    Tensor v = unit_vec(16, rng);
    CHECK(style_consistency(nullptr, v, v).value() == doctest::Approx(-1.0).epsilon(1e-12));
    Tensor a = Tensor::zeros({4}), b = Tensor::zeros({4});
    a[0] = 1.0;
    b[1] = 1.0;
    CHECK(style_consistency(nullptr, a, b).value() == 0.0);
    Tensor na = ops::scale(nullptr, a, -1.0);
    CHECK(style_consistency(nullptr, a, na).value() == doctest::Approx(1.0));
    Tensor w = unit_vec(16, rng);
    CHECK(style_consistency(nullptr, v, w).value() ==
          doctest::Approx(style_consistency(nullptr, w, v).value()).epsilon(1e-14));
    CHECK_THROWS_AS(style_consistency(nullptr, a, unit_vec(6, rng)), std::invalid_argument);
}

TEST_CASE("patch_nce: identical embeddings across locations give ln S") {
    const int s = 16, d = 8;
    Tensor row = Tensor::zeros({d});
    row[0] = 1.0;
    Tensor f = Tensor::zeros({s, d});
    for (int i = 0; i < s; ++i) f[i * d] = 1.0;
    const double loss = patch_nce(nullptr, {f}, {f}, 0.07).value();
    CHECK(loss == doctest::Approx(std::log(static_cast<double>(s))).epsilon(1e-12));
}

TEST_CASE("patch_nce: orthogonal location embeddings, direct-summation oracle") {
    const int s = 64;
    Tensor f = Tensor::zeros({s, s});
    for (int i = 0; i < s; ++i) f[i * s + i] = 1.0;  // mutually orthogonal rows
    const double tau = 0.07;
    // oracle: positive logit 1/tau, the S-1 negatives 0
    const double expected =
        -(1.0 / tau) + std::log(std::exp(1.0 / tau) + (s - 1) * std::exp(0.0));
    CHECK(patch_nce(nullptr, {f}, {f}, tau).value() == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("patch_nce: S=2 closed form and rejections") {
    const double tau = 0.07;
    Tensor fo = Tensor::zeros({2, 2}), fi = Tensor::zeros({2, 2});
    // hand-constructed unit rows
    fo[0] = 1.0;
    fo[2 + 1] = 1.0;
    const double c = std::cos(0.7), sn = std::sin(0.7);
    fi[0] = c;
    fi[1] = sn;
    fi[2] = sn;
    fi[2 + 1] = c;
    // row 0: positive logit c/tau, negative sn/tau; row 1 symmetric
    const double want = -std::log(std::exp(c / tau) / (std::exp(c / tau) + std::exp(sn / tau)));
    CHECK(patch_nce(nullptr, {fo}, {fi}, tau).value() == doctest::Approx(want).epsilon(1e-12));

    Tensor one = Tensor::zeros({1, 2});
    CHECK_THROWS_AS(patch_nce(nullptr, {one}, {one}, tau), std::invalid_argument);
}

TEST_CASE("adversarial losses: trivial cases") {
    Tensor ones = Tensor::full({1, 3, 3}, 1.0);
    Tensor zeros = Tensor::zeros({1, 3, 3});
    auto [ld0, lg0] = adversarial_losses(nullptr, ones, zeros);
    CHECK(ld0.value() == 0.0);
    auto [ld1, lg1] = adversarial_losses(nullptr, zeros, ones);
    CHECK(lg1.value() == 0.0);
    CHECK(ld1.value() == doctest::Approx(1.0).epsilon(1e-14));
    auto [ld2, lg2] = adversarial_losses(nullptr, zeros, ones);
    CHECK(lg2.value() == 0.0);
}

TEST_CASE("total objective: arithmetic and missing-part diagnostics") {
    LossWeights w;  // lambda_nce=1, lambda_style=5, lambda_con=5
    LossParts zero{Tensor::scalar(0.0), Tensor::scalar(0.0), Tensor::scalar(0.0),
                   Tensor::scalar(0.0)};
    CHECK(total_objective(nullptr, zero, w).value() == 0.0);

    LossParts ones{Tensor::scalar(1.0), Tensor::scalar(1.0), Tensor::scalar(1.0),
                   Tensor::scalar(1.0)};
    CHECK(total_objective(nullptr, ones, w).value() == doctest::Approx(12.0).epsilon(1e-14));

    LossParts bad = ones;
    bad.style = Tensor::scalar(std::nan(""));
    CHECK_THROWS_WITH_AS(total_objective(nullptr, bad, w), doctest::Contains("style"),
                         std::invalid_argument);
}

TEST_CASE("every loss passes finite-difference checks") {
    for (const auto& r : run_loss_gradient_suite(42)) {
        INFO(r.name);
        CHECK(r.max_rel_error < 1e-4);
    }
}
