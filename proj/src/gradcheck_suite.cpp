#include "exstyle/gradcheck_suite.hpp"

#include "exstyle/losses.hpp"
#include "exstyle/models.hpp"

#include <cmath>

namespace exstyle {

namespace {

using ops::concat_scalars;

// Random values bounded away from activation kinks and log's domain edge.
Tensor away_from_zero(std::vector<int> shape, std::mt19937_64& rng) {
    Tensor t = Tensor::uniform(std::move(shape), 0.15, 1.0, rng, true);
    std::bernoulli_distribution flip(0.5);
    for (double& v : *t.data)
        if (flip(rng)) v = -v;
    return t;
}

Tensor positive(std::vector<int> shape, std::mt19937_64& rng) {
    return Tensor::uniform(std::move(shape), 0.3, 2.0, rng, true);
}

// Scalarize a tensor-valued op output with fixed random weights so every
// output coordinate contributes to the checked gradient.
Tensor weighted(Tape* t, const Tensor& y, const Tensor& r) {
    return ops::sum(t, ops::mul(t, y, r));
}

struct Probe {
    TensorFn f;
    std::vector<Tensor> xs;
};

Probe make_probe(const std::string& op, std::mt19937_64& rng) {
    using namespace ops;
    if (op == "conv2d") {
        Tensor x = away_from_zero({2, 6, 6}, rng);
        Tensor w = away_from_zero({3, 2, 3, 3}, rng);
        Tensor b = away_from_zero({3}, rng);
        Tensor r = Tensor::uniform({3, 3, 3}, -1.0, 1.0, rng);
        return {[r](Tape* t, std::vector<Tensor>& xs) {
                    return weighted(t, conv2d(t, xs[0], xs[1], xs[2], 2, 1), r);
                },
                {x, w, b}};
    }
    if (op == "upsample_nearest2x") {
        Tensor x = away_from_zero({2, 3, 3}, rng);
        Tensor r = Tensor::uniform({2, 6, 6}, -1.0, 1.0, rng);
        return {[r](Tape* t, std::vector<Tensor>& xs) {
                    return weighted(t, upsample_nearest2x(t, xs[0]), r);
                },
                {x}};
    }
    if (op == "instance_norm") {
        Tensor x = away_from_zero({2, 4, 4}, rng);
        Tensor r = Tensor::uniform({2, 4, 4}, -1.0, 1.0, rng);
        return {[r](Tape* t, std::vector<Tensor>& xs) {
                    return weighted(t, instance_norm(t, xs[0]), r);
                },
                {x}};
    }
    if (op == "scale_shift") {
        Tensor x = away_from_zero({3, 4, 4}, rng);
        Tensor g = away_from_zero({3}, rng);
        Tensor b = away_from_zero({3}, rng);
        Tensor r = Tensor::uniform({3, 4, 4}, -1.0, 1.0, rng);
        return {[r](Tape* t, std::vector<Tensor>& xs) {
                    return weighted(t, scale_shift(t, xs[0], xs[1], xs[2]), r);
                },
                {x, g, b}};
    }
    if (op == "leaky_relu" || op == "relu" || op == "tanh" || op == "exp") {
        Tensor x = away_from_zero({12}, rng);
        Tensor r = Tensor::uniform({12}, -1.0, 1.0, rng);
        return {[r, op](Tape* t, std::vector<Tensor>& xs) {
                    return weighted(t, forward_op(t, op, {xs[0]}, {{"alpha", 0.2}}), r);
                },
                {x}};
    }
    if (op == "log") {
        Tensor x = positive({12}, rng);
        Tensor r = Tensor::uniform({12}, -1.0, 1.0, rng);
        return {[r](Tape* t, std::vector<Tensor>& xs) { return weighted(t, log(t, xs[0]), r); },
                {x}};
    }
    if (op == "linear") {
        Tensor w = away_from_zero({5, 7}, rng);
        Tensor x = away_from_zero({7}, rng);
        Tensor b = away_from_zero({5}, rng);
        Tensor r = Tensor::uniform({5}, -1.0, 1.0, rng);
        return {[r](Tape* t, std::vector<Tensor>& xs) {
                    return weighted(t, linear(t, xs[0], xs[1], xs[2]), r);
                },
                {w, x, b}};
    }
    if (op == "global_avg_pool") {
        Tensor x = away_from_zero({3, 5, 5}, rng);
        Tensor r = Tensor::uniform({3}, -1.0, 1.0, rng);
        return {[r](Tape* t, std::vector<Tensor>& xs) {
                    return weighted(t, global_avg_pool(t, xs[0]), r);
                },
                {x}};
    }
    if (op == "l2_normalize") {
        Tensor x = away_from_zero({3, 6}, rng);
        Tensor r = Tensor::uniform({3, 6}, -1.0, 1.0, rng);
        return {[r](Tape* t, std::vector<Tensor>& xs) {
                    return weighted(t, l2_normalize(t, xs[0]), r);
                },
                {x}};
    }
    if (op == "add" || op == "sub" || op == "mul") {
        Tensor a = away_from_zero({9}, rng);
        Tensor b = away_from_zero({9}, rng);
        Tensor r = Tensor::uniform({9}, -1.0, 1.0, rng);
        return {[r, op](Tape* t, std::vector<Tensor>& xs) {
                    return weighted(t, forward_op(t, op, {xs[0], xs[1]}), r);
                },
                {a, b}};
    }
    if (op == "dot") {
        Tensor a = away_from_zero({9}, rng);
        Tensor b = away_from_zero({9}, rng);
        return {[](Tape* t, std::vector<Tensor>& xs) { return dot(t, xs[0], xs[1]); }, {a, b}};
    }
    if (op == "sum" || op == "mean" || op == "logsumexp") {
        Tensor x = away_from_zero({10}, rng);
        return {[op](Tape* t, std::vector<Tensor>& xs) { return forward_op(t, op, {xs[0]}); },
                {x}};
    }
    if (op == "logsumexp_rows") {
        Tensor x = away_from_zero({4, 6}, rng);
        Tensor r = Tensor::uniform({4}, -1.0, 1.0, rng);
        return {[r](Tape* t, std::vector<Tensor>& xs) {
                    return weighted(t, logsumexp_rows(t, xs[0]), r);
                },
                {x}};
    }
    if (op == "take_diag") {
        Tensor x = away_from_zero({5, 5}, rng);
        Tensor r = Tensor::uniform({5}, -1.0, 1.0, rng);
        return {[r](Tape* t, std::vector<Tensor>& xs) { return weighted(t, take_diag(t, xs[0]), r); },
                {x}};
    }
    if (op == "matmul_nt") {
        Tensor a = away_from_zero({4, 6}, rng);
        Tensor b = away_from_zero({3, 6}, rng);
        Tensor r = Tensor::uniform({4, 3}, -1.0, 1.0, rng);
        return {[r](Tape* t, std::vector<Tensor>& xs) {
                    return weighted(t, matmul_nt(t, xs[0], xs[1]), r);
                },
                {a, b}};
    }
    if (op == "add_rowvec") {
        Tensor a = away_from_zero({4, 5}, rng);
        Tensor b = away_from_zero({5}, rng);
        Tensor r = Tensor::uniform({4, 5}, -1.0, 1.0, rng);
        return {[r](Tape* t, std::vector<Tensor>& xs) {
                    return weighted(t, add_rowvec(t, xs[0], xs[1]), r);
                },
                {a, b}};
    }
    if (op == "concat_scalars") {
        Tensor a = away_from_zero({1}, rng);
        Tensor b = away_from_zero({1}, rng);
        Tensor c = away_from_zero({1}, rng);
        Tensor r = Tensor::uniform({3}, -1.0, 1.0, rng);
        return {[r](Tape* t, std::vector<Tensor>& xs) {
                    return weighted(t, concat_scalars(t, {xs[0], xs[1], xs[2]}), r);
                },
                {a, b, c}};
    }
    if (op == "gather_hw") {
        Tensor x = away_from_zero({3, 5, 5}, rng);
        std::uniform_int_distribution<int> d(0, 4);
        std::vector<std::pair<int, int>> locs;
        for (int i = 0; i < 6; ++i) locs.emplace_back(d(rng), d(rng));
        Tensor r = Tensor::uniform({6, 3}, -1.0, 1.0, rng);
        return {[r, locs](Tape* t, std::vector<Tensor>& xs) {
                    return weighted(t, gather_hw(t, xs[0], locs), r);
                },
                {x}};
    }
    if (op == "scale" || op == "add_const") {
        Tensor x = away_from_zero({8}, rng);
        Tensor r = Tensor::uniform({8}, -1.0, 1.0, rng);
        return {[r, op](Tape* t, std::vector<Tensor>& xs) {
                    return weighted(t, forward_op(t, op, {xs[0]}, {{"c", 1.7}}), r);
                },
                {x}};
    }
    throw std::logic_error("no gradient probe registered for op '" + op + "'");
}

}  // namespace

std::vector<GradCheckResult> run_op_gradient_suite(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<GradCheckResult> out;
    for (const std::string& op : registered_ops()) {
        double worst = 0.0;
        for (int trial = 0; trial < 10; ++trial) {
            Probe p = make_probe(op, rng);
            worst = std::max(worst, gradient_check(p.f, p.xs, 1e-4));
        }
        out.push_back({op, worst});
    }
    return out;
}

std::vector<GradCheckResult> run_loss_gradient_suite(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<GradCheckResult> out;

    auto unit = [&rng](int n) {
        Tensor v = Tensor::uniform({n}, -1.0, 1.0, rng, true);
        return ops::l2_normalize(nullptr, v);
    };

    {  // style contrastive loss over raw (pre-normalization) vectors
        double worst = 0.0;
        for (int trial = 0; trial < 10; ++trial) {
            // Candidates cluster around a shared direction, as exemplar crops do
            // in practice.  This keeps all tau=0.01 softmax weights large enough
            // for a central difference to resolve; with fully random vectors the
            // dominated negatives carry true gradients below 1e-10, under the
            // resolution of f(x+eps)-f(x-eps) in double precision.
            Tensor base = Tensor::uniform({256}, -1.0, 1.0, rng);
            std::vector<Tensor> xs;
            for (int i = 0; i < 2 + 4; ++i) {
                Tensor n = Tensor::normal({256}, 0.0, 0.2, rng);
                Tensor x = Tensor::zeros({256});
                for (int j = 0; j < 256; ++j) x[j] = base[j] + n[j];
                x.requires_grad = true;
                xs.push_back(x);
            }
            auto f = [](Tape* t, std::vector<Tensor>& in) {
                Tensor q = ops::l2_normalize(t, in[0]);
                Tensor pos = ops::l2_normalize(t, in[1]);
                std::vector<Tensor> negs;
                for (std::size_t i = 2; i < in.size(); ++i)
                    negs.push_back(ops::l2_normalize(t, in[i]));
                return style_nce(t, q, pos, negs, 0.01);
            };
            worst = std::max(worst, gradient_check(f, xs, 1e-4));
        }
        out.push_back({"style_nce", worst});
    }
    {  // style consistency
        double worst = 0.0;
        for (int trial = 0; trial < 10; ++trial) {
            std::vector<Tensor> xs = {Tensor::uniform({8}, -1.0, 1.0, rng, true),
                                      Tensor::uniform({8}, -1.0, 1.0, rng, true)};
            auto f = [](Tape* t, std::vector<Tensor>& in) {
                return style_consistency(t, ops::l2_normalize(t, in[0]),
                                         ops::l2_normalize(t, in[1]));
            };
            worst = std::max(worst, gradient_check(f, xs, 1e-4));
        }
        out.push_back({"style_consistency", worst});
    }
    {  // patch NCE over one layer of raw embeddings
        double worst = 0.0;
        for (int trial = 0; trial < 10; ++trial) {
            std::vector<Tensor> xs = {Tensor::uniform({5, 6}, -1.0, 1.0, rng, true),
                                      Tensor::uniform({5, 6}, -1.0, 1.0, rng, true)};
            auto f = [](Tape* t, std::vector<Tensor>& in) {
                std::vector<Tensor> fo = {ops::l2_normalize(t, in[0])};
                std::vector<Tensor> fi = {ops::l2_normalize(t, in[1])};
                return patch_nce(t, fo, fi, 0.07);
            };
            worst = std::max(worst, gradient_check(f, xs, 1e-4));
        }
        out.push_back({"patch_nce", worst});
    }
    {  // adversarial pair
        double worst = 0.0;
        for (int trial = 0; trial < 10; ++trial) {
            std::vector<Tensor> xs = {Tensor::uniform({1, 3, 3}, -1.0, 1.0, rng, true),
                                      Tensor::uniform({1, 3, 3}, -1.0, 1.0, rng, true)};
            auto fd = [](Tape* t, std::vector<Tensor>& in) {
                return adversarial_losses(t, in[0], in[1]).first;
            };
            auto fg = [](Tape* t, std::vector<Tensor>& in) {
                return adversarial_losses(t, in[0], in[1]).second;
            };
            worst = std::max(worst, gradient_check(fd, xs, 1e-4));
            worst = std::max(worst, gradient_check(fg, xs, 1e-4));
        }
        out.push_back({"adversarial_losses", worst});
    }
    {  // weighted total objective
        double worst = 0.0;
        LossWeights w;
        for (int trial = 0; trial < 10; ++trial) {
            std::vector<Tensor> xs;
            for (int i = 0; i < 4; ++i) xs.push_back(Tensor::uniform({1}, -1.0, 1.0, rng, true));
            auto f = [w](Tape* t, std::vector<Tensor>& in) {
                LossParts parts{in[0], in[1], in[2], in[3]};
                return total_objective(t, parts, w);
            };
            worst = std::max(worst, gradient_check(f, xs, 1e-4));
        }
        out.push_back({"total_objective", worst});
    }
    {  // DIN forward w.r.t. mapping-layer weights
        double worst = 0.0;
        for (int trial = 0; trial < 10; ++trial) {
            const int c = 3, k = 6;
            std::vector<Tensor> xs = {
                Tensor::uniform({c, k}, -0.5, 0.5, rng, true),  // W_gamma
                Tensor::uniform({c}, 0.5, 1.5, rng, true),      // b_gamma
                Tensor::uniform({c, k}, -0.5, 0.5, rng, true),  // W_beta
                Tensor::uniform({c}, -0.5, 0.5, rng, true),     // b_beta
                Tensor::uniform({c, 4, 4}, -1.0, 1.0, rng, true)};
            Tensor v = unit(k);
            Tensor r = Tensor::uniform({c, 4, 4}, -1.0, 1.0, rng);
            auto f = [v, r](Tape* t, std::vector<Tensor>& in) {
                DinLayer layer{in[0], in[1], in[2], in[3]};
                Tensor y = din_forward(t, layer, in[4], v);
                return ops::sum(t, ops::mul(t, y, r));
            };
            worst = std::max(worst, gradient_check(f, xs, 1e-4));
        }
        out.push_back({"din_forward", worst});
    }
    return out;
}

}  // namespace exstyle
