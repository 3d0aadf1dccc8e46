#include "exstyle/losses.hpp"

#include <cmath>

namespace exstyle {

namespace {

void require_unit(const char* who, const Tensor& v) {
    const double norm = std::sqrt(v.array().square().sum());
    if (std::abs(norm - 1.0) > 1e-3)
        throw std::invalid_argument(std::string(who) + ": input vector is not unit norm (||v|| = " +
                                    std::to_string(norm) + ")");
}

}  // namespace

Tensor style_nce(Tape* tape, const Tensor& v, const Tensor& v_pos,
                 const std::vector<Tensor>& v_negs, double tau) {
    if (tau <= 0.0) throw std::invalid_argument("style_nce: tau must be positive");
    if (v_negs.empty()) throw std::invalid_argument("style_nce: need at least one negative");
    require_unit("style_nce", v);
    require_unit("style_nce", v_pos);
    for (const Tensor& n : v_negs) require_unit("style_nce", n);

    // -log softmax of the positive, written as log(1 + sum exp((s_n - s_pos)/tau))
    // so the result carries full relative precision near zero
    Tensor s_pos = ops::dot(tape, v, v_pos);
    std::vector<Tensor> shifted = {Tensor::scalar(0.0)};
    for (const Tensor& n : v_negs)
        shifted.push_back(
            ops::scale(tape, ops::sub(tape, ops::dot(tape, v, n), s_pos), 1.0 / tau));
    return ops::logsumexp(tape, ops::concat_scalars(tape, shifted));
}

Tensor style_consistency(Tape* tape, const Tensor& v_exemplar, const Tensor& v_generated) {
    if (v_exemplar.shape != v_generated.shape)
        throw std::invalid_argument("style_consistency: dimension mismatch " +
                                    v_exemplar.shape_str() + " vs " + v_generated.shape_str());
    require_unit("style_consistency", v_exemplar);
    require_unit("style_consistency", v_generated);
    return ops::scale(tape, ops::dot(tape, v_exemplar, v_generated), -1.0);
}

Tensor patch_nce(Tape* tape, const std::vector<Tensor>& feats_out,
                 const std::vector<Tensor>& feats_in, double tau) {
    if (tau <= 0.0) throw std::invalid_argument("patch_nce: tau must be positive");
    if (feats_out.empty() || feats_out.size() != feats_in.size())
        throw std::invalid_argument("patch_nce: layer count mismatch");
    Tensor total = Tensor::scalar(0.0);
    for (std::size_t l = 0; l < feats_out.size(); ++l) {
        const Tensor& fo = feats_out[l];
        const Tensor& fi = feats_in[l];
        if (fo.rank() != 2 || fo.shape != fi.shape)
            throw std::invalid_argument("patch_nce: layer " + std::to_string(l) +
                                        " embedding shapes " + fo.shape_str() + " vs " +
                                        fi.shape_str());
        if (fo.shape[0] < 2)
            throw std::invalid_argument("patch_nce: need at least 2 locations, got " +
                                        std::to_string(fo.shape[0]));
        Tensor logits = ops::scale(tape, ops::matmul_nt(tape, fo, fi), 1.0 / tau);
        Tensor lse = ops::logsumexp_rows(tape, logits);
        Tensor pos = ops::take_diag(tape, logits);
        Tensor layer_loss = ops::mean(tape, ops::sub(tape, lse, pos));
        total = ops::add(tape, total, layer_loss);
    }
    return ops::scale(tape, total, 1.0 / static_cast<double>(feats_out.size()));
}

std::pair<Tensor, Tensor> adversarial_losses(Tape* tape, const Tensor& d_real,
                                             const Tensor& d_fake) {
    if (!d_real.all_finite() || !d_fake.all_finite())
        throw std::invalid_argument("adversarial_losses: non-finite score map");
    Tensor rm1 = ops::add_const(tape, d_real, -1.0);
    Tensor l_d = ops::add(tape, ops::scale(tape, ops::mean(tape, ops::mul(tape, rm1, rm1)), 0.5),
                          ops::scale(tape, ops::mean(tape, ops::mul(tape, d_fake, d_fake)), 0.5));
    Tensor fm1 = ops::add_const(tape, d_fake, -1.0);
    Tensor l_g = ops::mean(tape, ops::mul(tape, fm1, fm1));
    return {l_d, l_g};
}

Tensor total_objective(Tape* tape, const LossParts& parts, const LossWeights& w) {
    const std::pair<const char*, const Tensor*> named[] = {{"adv", &parts.adv},
                                                           {"patch_nce", &parts.patch_nce},
                                                           {"style", &parts.style},
                                                           {"consistency", &parts.consistency}};
    for (auto [name, t] : named) {
        if (!t->is_scalar())
            throw std::invalid_argument(std::string("total_objective: part '") + name +
                                        "' is not scalar");
        if (!std::isfinite(t->value()))
            throw std::invalid_argument(std::string("total_objective: part '") + name +
                                        "' is non-finite");
    }
    Tensor total = ops::add(tape, parts.adv, ops::scale(tape, parts.patch_nce, w.lambda_nce));
    total = ops::add(tape, total, ops::scale(tape, parts.style, w.lambda_style));
    total = ops::add(tape, total, ops::scale(tape, parts.consistency, w.lambda_con));
    return total;
}

}  // namespace exstyle
