#pragma once

#include "exstyle/autograd.hpp"

namespace exstyle {

struct LossWeights {
    double lambda_style = 5.0;
    double lambda_con = 5.0;
    double lambda_nce = 1.0;
    double tau_style = 0.01;
    double tau_patch = 0.07;
};

// One query patch, its unperturbed positive, and N intensity-perturbed
// negatives sharing the positive's anatomy.
struct ContrastiveBatch {
    Tensor query;
    Tensor positive;
    std::vector<Tensor> negatives;
};

// Scalar components of the combined generator-side objective.
struct LossParts {
    Tensor adv;          // generator adversarial term
    Tensor patch_nce;    // anatomy-correspondence term
    Tensor style;        // style contrastive term
    Tensor consistency;  // exemplar/style-of-output agreement
};

// (N+1)-way temperature-scaled cross-entropy selecting the positive among
// perturbed negatives; computed via log-sum-exp.
Tensor style_nce(Tape* tape, const Tensor& v, const Tensor& v_pos,
                 const std::vector<Tensor>& v_negs, double tau);

// Negative dot product of two unit style vectors.
Tensor style_consistency(Tape* tape, const Tensor& v_exemplar, const Tensor& v_generated);

// Location-aligned patch contrast: per layer, each output-image embedding
// must match the same-location input embedding against the other S-1
// locations. Averaged over locations and layers.
Tensor patch_nce(Tape* tape, const std::vector<Tensor>& feats_out,
                 const std::vector<Tensor>& feats_in, double tau);

// Least-squares GAN losses: {L_D, L_G}.
std::pair<Tensor, Tensor> adversarial_losses(Tape* tape, const Tensor& d_real,
                                             const Tensor& d_fake);

// adv + lambda_nce * patch_nce + lambda_style * style + lambda_con * consistency.
Tensor total_objective(Tape* tape, const LossParts& parts, const LossWeights& w);

}  // namespace exstyle
