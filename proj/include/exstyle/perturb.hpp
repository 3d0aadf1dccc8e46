#pragma once

#include "exstyle/tensor.hpp"

namespace exstyle {

// Derives an independent stream seed from (seed, tag) via splitmix64, so one
// master seed can deterministically fan out to many consumers.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag);

enum class PerturbKind { contrast, gaussian_smooth, gaussian_noise, bias_field, mixture };

// Seeded description of one intensity perturbation; applying the same spec
// to the same image always yields the same output.
struct PerturbationSpec {
    PerturbKind kind = PerturbKind::contrast;
    double gamma = 1.0;       // contrast exponent
    double sigma = 0.0;       // smoothing radius, pixels
    double noise_std = 0.0;   // additive noise
    double strength = 0.0;    // bias-field magnitude
    std::uint64_t seed = 0;
};

// Sampling ranges for the perturbation parameters; exposed in the config.
struct PerturbRanges {
    double gamma_min = 0.5, gamma_max = 2.0;
    double sigma_min = 0.0, sigma_max = 2.0;
    double noise_min = 0.0, noise_max = 0.2;
    double strength_min = 0.0, strength_max = 0.5;
};

// out = img^gamma elementwise; img in [0,1], gamma in (0, inf).
Tensor adjust_contrast(const Tensor& img, double gamma);
// Separable Gaussian blur, kernel radius ceil(3 sigma), reflect padding.
Tensor gaussian_smooth(const Tensor& img, double sigma);
// Seeded additive Gaussian noise, clamped to [0,1].
Tensor gaussian_noise(const Tensor& img, double std, std::uint64_t seed);
// Multiplicative exp(strength * B) with B a standardized smooth field built
// by bicubic upsampling of a seeded 4x4 Gaussian grid.
Tensor bias_field(const Tensor& img, double strength, std::uint64_t seed);
// The smooth field B itself (for oracle comparison).
Tensor bias_field_grid(int h, int w, std::uint64_t seed);

// Uniform over the five kinds; mixture composes contrast -> smooth ->
// noise -> bias with independently sampled parameters.
PerturbationSpec sample_perturbation(std::uint64_t seed, const PerturbRanges& ranges = {});
Tensor apply(const PerturbationSpec& spec, const Tensor& img);

}  // namespace exstyle
