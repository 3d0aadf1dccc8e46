#pragma once

#include "exstyle/autograd.hpp"

namespace exstyle {

// Mapping layer producing the exemplar-specific affine parameters of a
// dynamic instance normalization site: gamma = W_gamma v + b_gamma,
// beta = W_beta v + b_beta.
struct DinLayer {
    Tensor w_gamma;  // [C,K]
    Tensor b_gamma;  // [C]
    Tensor w_beta;   // [C,K]
    Tensor b_beta;   // [C]
};

// Generator-encoder activations tapped for patch contrast:
// t0 = input image, t1 = after the first downsample, t2 = after the
// residual blocks.
struct GenTaps {
    Tensor t0, t1, t2;
};

// Named parameters of the style encoder, generator (with DIN mapping
// layers), discriminator, and per-layer projection heads.
struct ModelBundle {
    std::map<std::string, Tensor> params;

    Tensor& p(const std::string& name);
    const Tensor& p(const std::string& name) const;
    DinLayer din(const std::string& prefix) const;  // e.g. "g.u1.din"
    int style_dim() const;

    // Parameter-name groups for the optimizer phases: "d", "g" (generator
    // plus projection heads), "es".
    std::vector<std::string> group(const std::string& which) const;
    void zero_all_grads();
};

ModelBundle init_models(int style_dim, std::uint64_t seed);

// Conv stack -> global average pool -> linear -> L2 normalize; unit output.
Tensor encode_style(Tape* tape, const ModelBundle& m, const Tensor& img);

// Vanilla instance norm followed by de-normalization with v-generated
// affine parameters.
Tensor din_forward(Tape* tape, const DinLayer& layer, const Tensor& z, const Tensor& v);

// Encoder half of the generator; fills taps when given.
Tensor generator_encode(Tape* tape, const ModelBundle& m, const Tensor& x, GenTaps* taps);
// Decoder half; the two upsampling normalizations are DIN sites driven by v.
Tensor generator_decode(Tape* tape, const ModelBundle& m, const Tensor& code, const Tensor& v);
Tensor generate(Tape* tape, const ModelBundle& m, const Tensor& x, const Tensor& v);

// 3-layer strided PatchGAN score map.
Tensor discriminate(Tape* tape, const ModelBundle& m, const Tensor& img);

// Per-tap spatial sample locations (row, col), one list per tapped layer.
using LayerLocations = std::vector<std::vector<std::pair<int, int>>>;

// Gather tapped features at the given locations and push them through the
// per-layer two-layer projection heads; rows are L2-normalized.
std::vector<Tensor> extract_patch_features(Tape* tape, const ModelBundle& m, const GenTaps& taps,
                                           const LayerLocations& locations);
std::vector<Tensor> extract_patch_features(Tape* tape, const ModelBundle& m, const Tensor& img,
                                           const LayerLocations& locations);

// Channel counts of the tapped layers, in tap order.
const std::vector<int>& nce_tap_channels();

}  // namespace exstyle
