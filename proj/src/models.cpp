#include "exstyle/models.hpp"

#include <cmath>

namespace exstyle {

using namespace ops;

Tensor& ModelBundle::p(const std::string& name) {
    auto it = params.find(name);
    if (it == params.end()) throw std::invalid_argument("unknown parameter '" + name + "'");
    return it->second;
}

const Tensor& ModelBundle::p(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end()) throw std::invalid_argument("unknown parameter '" + name + "'");
    return it->second;
}

DinLayer ModelBundle::din(const std::string& prefix) const {
    return {p(prefix + ".wg"), p(prefix + ".bg"), p(prefix + ".wb"), p(prefix + ".bb")};
}

int ModelBundle::style_dim() const { return p("es.fc.w").shape[0]; }

std::vector<std::string> ModelBundle::group(const std::string& which) const {
    std::vector<std::string> out;
    for (const auto& [name, t] : params) {
        if (which == "d" && name.rfind("d.", 0) == 0) out.push_back(name);
        if (which == "g" && (name.rfind("g.", 0) == 0 || name.rfind("head", 0) == 0))
            out.push_back(name);
        if (which == "es" && name.rfind("es.", 0) == 0) out.push_back(name);
    }
    if (out.empty()) throw std::invalid_argument("unknown parameter group '" + which + "'");
    return out;
}

void ModelBundle::zero_all_grads() {
    for (auto& [name, t] : params) t.zero_grad();
}

const std::vector<int>& nce_tap_channels() {
    static const std::vector<int> c = {1, 64, 128};
    return c;
}

namespace {

Tensor he_conv(std::vector<int> shape, std::mt19937_64& rng) {
    const double fan_in = static_cast<double>(shape[1] * shape[2] * shape[3]);
    return Tensor::normal(std::move(shape), 0.0, std::sqrt(2.0 / fan_in), rng, true);
}

Tensor he_fc(std::vector<int> shape, std::mt19937_64& rng) {
    const double fan_in = static_cast<double>(shape[1]);
    return Tensor::normal(std::move(shape), 0.0, std::sqrt(2.0 / fan_in), rng, true);
}

void add_din(ModelBundle& m, const std::string& prefix, int c, int k) {
    // W = 0, b_gamma = 1, b_beta = 0: DIN starts as vanilla IN for every v.
    m.params[prefix + ".wg"] = Tensor::zeros({c, k}, true);
    m.params[prefix + ".bg"] = Tensor::full({c}, 1.0, true);
    m.params[prefix + ".wb"] = Tensor::zeros({c, k}, true);
    m.params[prefix + ".bb"] = Tensor::zeros({c}, true);
}

}  // namespace

ModelBundle init_models(int style_dim, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    ModelBundle m;
    auto conv = [&](const std::string& name, int co, int ci, int k) {
        m.params[name + ".w"] = he_conv({co, ci, k, k}, rng);
        m.params[name + ".b"] = Tensor::zeros({co}, true);
    };
    auto fc = [&](const std::string& name, int no, int ni) {
        m.params[name + ".w"] = he_fc({no, ni}, rng);
        m.params[name + ".b"] = Tensor::zeros({no}, true);
    };

    // style encoder
    conv("es.c1", 32, 1, 3);
    conv("es.c2", 64, 32, 3);
    conv("es.c3", 128, 64, 3);
    conv("es.c4", 256, 128, 3);
    fc("es.fc", style_dim, 256);

    // generator
    conv("g.c1", 32, 1, 3);
    conv("g.d1", 64, 32, 3);
    conv("g.d2", 128, 64, 3);
    for (int i = 0; i < 4; ++i) {
        conv("g.r" + std::to_string(i) + ".c1", 128, 128, 3);
        conv("g.r" + std::to_string(i) + ".c2", 128, 128, 3);
    }
    conv("g.u1.conv", 64, 128, 3);
    add_din(m, "g.u1.din", 64, style_dim);
    conv("g.u2.conv", 32, 64, 3);
    add_din(m, "g.u2.din", 32, style_dim);
    conv("g.out", 1, 32, 3);

    // discriminator
    conv("d.c1", 32, 1, 4);
    conv("d.c2", 64, 32, 4);
    conv("d.c3", 1, 64, 4);

    // projection heads for the tapped layers
    const auto& taps = nce_tap_channels();
    for (std::size_t l = 0; l < taps.size(); ++l) {
        fc("head" + std::to_string(l) + ".fc1", 128, taps[l]);
        fc("head" + std::to_string(l) + ".fc2", 64, 128);
    }
    return m;
}

Tensor encode_style(Tape* tape, const ModelBundle& m, const Tensor& img) {
    if (img.rank() != 3 || img.shape[0] != 1)
        throw std::invalid_argument("encode_style: expected [1,H,W] input, got " +
                                    img.shape_str());
    if (img.shape[1] < 32 || img.shape[2] < 32)
        throw std::invalid_argument("encode_style: input must be at least 32x32, got " +
                                    img.shape_str());
    Tensor h = img;
    for (const char* name : {"es.c1", "es.c2", "es.c3", "es.c4"}) {
        h = conv2d(tape, h, m.p(std::string(name) + ".w"), m.p(std::string(name) + ".b"), 2, 1);
        h = leaky_relu(tape, h, 0.2);
    }
    Tensor pooled = global_avg_pool(tape, h);
    Tensor v = linear(tape, m.p("es.fc.w"), pooled, m.p("es.fc.b"));
    return l2_normalize(tape, v);
}

Tensor din_forward(Tape* tape, const DinLayer& layer, const Tensor& z, const Tensor& v) {
    if (z.rank() != 3 || z.shape[0] != layer.w_gamma.shape[0])
        throw std::invalid_argument("din_forward: channel mismatch between z " + z.shape_str() +
                                    " and mapping layer [" +
                                    std::to_string(layer.w_gamma.shape[0]) + " channels]");
    Tensor gamma = linear(tape, layer.w_gamma, v, layer.b_gamma);
    Tensor beta = linear(tape, layer.w_beta, v, layer.b_beta);
    return scale_shift(tape, instance_norm(tape, z), gamma, beta);
}

namespace {

Tensor in_relu_conv(Tape* tape, const ModelBundle& m, const Tensor& x, const std::string& name,
                    int stride) {
    Tensor h = conv2d(tape, x, m.p(name + ".w"), m.p(name + ".b"), stride, 1);
    return relu(tape, instance_norm(tape, h));
}

}  // namespace

Tensor generator_encode(Tape* tape, const ModelBundle& m, const Tensor& x, GenTaps* taps) {
    if (x.rank() != 3 || x.shape[0] != 1)
        throw std::invalid_argument("generator_encode: expected [1,H,W] input, got " +
                                    x.shape_str());
    if (x.shape[1] % 4 != 0 || x.shape[2] % 4 != 0 || x.shape[1] < 32 || x.shape[2] < 32)
        throw std::invalid_argument(
            "generator_encode: spatial extents must be >= 32 and divisible by 4, got " +
            x.shape_str());
    if (taps) taps->t0 = x;
    Tensor h = in_relu_conv(tape, m, x, "g.c1", 1);
    h = in_relu_conv(tape, m, h, "g.d1", 2);
    if (taps) taps->t1 = h;
    h = in_relu_conv(tape, m, h, "g.d2", 2);
    for (int i = 0; i < 4; ++i) {
        const std::string r = "g.r" + std::to_string(i);
        Tensor b = in_relu_conv(tape, m, h, r + ".c1", 1);
        b = instance_norm(tape, conv2d(tape, b, m.p(r + ".c2.w"), m.p(r + ".c2.b"), 1, 1));
        h = add(tape, h, b);
    }
    if (taps) taps->t2 = h;
    return h;
}

Tensor generator_decode(Tape* tape, const ModelBundle& m, const Tensor& code, const Tensor& v) {
    Tensor h = upsample_nearest2x(tape, code);
    h = conv2d(tape, h, m.p("g.u1.conv.w"), m.p("g.u1.conv.b"), 1, 1);
    h = relu(tape, din_forward(tape, m.din("g.u1.din"), h, v));
    h = upsample_nearest2x(tape, h);
    h = conv2d(tape, h, m.p("g.u2.conv.w"), m.p("g.u2.conv.b"), 1, 1);
    h = relu(tape, din_forward(tape, m.din("g.u2.din"), h, v));
    h = conv2d(tape, h, m.p("g.out.w"), m.p("g.out.b"), 1, 1);
    // tanh-bounded, mapped to [0,1]
    return scale(tape, add_const(tape, tanh(tape, h), 1.0), 0.5);
}

Tensor generate(Tape* tape, const ModelBundle& m, const Tensor& x, const Tensor& v) {
    return generator_decode(tape, m, generator_encode(tape, m, x, nullptr), v);
}

Tensor discriminate(Tape* tape, const ModelBundle& m, const Tensor& img) {
    if (img.rank() != 3 || img.shape[0] != 1)
        throw std::invalid_argument("discriminate: expected [1,H,W] input, got " +
                                    img.shape_str());
    if (img.shape[1] < 22 || img.shape[2] < 22)
        throw std::invalid_argument("discriminate: input too small for the 3-layer stack, got " +
                                    img.shape_str());
    Tensor h = leaky_relu(tape, conv2d(tape, img, m.p("d.c1.w"), m.p("d.c1.b"), 2, 0), 0.2);
    h = leaky_relu(tape, conv2d(tape, h, m.p("d.c2.w"), m.p("d.c2.b"), 2, 0), 0.2);
    return conv2d(tape, h, m.p("d.c3.w"), m.p("d.c3.b"), 2, 0);
}

std::vector<Tensor> extract_patch_features(Tape* tape, const ModelBundle& m, const GenTaps& taps,
                                           const LayerLocations& locations) {
    const Tensor feats[] = {taps.t0, taps.t1, taps.t2};
    if (locations.size() != 3)
        throw std::invalid_argument("extract_patch_features: expected 3 location lists, got " +
                                    std::to_string(locations.size()));
    std::vector<Tensor> out;
    for (int l = 0; l < 3; ++l) {
        Tensor g = gather_hw(tape, feats[l], locations[l]);
        const std::string head = "head" + std::to_string(l);
        Tensor h = matmul_nt(tape, g, m.p(head + ".fc1.w"));
        h = relu(tape, add_rowvec(tape, h, m.p(head + ".fc1.b")));
        h = add_rowvec(tape, matmul_nt(tape, h, m.p(head + ".fc2.w")), m.p(head + ".fc2.b"));
        out.push_back(l2_normalize(tape, h));
    }
    return out;
}

std::vector<Tensor> extract_patch_features(Tape* tape, const ModelBundle& m, const Tensor& img,
                                           const LayerLocations& locations) {
    GenTaps taps;
    generator_encode(tape, m, img, &taps);
    return extract_patch_features(tape, m, taps, locations);
}

}  // namespace exstyle
