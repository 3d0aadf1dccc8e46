#include "exstyle/perturb.hpp"

#include <cmath>

namespace exstyle {

namespace {

void image_dims(const Tensor& img, int& h, int& w) {
    if (img.rank() == 2) {
        h = img.shape[0];
        w = img.shape[1];
    } else if (img.rank() == 3 && img.shape[0] == 1) {
        h = img.shape[1];
        w = img.shape[2];
    } else {
        throw std::invalid_argument("perturb: expected [H,W] or [1,H,W] image, got " +
                                    img.shape_str());
    }
}

int reflect(int i, int n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - i - 1;
    }
    return i;
}

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

// Catmull-Rom weights for fractional offset t in [0,1].
void catmull_rom(double t, double w[4]) {
    const double t2 = t * t, t3 = t2 * t;
    w[0] = 0.5 * (-t3 + 2.0 * t2 - t);
    w[1] = 0.5 * (3.0 * t3 - 5.0 * t2 + 2.0);
    w[2] = 0.5 * (-3.0 * t3 + 4.0 * t2 + t);
    w[3] = 0.5 * (t3 - t2);
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
    // splitmix64
    std::uint64_t z = seed + tag * 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

Tensor adjust_contrast(const Tensor& img, double gamma) {
    if (gamma <= 0.0) throw std::invalid_argument("adjust_contrast: gamma must be positive");
    int h, w;
    image_dims(img, h, w);
    Tensor out = Tensor::zeros(img.shape);
    for (std::int64_t i = 0; i < img.size(); ++i) out[i] = std::pow(clamp01(img[i]), gamma);
    return out;
}

Tensor gaussian_smooth(const Tensor& img, double sigma) {
    if (sigma < 0.0) throw std::invalid_argument("gaussian_smooth: sigma must be non-negative");
    int h, w;
    image_dims(img, h, w);
    if (sigma == 0.0) return img.clone();
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(2 * radius + 1);
    double ksum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
        ksum += kernel[i + radius];
    }
    for (double& k : kernel) k /= ksum;

    const std::int64_t off = img.size() - static_cast<std::int64_t>(h) * w;  // channel offset (0)
    (void)off;
    std::vector<double> tmp(static_cast<std::size_t>(h) * w);
    // horizontal pass
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i)
                acc += kernel[i + radius] * img[y * w + reflect(x + i, w)];
            tmp[y * w + x] = acc;
        }
    Tensor out = Tensor::zeros(img.shape);
    // vertical pass
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i)
                acc += kernel[i + radius] * tmp[reflect(y + i, h) * w + x];
            out[y * w + x] = clamp01(acc);
        }
    return out;
}

Tensor gaussian_noise(const Tensor& img, double std, std::uint64_t seed) {
    if (std < 0.0) throw std::invalid_argument("gaussian_noise: std must be non-negative");
    int h, w;
    image_dims(img, h, w);
    if (std == 0.0) return img.clone();
    Tensor out = Tensor::zeros(img.shape);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, std);
    for (std::int64_t i = 0; i < img.size(); ++i) out[i] = clamp01(img[i] + dist(rng));
    return out;
}

Tensor bias_field_grid(int h, int w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    double grid[4][4];
    for (int gy = 0; gy < 4; ++gy)
        for (int gx = 0; gx < 4; ++gx) grid[gy][gx] = dist(rng);

    Tensor field = Tensor::zeros({h, w});
    for (int y = 0; y < h; ++y) {
        const double fy = h > 1 ? static_cast<double>(y) * 3.0 / (h - 1) : 0.0;
        const int iy = std::min(static_cast<int>(fy), 2);
        double wy[4];
        catmull_rom(fy - iy, wy);
        for (int x = 0; x < w; ++x) {
            const double fx = w > 1 ? static_cast<double>(x) * 3.0 / (w - 1) : 0.0;
            const int ix = std::min(static_cast<int>(fx), 2);
            double wx[4];
            catmull_rom(fx - ix, wx);
            double acc = 0.0;
            for (int dy = -1; dy <= 2; ++dy) {
                const int sy = std::clamp(iy + dy, 0, 3);
                double row = 0.0;
                for (int dx = -1; dx <= 2; ++dx)
                    row += wx[dx + 1] * grid[sy][std::clamp(ix + dx, 0, 3)];
                acc += wy[dy + 1] * row;
            }
            field[y * w + x] = acc;
        }
    }
    // standardize to zero mean, unit variance; fixed-order accumulation keeps
    // the result independent of the buffer's alignment
    const std::size_t n = field.data->size();
    double acc_mu = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc_mu += (*field.data)[i];
    const double mu = acc_mu / static_cast<double>(n);
    double acc_var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = (*field.data)[i] - mu;
        acc_var += d * d;
    }
    const double sd = std::sqrt(acc_var / static_cast<double>(n) + 1e-12);
    field.array() = (field.array() - mu) / sd;
    return field;
}

Tensor bias_field(const Tensor& img, double strength, std::uint64_t seed) {
    if (strength < 0.0) throw std::invalid_argument("bias_field: strength must be non-negative");
    int h, w;
    image_dims(img, h, w);
    if (strength == 0.0) return img.clone();
    Tensor field = bias_field_grid(h, w, seed);
    Tensor out = Tensor::zeros(img.shape);
    for (std::int64_t i = 0; i < img.size(); ++i)
        out[i] = clamp01(img[i] * std::exp(strength * field[i]));
    return out;
}

PerturbationSpec sample_perturbation(std::uint64_t seed, const PerturbRanges& r) {
    std::mt19937_64 rng(seed);
    PerturbationSpec spec;
    std::uniform_int_distribution<int> kind_dist(0, 4);
    spec.kind = static_cast<PerturbKind>(kind_dist(rng));
    std::uniform_real_distribution<double> g(r.gamma_min, r.gamma_max);
    std::uniform_real_distribution<double> s(r.sigma_min, r.sigma_max);
    std::uniform_real_distribution<double> n(r.noise_min, r.noise_max);
    std::uniform_real_distribution<double> b(r.strength_min, r.strength_max);
    spec.gamma = g(rng);
    spec.sigma = s(rng);
    spec.noise_std = n(rng);
    spec.strength = b(rng);
    spec.seed = rng();
    return spec;
}

Tensor apply(const PerturbationSpec& spec, const Tensor& img) {
    switch (spec.kind) {
        case PerturbKind::contrast:
            return adjust_contrast(img, spec.gamma);
        case PerturbKind::gaussian_smooth:
            return gaussian_smooth(img, spec.sigma);
        case PerturbKind::gaussian_noise:
            return gaussian_noise(img, spec.noise_std, spec.seed);
        case PerturbKind::bias_field:
            return bias_field(img, spec.strength, spec.seed);
        case PerturbKind::mixture: {
            // fixed composition order: contrast -> smooth -> noise -> bias
            Tensor out = adjust_contrast(img, spec.gamma);
            out = gaussian_smooth(out, spec.sigma);
            out = gaussian_noise(out, spec.noise_std, mix_seed(spec.seed, 1));
            return bias_field(out, spec.strength, mix_seed(spec.seed, 2));
        }
    }
    throw std::invalid_argument("apply: unknown perturbation kind");
}

}  // namespace exstyle
