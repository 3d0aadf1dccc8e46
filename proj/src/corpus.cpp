#include "exstyle/corpus.hpp"

#include "exstyle/perturb.hpp"
#include "exstyle/pgm.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

namespace exstyle {

namespace {

double urand(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

int irand(std::mt19937_64& rng, int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(urand(rng, 0.0, 1.0) * (hi - lo + 1));
}

constexpr double kMargin = 2.0;  // clearance between primitives and the frame

}  // namespace

Geometry gen_anatomy(std::uint64_t seed, int size) {
    if (size != 32 && size != 64 && size != 128)
        throw std::invalid_argument("gen_anatomy: size must be 32, 64 or 128");
    const double scale = size / 64.0;
    std::mt19937_64 rng(mix_seed(seed, 0xA11A));
    Geometry geom;
    geom.seed = seed;
    geom.size = size;

    const int n_ellipses = irand(rng, 2, 4);
    for (int i = 0; i < n_ellipses; ++i) {
        Ellipse e{};
        e.ax = urand(rng, 4.0, 10.0) * scale;
        e.ay = urand(rng, 4.0, 10.0) * scale;
        e.rot = urand(rng, 0.0, M_PI);
        const double ext = std::max(e.ax, e.ay) + kMargin;
        e.cx = urand(rng, ext, size - 1 - ext);
        e.cy = urand(rng, ext, size - 1 - ext);
        geom.ellipses.push_back(e);
    }
    Annulus& a = geom.annulus;
    a.r_outer = urand(rng, 5.0, 9.0) * scale;
    a.r_inner = a.r_outer * urand(rng, 0.40, 0.65);
    const double ext = a.r_outer + kMargin;
    a.cx = urand(rng, ext, size - 1 - ext);
    a.cy = urand(rng, ext, size - 1 - ext);
    return geom;
}

Tensor geometry_mask(const Geometry& geom) {
    const int n = geom.size;
    Tensor mask = Tensor::zeros({n, n});
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            bool inside = false;
            for (const Ellipse& e : geom.ellipses) {
                const double dx = x - e.cx, dy = y - e.cy;
                const double rx = std::cos(e.rot) * dx + std::sin(e.rot) * dy;
                const double ry = -std::sin(e.rot) * dx + std::cos(e.rot) * dy;
                if ((rx / e.ax) * (rx / e.ax) + (ry / e.ay) * (ry / e.ay) <= 1.0) {
                    inside = true;
                    break;
                }
            }
            if (!inside) {
                const Annulus& a = geom.annulus;
                const double r = std::hypot(x - a.cx, y - a.cy);
                inside = r >= a.r_inner && r <= a.r_outer;
            }
            (*mask.data)[static_cast<std::size_t>(y * n + x)] = inside ? 1.0 : 0.0;
        }
    }
    return mask;
}

StyleParams family_style(int family_id, int families) {
    // fixed, well-separated tuples; polarity and gamma dominate the gap
    static const StyleParams table[] = {
        {0, 0.6, 1.2, 0.02, 0.10, +1},
        {1, 1.0, 0.3, 0.03, 0.20, -1},
        {2, 1.8, 0.2, 0.08, 0.45, +1},
        {3, 0.7, 1.6, 0.05, 0.05, -1},
        {4, 1.2, 0.8, 0.15, 0.30, +1},
        {5, 1.6, 0.1, 0.10, 0.40, -1},
    };
    constexpr int kMaxFamilies = static_cast<int>(std::size(table));
    if (families < 2 || families > kMaxFamilies)
        throw std::invalid_argument("family_style: families must be in [2, " +
                                    std::to_string(kMaxFamilies) + "]");
    if (family_id < 0 || family_id >= families)
        throw std::invalid_argument("family_style: family_id " + std::to_string(family_id) +
                                    " out of range [0, " + std::to_string(families) + ")");
    return table[family_id];
}

StyleParams source_style() { return {-1, 1.0, 0.4, 0.02, 0.10, +1}; }

StyleParams jitter_style(const StyleParams& base, std::uint64_t seed) {
    std::mt19937_64 rng(mix_seed(seed, 0x717E));
    const PerturbRanges r;
    StyleParams out = base;
    // at most 2.5% of each parameter's range in either direction
    auto wiggle = [&rng](double lo, double hi) { return urand(rng, -0.025, 0.025) * (hi - lo); };
    out.gamma = std::clamp(base.gamma + wiggle(r.gamma_min, r.gamma_max), 0.05, 10.0);
    out.blur = std::max(0.0, base.blur + wiggle(r.sigma_min, r.sigma_max));
    out.noise = std::max(0.0, base.noise + wiggle(r.noise_min, r.noise_max));
    out.bias_strength = std::max(0.0, base.bias_strength + wiggle(r.strength_min, r.strength_max));
    return out;
}

Tensor render(const Geometry& geom, Domain domain, const StyleParams& style) {
    if (domain == Domain::target && style.family_id < 0)
        throw std::invalid_argument("render: target domain requires a family style");
    if (domain == Domain::source && style.family_id != -1)
        throw std::invalid_argument("render: source domain has a single fixed style");
    double fg = 0.85, bg = 0.10;
    if (domain == Domain::target) {
        fg = style.polarity > 0 ? 0.80 : 0.20;
        bg = style.polarity > 0 ? 0.15 : 0.85;
    }
    Tensor mask = geometry_mask(geom);
    Tensor img = Tensor::zeros(mask.shape);
    for (std::int64_t i = 0; i < img.size(); ++i)
        (*img.data)[static_cast<std::size_t>(i)] =
            (*mask.data)[static_cast<std::size_t>(i)] > 0.5 ? fg : bg;

    if (style.gamma != 1.0) img = adjust_contrast(img, style.gamma);
    if (style.blur > 0.0) img = gaussian_smooth(img, style.blur);
    if (style.noise > 0.0) img = gaussian_noise(img, style.noise, mix_seed(geom.seed, 0xB01));
    if (style.bias_strength > 0.0)
        img = bias_field(img, style.bias_strength, mix_seed(geom.seed, 0xB02));
    return img;
}

std::vector<ManifestEntry> make_dataset(const CorpusConfig& cfg) {
    if (cfg.families < 2) throw std::invalid_argument("make_dataset: need at least 2 families");
    for (int n : {cfg.n_source, cfg.n_target, cfg.n_heldout_source, cfg.n_heldout_target})
        if (n < 10) throw std::invalid_argument("make_dataset: every split needs >= 10 images");
    family_style(0, cfg.families);  // validates the family count

    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);

    std::vector<ManifestEntry> manifest;
    std::set<std::uint64_t> used_seeds;
    std::uint64_t index = 0;

    auto emit = [&](Domain domain, const std::string& split, int count, const char* stem) {
        for (int i = 0; i < count; ++i, ++index) {
            const std::uint64_t anatomy_seed = mix_seed(cfg.master_seed, 0x5EED0000ULL + index);
            if (!used_seeds.insert(anatomy_seed).second)
                throw std::runtime_error("make_dataset: anatomy seed collision");
            const Geometry geom = gen_anatomy(anatomy_seed, cfg.size);

            StyleParams style;
            int family = -1;
            if (domain == Domain::target) {
                family = i % cfg.families;  // round-robin keeps labels balanced
                style = family_style(family, cfg.families);
            } else {
                style = source_style();
            }
            style = jitter_style(style, mix_seed(cfg.master_seed, 0xF00D0000ULL + index));
            style.family_id = family;

            char name[64];
            std::snprintf(name, sizeof(name), "%s_%04d.pgm", stem, i);
            write_pgm((fs::path(cfg.out_dir) / name).string(), render(geom, domain, style));
            manifest.push_back({name, domain == Domain::source ? "source" : "target", split,
                                anatomy_seed, family});
        }
    };
    emit(Domain::source, "train", cfg.n_source, "src_train");
    emit(Domain::target, "train", cfg.n_target, "tgt_train");
    emit(Domain::source, "heldout", cfg.n_heldout_source, "src_heldout");
    emit(Domain::target, "heldout", cfg.n_heldout_target, "tgt_heldout");

    std::ofstream out(fs::path(cfg.out_dir) / "manifest.csv");
    if (!out) throw std::runtime_error("make_dataset: cannot write manifest.csv");
    out << "filename,domain,split,anatomy_seed,family_id\n";
    for (const ManifestEntry& e : manifest)
        out << e.filename << ',' << e.domain << ',' << e.split << ',' << e.anatomy_seed << ','
            << e.family_id << '\n';
    return manifest;
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_manifest: cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != "filename,domain,split,anatomy_seed,family_id")
        throw std::runtime_error("read_manifest: bad header in " + path);
    std::vector<ManifestEntry> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        ManifestEntry e;
        std::string seed, family;
        if (!std::getline(row, e.filename, ',') || !std::getline(row, e.domain, ',') ||
            !std::getline(row, e.split, ',') || !std::getline(row, seed, ',') ||
            !std::getline(row, family))
            throw std::runtime_error("read_manifest: malformed row: " + line);
        e.anatomy_seed = std::stoull(seed);
        e.family_id = std::stoi(family);
        out.push_back(e);
    }
    return out;
}

}  // namespace exstyle
