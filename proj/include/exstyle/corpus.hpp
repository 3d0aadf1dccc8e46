#pragma once

#include "exstyle/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace exstyle {

// Scene primitives for one synthetic image: a few ellipses plus one annulus,
// all guaranteed fully inside the frame.
struct Ellipse {
    double cx, cy;   // center, pixels
    double ax, ay;   // semi-axes, pixels
    double rot;      // rotation, radians
};

struct Annulus {
    double cx, cy;
    double r_outer, r_inner;
};

struct Geometry {
    std::uint64_t seed = 0;
    int size = 64;
    std::vector<Ellipse> ellipses;
    Annulus annulus{};
};

enum class Domain { source, target };

// Appearance parameters; each target family is a fixed well-separated tuple
// plus small per-image jitter.
struct StyleParams {
    int family_id = -1;        // -1 for the single source style
    double gamma = 1.0;
    double blur = 0.0;
    double noise = 0.0;
    double bias_strength = 0.0;
    int polarity = 1;          // +1 bright foreground, -1 inverted
};

// Deterministic scene from a seed; 2-4 ellipses plus the annulus.
Geometry gen_anatomy(std::uint64_t seed, int size);

// Binary foreground mask [size, size]; 1 where any primitive covers the pixel
// (the annulus contributes its ring only).
Tensor geometry_mask(const Geometry& geom);

// The fixed style tuple of a target family (no jitter).
StyleParams family_style(int family_id, int families);

// The single fixed source style.
StyleParams source_style();

// Adds per-image jitter of at most 5% of each parameter range.
StyleParams jitter_style(const StyleParams& base, std::uint64_t seed);

// Rasterize with domain base intensities, then apply gamma -> blur -> noise ->
// bias with the style's parameters; noise/bias streams derive from geom.seed.
Tensor render(const Geometry& geom, Domain domain, const StyleParams& style);

struct CorpusConfig {
    std::string out_dir = "corpus";
    std::uint64_t master_seed = 7;
    int size = 64;
    int families = 3;
    int n_source = 200;
    int n_target = 200;
    int n_heldout_source = 50;
    int n_heldout_target = 50;
};

struct ManifestEntry {
    std::string filename;       // relative to out_dir
    std::string domain;         // "source" | "target"
    std::string split;          // "train" | "heldout"
    std::uint64_t anatomy_seed = 0;
    int family_id = -1;         // -1 for source images
};

// Generates every image and a manifest.csv under cfg.out_dir; anatomy seeds
// are disjoint across domains and splits, family labels balanced round-robin.
std::vector<ManifestEntry> make_dataset(const CorpusConfig& cfg);

// Parses an existing manifest.csv.
std::vector<ManifestEntry> read_manifest(const std::string& path);

}  // namespace exstyle
