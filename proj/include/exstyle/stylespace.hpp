#pragma once

#include "exstyle/slerp.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace exstyle {

// A collection of style embeddings keyed by image id, with optional derived
// cluster labels and 2-D projection coordinates.
struct StyleBank {
    struct Entry {
        std::string image_id;
        StyleVec v;
    };
    std::vector<Entry> entries;
    std::vector<int> labels;   // empty until assigned; values in [0, k)
    Eigen::MatrixXd pca2;      // n x 2 once computed, 0 x 0 before

    std::size_t size() const { return entries.size(); }
    int dim() const { return entries.empty() ? 0 : static_cast<int>(entries.front().v.size()); }

    // Checks id uniqueness and dimensional consistency; with require_unit also
    // checks that every vector is unit norm (the encoder always emits those).
    void validate(bool require_unit = true) const;
};

struct KMeansResult {
    std::vector<int> labels;
    Eigen::MatrixXd centroids;  // k x dim
    double inertia = 0.0;       // sum of squared distances to assigned centroid
};

// Mean-centered projection onto the top-`dims` principal axes, descending
// eigenvalue order; each axis is oriented so its largest-magnitude component
// is positive.
Eigen::MatrixXd pca_project(const StyleBank& bank, int dims);

// Seeded k-means++ with Lloyd iterations (stops when labels stabilise or after
// 300 rounds), 10 restarts keeping the lowest inertia.
KMeansResult kmeans(const StyleBank& bank, int k, std::uint64_t seed);

// Mean silhouette score over all points; singleton clusters score 0.
double silhouette(const StyleBank& bank, const std::vector<int>& labels);

// Runs kmeans for each k in [k_min, k_max] and returns the k with the highest
// mean silhouette; ties break to the smaller k.
int select_k(const StyleBank& bank, int k_min, int k_max, std::uint64_t seed);

// Per-cluster typicality = 1 / mean distance to the kappa nearest in-cluster
// neighbours, kappa = min(20, cluster_size - 1). Returns the most typical
// image id per cluster, index = cluster label; equal typicality breaks to the
// lexicographically smaller id.
std::vector<std::string> select_exemplars(const StyleBank& bank, const std::vector<int>& labels);

// Per-entry typicality values under the same definition as select_exemplars.
std::vector<double> typicality(const StyleBank& bank, const std::vector<int>& labels);

}  // namespace exstyle
