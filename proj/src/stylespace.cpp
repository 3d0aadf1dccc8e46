#include "exstyle/stylespace.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <unordered_set>

namespace exstyle {

namespace {

// Uniform double in [0, 1) from the top 53 bits of the generator, so sampling
// is reproducible independent of the standard library's distribution details.
double unit_uniform(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

Eigen::MatrixXd as_matrix(const StyleBank& bank) {
    const int n = static_cast<int>(bank.size());
    const int d = bank.dim();
    Eigen::MatrixXd x(n, d);
    for (int i = 0; i < n; ++i) x.row(i) = bank.entries[static_cast<std::size_t>(i)].v;
    return x;
}

void require_labels(const StyleBank& bank, const std::vector<int>& labels, int* k_out) {
    if (labels.size() != bank.size())
        throw std::invalid_argument("labels size " + std::to_string(labels.size()) +
                                    " does not match bank size " + std::to_string(bank.size()));
    int k = 0;
    for (int l : labels) {
        if (l < 0) throw std::invalid_argument("negative cluster label");
        k = std::max(k, l + 1);
    }
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (int l : labels) ++counts[static_cast<std::size_t>(l)];
    for (int c = 0; c < k; ++c)
        if (counts[static_cast<std::size_t>(c)] == 0)
            throw std::invalid_argument("cluster " + std::to_string(c) + " is empty");
    *k_out = k;
}

struct LloydOutcome {
    std::vector<int> labels;
    Eigen::MatrixXd centroids;
    double inertia;
};

int nearest_centroid(const Eigen::MatrixXd& c, const Eigen::RowVectorXd& p, double* d2_out) {
    int best = 0;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (int j = 0; j < c.rows(); ++j) {
        const double d2 = (c.row(j) - p).squaredNorm();
        if (d2 < best_d2) {
            best_d2 = d2;
            best = j;
        }
    }
    *d2_out = best_d2;
    return best;
}

LloydOutcome lloyd_once(const Eigen::MatrixXd& x, int k, std::mt19937_64& rng) {
    const int n = static_cast<int>(x.rows());
    Eigen::MatrixXd centroids(k, x.cols());

    // k-means++ seeding: first centre uniform, then proportional to squared
    // distance from the nearest chosen centre, via manual cumulative sampling.
    centroids.row(0) = x.row(static_cast<int>(unit_uniform(rng) * n));
    Eigen::VectorXd d2 = (x.rowwise() - Eigen::RowVectorXd(centroids.row(0))).rowwise().squaredNorm();
    for (int j = 1; j < k; ++j) {
        const double total = d2.sum();
        int pick = 0;
        if (total > 0.0) {
            const double target = unit_uniform(rng) * total;
            double cum = 0.0;
            pick = n - 1;
            for (int i = 0; i < n; ++i) {
                cum += d2[i];
                if (cum >= target) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = static_cast<int>(unit_uniform(rng) * n);
        }
        centroids.row(j) = x.row(pick);
        d2 = d2.cwiseMin((x.rowwise() - Eigen::RowVectorXd(centroids.row(j))).rowwise().squaredNorm());
    }

    std::vector<int> labels(static_cast<std::size_t>(n), -1);
    double inertia = 0.0;
    for (int iter = 0; iter < 300; ++iter) {
        bool changed = false;
        inertia = 0.0;
        for (int i = 0; i < n; ++i) {
            double dd = 0.0;
            const int j = nearest_centroid(centroids, x.row(i), &dd);
            inertia += dd;
            if (labels[static_cast<std::size_t>(i)] != j) {
                labels[static_cast<std::size_t>(i)] = j;
                changed = true;
            }
        }
        if (!changed) break;

        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, x.cols());
        std::vector<int> counts(static_cast<std::size_t>(k), 0);
        for (int i = 0; i < n; ++i) {
            sums.row(labels[static_cast<std::size_t>(i)]) += x.row(i);
            ++counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
        }
        for (int j = 0; j < k; ++j) {
            if (counts[static_cast<std::size_t>(j)] > 0) {
                centroids.row(j) = sums.row(j) / counts[static_cast<std::size_t>(j)];
            } else {
                // reseed an emptied cluster at the point farthest from its centroid
                int far = 0;
                double far_d2 = -1.0;
                for (int i = 0; i < n; ++i) {
                    const double dd =
                        (x.row(i) - centroids.row(labels[static_cast<std::size_t>(i)]))
                            .squaredNorm();
                    if (dd > far_d2) {
                        far_d2 = dd;
                        far = i;
                    }
                }
                centroids.row(j) = x.row(far);
            }
        }
    }
    return {std::move(labels), std::move(centroids), inertia};
}

}  // namespace

void StyleBank::validate(bool require_unit) const {
    std::unordered_set<std::string> seen;
    const int d = dim();
    for (const Entry& e : entries) {
        if (!seen.insert(e.image_id).second)
            throw std::invalid_argument("duplicate image id '" + e.image_id + "'");
        if (static_cast<int>(e.v.size()) != d)
            throw std::invalid_argument("style vector dimension mismatch for '" + e.image_id + "'");
        if (require_unit && std::abs(e.v.norm() - 1.0) > 1e-6)
            throw std::invalid_argument("style vector for '" + e.image_id + "' is not unit norm");
    }
    if (!labels.empty() && labels.size() != entries.size())
        throw std::invalid_argument("label count does not match entry count");
}

Eigen::MatrixXd pca_project(const StyleBank& bank, int dims) {
    const int n = static_cast<int>(bank.size());
    const int d = bank.dim();
    if (n < 2) throw std::invalid_argument("pca_project: need at least 2 points");
    if (dims < 1 || dims > std::min(d, n - 1))
        throw std::invalid_argument("pca_project: dims must be in [1, min(dim, n-1)]");

    Eigen::MatrixXd x = as_matrix(bank);
    x.rowwise() -= Eigen::RowVectorXd(x.colwise().mean());
    const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    if (es.info() != Eigen::Success) throw std::runtime_error("pca_project: eigensolver failed");

    // eigenvalues come back ascending; take the top `dims` in descending order
    Eigen::MatrixXd basis(d, dims);
    for (int j = 0; j < dims; ++j) {
        Eigen::VectorXd v = es.eigenvectors().col(d - 1 - j);
        int arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v[arg] < 0.0) v = -v;
        basis.col(j) = v;
    }
    return x * basis;
}

KMeansResult kmeans(const StyleBank& bank, int k, std::uint64_t seed) {
    const int n = static_cast<int>(bank.size());
    if (k < 2 || k > n)
        throw std::invalid_argument("kmeans: k must be in [2, n], got k=" + std::to_string(k) +
                                    " with n=" + std::to_string(n));
    bank.validate(false);
    const Eigen::MatrixXd x = as_matrix(bank);

    std::mt19937_64 rng(seed);
    LloydOutcome best;
    best.inertia = std::numeric_limits<double>::infinity();
    for (int restart = 0; restart < 10; ++restart) {
        LloydOutcome run = lloyd_once(x, k, rng);
        if (run.inertia < best.inertia) best = std::move(run);
    }
    return {std::move(best.labels), std::move(best.centroids), best.inertia};
}

double silhouette(const StyleBank& bank, const std::vector<int>& labels) {
    int k = 0;
    require_labels(bank, labels, &k);
    if (k < 2) throw std::invalid_argument("silhouette: need at least 2 clusters");
    const int n = static_cast<int>(bank.size());
    const Eigen::MatrixXd x = as_matrix(bank);

    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (int l : labels) ++counts[static_cast<std::size_t>(l)];

    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        const int li = labels[static_cast<std::size_t>(i)];
        if (counts[static_cast<std::size_t>(li)] == 1) continue;  // singleton scores 0
        std::vector<double> mean_dist(static_cast<std::size_t>(k), 0.0);
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            mean_dist[static_cast<std::size_t>(labels[static_cast<std::size_t>(j)])] +=
                (x.row(i) - x.row(j)).norm();
        }
        double a = 0.0, b = std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) {
            const int cnt = counts[static_cast<std::size_t>(c)];
            if (c == li) {
                a = mean_dist[static_cast<std::size_t>(c)] / (cnt - 1);
            } else {
                b = std::min(b, mean_dist[static_cast<std::size_t>(c)] / cnt);
            }
        }
        const double m = std::max(a, b);
        total += m > 0.0 ? (b - a) / m : 0.0;
    }
    return total / n;
}

int select_k(const StyleBank& bank, int k_min, int k_max, std::uint64_t seed) {
    const int n = static_cast<int>(bank.size());
    if (k_min < 2 || k_min > k_max || k_max > n - 1)
        throw std::invalid_argument("select_k: need 2 <= k_min <= k_max <= n-1");
    int best_k = k_min;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int k = k_min; k <= k_max; ++k) {
        const double score = silhouette(bank, kmeans(bank, k, seed).labels);
        if (score > best_score) {
            best_score = score;
            best_k = k;
        }
    }
    return best_k;
}

std::vector<double> typicality(const StyleBank& bank, const std::vector<int>& labels) {
    int k = 0;
    require_labels(bank, labels, &k);
    const int n = static_cast<int>(bank.size());
    const Eigen::MatrixXd x = as_matrix(bank);

    std::vector<double> out(static_cast<std::size_t>(n), 0.0);
    for (int c = 0; c < k; ++c) {
        std::vector<int> members;
        for (int i = 0; i < n; ++i)
            if (labels[static_cast<std::size_t>(i)] == c) members.push_back(i);
        if (members.size() == 1) {
            out[static_cast<std::size_t>(members[0])] = std::numeric_limits<double>::infinity();
            continue;
        }
        const int kappa = std::min<int>(20, static_cast<int>(members.size()) - 1);
        for (int i : members) {
            std::vector<double> dists;
            dists.reserve(members.size() - 1);
            for (int j : members)
                if (j != i) dists.push_back((x.row(i) - x.row(j)).norm());
            std::nth_element(dists.begin(), dists.begin() + (kappa - 1), dists.end());
            double sum = 0.0;
            for (int t = 0; t < kappa; ++t) sum += dists[static_cast<std::size_t>(t)];
            out[static_cast<std::size_t>(i)] = kappa / std::max(sum, 1e-300);
        }
    }
    return out;
}

std::vector<std::string> select_exemplars(const StyleBank& bank, const std::vector<int>& labels) {
    int k = 0;
    require_labels(bank, labels, &k);
    const std::vector<double> typ = typicality(bank, labels);

    std::vector<int> best(static_cast<std::size_t>(k), -1);
    for (int i = 0; i < static_cast<int>(bank.size()); ++i) {
        const int c = labels[static_cast<std::size_t>(i)];
        int& cur = best[static_cast<std::size_t>(c)];
        if (cur < 0 || typ[static_cast<std::size_t>(i)] > typ[static_cast<std::size_t>(cur)] ||
            (typ[static_cast<std::size_t>(i)] == typ[static_cast<std::size_t>(cur)] &&
             bank.entries[static_cast<std::size_t>(i)].image_id <
                 bank.entries[static_cast<std::size_t>(cur)].image_id))
            cur = i;
    }
    std::vector<std::string> out;
    out.reserve(static_cast<std::size_t>(k));
    for (int c = 0; c < k; ++c)
        out.push_back(bank.entries[static_cast<std::size_t>(best[static_cast<std::size_t>(c)])].image_id);
    return out;
}

}  // namespace exstyle
