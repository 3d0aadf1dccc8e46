#include "exstyle/eval.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <stdexcept>

namespace exstyle {

double otsu_threshold(const Tensor& img) {
    if (img.size() == 0) throw std::invalid_argument("otsu_threshold: empty image");
    std::array<std::int64_t, 256> hist{};
    for (double v : *img.data) {
        const int b = std::clamp(static_cast<int>(v * 256.0), 0, 255);
        ++hist[static_cast<std::size_t>(b)];
    }
    const double n = static_cast<double>(img.size());
    double sum_all = 0.0;
    for (int b = 0; b < 256; ++b) sum_all += b * static_cast<double>(hist[static_cast<std::size_t>(b)]);

    double best_between = -1.0;
    int best_bin = 0;
    double w0 = 0.0, sum0 = 0.0;
    for (int b = 0; b < 256; ++b) {
        w0 += static_cast<double>(hist[static_cast<std::size_t>(b)]);
        if (w0 == 0.0) continue;
        const double w1 = n - w0;
        if (w1 == 0.0) break;
        sum0 += b * static_cast<double>(hist[static_cast<std::size_t>(b)]);
        const double mu0 = sum0 / w0;
        const double mu1 = (sum_all - sum0) / w1;
        const double between = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if (between > best_between) {
            best_between = between;
            best_bin = b;
        }
    }
    // threshold at the upper edge of the chosen background bin
    return (best_bin + 1) / 256.0;
}

std::vector<bool> otsu_mask(const Tensor& img) {
    const double t = otsu_threshold(img);
    std::vector<bool> out;
    out.reserve(static_cast<std::size_t>(img.size()));
    for (double v : *img.data) out.push_back(v > t);
    return out;
}

double dice(const std::vector<bool>& a, const std::vector<bool>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("dice: mask size mismatch");
    std::int64_t inter = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        na += a[i];
        nb += b[i];
        inter += a[i] && b[i];
    }
    if (na + nb == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size() || a.empty())
        throw std::invalid_argument("adjusted_rand_index: labelings must be same nonempty size");
    std::map<std::pair<int, int>, std::int64_t> cont;
    std::map<int, std::int64_t> row, col;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ++cont[{a[i], b[i]}];
        ++row[a[i]];
        ++col[b[i]];
    }
    auto choose2 = [](std::int64_t m) { return 0.5 * static_cast<double>(m) * static_cast<double>(m - 1); };
    double sum_ij = 0.0, sum_a = 0.0, sum_b = 0.0;
    for (const auto& [key, c] : cont) sum_ij += choose2(c);
    for (const auto& [key, c] : row) sum_a += choose2(c);
    for (const auto& [key, c] : col) sum_b += choose2(c);
    const double total = choose2(static_cast<std::int64_t>(a.size()));
    const double expected = sum_a * sum_b / total;
    const double max_index = 0.5 * (sum_a + sum_b);
    if (max_index == expected) return 1.0;  // both partitions trivial
    return (sum_ij - expected) / (max_index - expected);
}

}  // namespace exstyle
