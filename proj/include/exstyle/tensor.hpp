#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <memory>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace exstyle {

// Dense row-major tensor of 64-bit reals with an optional gradient slot.
// Handle semantics: copies share the underlying buffers.
struct Tensor {
    std::vector<int> shape;
    std::shared_ptr<std::vector<double>> data;
    bool requires_grad = false;
    // Stable gradient slot shared by all copies of this handle; the inner
    // buffer is allocated lazily on first accumulation.
    std::shared_ptr<std::shared_ptr<std::vector<double>>> gslot;

    Tensor() = default;

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor from(std::vector<int> shape, std::vector<double> values,
                       bool requires_grad = false);
    // Uniform in [lo, hi) from a seeded generator.
    static Tensor uniform(std::vector<int> shape, double lo, double hi, std::mt19937_64& rng,
                          bool requires_grad = false);
    static Tensor normal(std::vector<int> shape, double mean, double stddev, std::mt19937_64& rng,
                         bool requires_grad = false);

    std::int64_t size() const {
        std::int64_t n = 1;
        for (int d : shape) n *= d;
        return n;
    }
    int rank() const { return static_cast<int>(shape.size()); }
    bool is_scalar() const { return size() == 1; }

    double& operator[](std::int64_t i) { return (*data)[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return (*data)[static_cast<std::size_t>(i)]; }
    double value() const;

    Eigen::Map<Eigen::ArrayXd> array() {
        return {data->data(), static_cast<Eigen::Index>(data->size())};
    }
    Eigen::Map<const Eigen::ArrayXd> array() const {
        return {data->data(), static_cast<Eigen::Index>(data->size())};
    }
    bool has_grad() const { return gslot && *gslot; }
    std::shared_ptr<std::vector<double>> grad() const { return gslot ? *gslot : nullptr; }
    std::vector<double>& gradvec() const { return **gslot; }
    double* grad_data() const { return (*gslot)->data(); }
    Eigen::Map<Eigen::ArrayXd> grad_array() {
        ensure_grad();
        return {grad_data(), static_cast<Eigen::Index>((*gslot)->size())};
    }

    void ensure_grad();
    void zero_grad();

    // Shares values, drops the gradient linkage.
    Tensor detached() const;
    // Deep copy of values (fresh buffer, no grad).
    Tensor clone() const;

    bool all_finite() const;
    std::string shape_str() const;
};

std::string shape_to_string(const std::vector<int>& shape);

}  // namespace exstyle
