#include "exstyle/tensor.hpp"

#include <cmath>
#include <sstream>

namespace exstyle {

static std::shared_ptr<std::vector<double>> make_buffer(const std::vector<int>& shape,
                                                        double fill) {
    std::int64_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw std::invalid_argument("tensor extent must be positive, got shape " +
                                                shape_to_string(shape));
        n *= d;
    }
    return std::make_shared<std::vector<double>>(static_cast<std::size_t>(n), fill);
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    Tensor t;
    t.data = make_buffer(shape, 0.0);
    t.shape = std::move(shape);
    t.requires_grad = requires_grad;
    t.gslot = std::make_shared<std::shared_ptr<std::vector<double>>>();
    return t;
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
    Tensor t;
    t.data = make_buffer(shape, value);
    t.shape = std::move(shape);
    t.requires_grad = requires_grad;
    t.gslot = std::make_shared<std::shared_ptr<std::vector<double>>>();
    return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return full({1}, value, requires_grad);
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> values, bool requires_grad) {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    if (n != static_cast<std::int64_t>(values.size()))
        throw std::invalid_argument("value count " + std::to_string(values.size()) +
                                    " does not match shape " + shape_to_string(shape));
    Tensor t;
    t.shape = std::move(shape);
    t.data = std::make_shared<std::vector<double>>(std::move(values));
    t.requires_grad = requires_grad;
    t.gslot = std::make_shared<std::shared_ptr<std::vector<double>>>();
    return t;
}

Tensor Tensor::uniform(std::vector<int> shape, double lo, double hi, std::mt19937_64& rng,
                       bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    std::uniform_real_distribution<double> dist(lo, hi);
    for (double& v : *t.data) v = dist(rng);
    return t;
}

Tensor Tensor::normal(std::vector<int> shape, double mean, double stddev, std::mt19937_64& rng,
                      bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    std::normal_distribution<double> dist(mean, stddev);
    for (double& v : *t.data) v = dist(rng);
    return t;
}

double Tensor::value() const {
    if (!is_scalar()) throw std::invalid_argument("value() on non-scalar tensor of shape " +
                                                  shape_str());
    return (*data)[0];
}

void Tensor::ensure_grad() {
    if (!gslot) gslot = std::make_shared<std::shared_ptr<std::vector<double>>>();
    if (!*gslot) *gslot = std::make_shared<std::vector<double>>(data->size(), 0.0);
}

void Tensor::zero_grad() {
    if (has_grad()) std::fill((*gslot)->begin(), (*gslot)->end(), 0.0);
}

Tensor Tensor::detached() const {
    Tensor t;
    t.shape = shape;
    t.data = data;
    t.requires_grad = false;
    t.gslot = std::make_shared<std::shared_ptr<std::vector<double>>>();
    return t;
}

Tensor Tensor::clone() const {
    Tensor t;
    t.shape = shape;
    t.data = std::make_shared<std::vector<double>>(*data);
    t.requires_grad = requires_grad;
    t.gslot = std::make_shared<std::shared_ptr<std::vector<double>>>();
    return t;
}

bool Tensor::all_finite() const {
    for (double v : *data)
        if (!std::isfinite(v)) return false;
    return true;
}

std::string Tensor::shape_str() const { return shape_to_string(shape); }

std::string shape_to_string(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

}  // namespace exstyle
