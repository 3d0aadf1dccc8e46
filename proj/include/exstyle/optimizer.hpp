#pragma once

#include "exstyle/models.hpp"

#include <map>
#include <string>
#include <vector>

namespace exstyle {

// Adam with bias correction over one named parameter group. Moment buffers
// are keyed by parameter name and survive checkpoint round-trips bit-exactly.
struct Adam {
    double lr = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t t = 0;  // completed steps
    std::map<std::string, std::vector<double>> m, v;

    // Applies one update from the accumulated gradients of the named
    // parameters; parameters without a gradient are skipped.
    void step(ModelBundle& models, const std::vector<std::string>& names);

    // Serialize the state as tensors under "<prefix>.t", "<prefix>.m.<name>",
    // "<prefix>.v.<name>".
    void export_state(const std::string& prefix, std::map<std::string, Tensor>& out) const;
    void import_state(const std::string& prefix, const std::map<std::string, Tensor>& in);
};

}  // namespace exstyle
