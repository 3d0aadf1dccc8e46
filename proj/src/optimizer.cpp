#include "exstyle/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace exstyle {

void Adam::step(ModelBundle& models, const std::vector<std::string>& names) {
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (const std::string& name : names) {
        Tensor& p = models.p(name);
        if (!p.has_grad()) continue;
        const std::vector<double>& g = p.gradvec();
        std::vector<double>& mv = m[name];
        std::vector<double>& vv = v[name];
        if (mv.empty()) mv.assign(g.size(), 0.0);
        if (vv.empty()) vv.assign(g.size(), 0.0);
        if (mv.size() != g.size() || vv.size() != g.size())
            throw std::runtime_error("optimizer state shape mismatch for '" + name + "'");
        for (std::size_t i = 0; i < g.size(); ++i) {
            mv[i] = beta1 * mv[i] + (1.0 - beta1) * g[i];
            vv[i] = beta2 * vv[i] + (1.0 - beta2) * g[i] * g[i];
            const double m_hat = mv[i] / bc1;
            const double v_hat = vv[i] / bc2;
            (*p.data)[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
        }
    }
}

void Adam::export_state(const std::string& prefix, std::map<std::string, Tensor>& out) const {
    out.emplace(prefix + ".t", Tensor::scalar(static_cast<double>(t)));
    for (const auto& [name, buf] : m)
        out.emplace(prefix + ".m." + name,
                    Tensor::from({static_cast<int>(buf.size())}, buf));
    for (const auto& [name, buf] : v)
        out.emplace(prefix + ".v." + name,
                    Tensor::from({static_cast<int>(buf.size())}, buf));
}

void Adam::import_state(const std::string& prefix, const std::map<std::string, Tensor>& in) {
    const auto it = in.find(prefix + ".t");
    if (it == in.end()) throw std::runtime_error("missing optimizer state '" + prefix + ".t'");
    t = static_cast<std::int64_t>(it->second.value());
    m.clear();
    v.clear();
    const std::string m_prefix = prefix + ".m.";
    const std::string v_prefix = prefix + ".v.";
    for (const auto& [key, tensor] : in) {
        if (key.rfind(m_prefix, 0) == 0)
            m[key.substr(m_prefix.size())] = *tensor.data;
        else if (key.rfind(v_prefix, 0) == 0)
            v[key.substr(v_prefix.size())] = *tensor.data;
    }
}

}  // namespace exstyle
