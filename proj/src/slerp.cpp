#include "exstyle/slerp.hpp"

#include <cmath>
#include <stdexcept>

namespace exstyle {

namespace {

void require_unit(const char* who, const StyleVec& v) {
    if (std::abs(v.norm() - 1.0) > 1e-6)
        throw std::invalid_argument(std::string(who) + ": input must be unit norm, got ||v|| = " +
                                    std::to_string(v.norm()));
}

}  // namespace

double angle_between(const StyleVec& a, const StyleVec& b) {
    if (a.size() != b.size())
        throw std::invalid_argument("angle_between: dimension mismatch");
    return std::acos(std::clamp(a.dot(b), -1.0, 1.0));
}

StyleVec slerp(const StyleVec& v0, const StyleVec& v1, double t) {
    require_unit("slerp", v0);
    require_unit("slerp", v1);
    if (v0.size() != v1.size()) throw std::invalid_argument("slerp: dimension mismatch");
    if (t < 0.0 || t > 1.0) throw std::invalid_argument("slerp: t must be in [0,1]");
    const double theta = angle_between(v0, v1);
    if (theta > M_PI - 1e-6)
        throw std::invalid_argument("slerp: antipodal inputs, great circle is ambiguous");
    if (theta < 1e-6) {
        StyleVec out = (1.0 - t) * v0 + t * v1;
        return out / out.norm();
    }
    const double s = std::sin(theta);
    return (std::sin((1.0 - t) * theta) / s) * v0 + (std::sin(t * theta) / s) * v1;
}

std::vector<StyleVec> slerp_trajectory(const StyleVec& v0, const StyleVec& v1, int steps) {
    if (steps < 2) throw std::invalid_argument("slerp_trajectory: steps must be >= 2");
    std::vector<StyleVec> out;
    out.reserve(static_cast<std::size_t>(steps));
    for (int i = 0; i < steps; ++i)
        out.push_back(slerp(v0, v1, static_cast<double>(i) / (steps - 1)));
    return out;
}

}  // namespace exstyle
