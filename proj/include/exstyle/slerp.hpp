#pragma once

#include <Eigen/Core>

#include <vector>

namespace exstyle {

using StyleVec = Eigen::VectorXd;

// Constant-angular-speed interpolation along the great circle between two
// unit vectors. t in [0,1]; falls back to normalized lerp when the angle
// underflows; antipodal inputs are rejected (the great circle is ambiguous).
StyleVec slerp(const StyleVec& v0, const StyleVec& v1, double t);

// slerp sampled at t = i/(steps-1), i = 0..steps-1.
std::vector<StyleVec> slerp_trajectory(const StyleVec& v0, const StyleVec& v1, int steps);

double angle_between(const StyleVec& a, const StyleVec& b);

}  // namespace exstyle
