#pragma once

#include "exstyle/tensor.hpp"

#include <vector>

namespace exstyle {

// Otsu's threshold over a 256-bin histogram of a [0,1] grayscale image.
double otsu_threshold(const Tensor& img);

// Boolean foreground mask (pixel > otsu_threshold), flattened row-major.
std::vector<bool> otsu_mask(const Tensor& img);

// Dice overlap coefficient 2|A∩B| / (|A|+|B|); both masks empty -> 1.
double dice(const std::vector<bool>& a, const std::vector<bool>& b);

// Chance-corrected agreement between two labelings of the same points;
// 1 for identical partitions (up to renaming), ~0 for independent ones.
double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b);

}  // namespace exstyle
