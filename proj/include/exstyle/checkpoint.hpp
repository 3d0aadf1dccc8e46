#pragma once

#include "exstyle/tensor.hpp"

#include <map>
#include <string>

namespace exstyle {

// Versioned binary container for named tensors (model parameters plus
// optimizer state under "opt." names). Round-trips are bit-exact.
//
// Layout, little-endian:
//   8 bytes  magic "EXSCKPT1"
//   u32      format version (1)
//   u32      entry count
//   per entry:
//     u32       name length, then name bytes
//     u32       rank, then rank * u32 dims
//     f64 * n   values, row-major
void save_checkpoint(const std::string& path, const std::map<std::string, Tensor>& entries);
std::map<std::string, Tensor> load_checkpoint(const std::string& path);

}  // namespace exstyle
