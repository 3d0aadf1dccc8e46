#pragma once

#include "exstyle/tensor.hpp"

#include <string>

namespace exstyle {

// Writes a [H,W] or [1,H,W] image with values in [0,1] as binary PGM (P5),
// maxval 65535, most significant byte first. Values are clamped then rounded.
void write_pgm(const std::string& path, const Tensor& img);

// Reads a 16-bit binary PGM back into a [H,W] tensor with values in [0,1].
Tensor read_pgm(const std::string& path);

}  // namespace exstyle
