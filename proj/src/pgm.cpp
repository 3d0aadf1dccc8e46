#include "exstyle/pgm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace exstyle {

namespace {

// Skips whitespace and '#' comment lines between header tokens.
int next_header_int(std::istream& in, const std::string& path) {
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (!std::isspace(c)) {
            break;
        }
        c = in.get();
    }
    if (c == EOF) throw std::runtime_error("truncated PGM header in " + path);
    int value = 0;
    bool any = false;
    while (c != EOF && std::isdigit(c)) {
        value = value * 10 + (c - '0');
        any = true;
        c = in.get();
    }
    if (!any) throw std::runtime_error("malformed PGM header in " + path);
    return value;
}

}  // namespace

void write_pgm(const std::string& path, const Tensor& img) {
    int h = 0, w = 0;
    if (img.rank() == 2) {
        h = img.shape[0];
        w = img.shape[1];
    } else if (img.rank() == 3 && img.shape[0] == 1) {
        h = img.shape[1];
        w = img.shape[2];
    } else {
        throw std::invalid_argument("write_pgm: expected [H,W] or [1,H,W], got " + img.shape_str());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_pgm: cannot open " + path);
    out << "P5\n" << w << " " << h << "\n65535\n";
    for (std::int64_t i = 0; i < img.size(); ++i) {
        const double v = std::clamp((*img.data)[static_cast<std::size_t>(i)], 0.0, 1.0);
        const auto q = static_cast<std::uint16_t>(std::lround(v * 65535.0));
        out.put(static_cast<char>(q >> 8));
        out.put(static_cast<char>(q & 0xff));
    }
    if (!out) throw std::runtime_error("write_pgm: write failed for " + path);
}

Tensor read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_pgm: cannot open " + path);
    char m0 = 0, m1 = 0;
    in.get(m0);
    in.get(m1);
    if (m0 != 'P' || m1 != '5') throw std::runtime_error("read_pgm: not a binary PGM: " + path);
    const int w = next_header_int(in, path);
    const int h = next_header_int(in, path);
    const int maxval = next_header_int(in, path);
    if (w <= 0 || h <= 0 || maxval != 65535)
        throw std::runtime_error("read_pgm: unsupported header in " + path);
    // exactly one whitespace byte separates the header from the raster
    Tensor img = Tensor::zeros({h, w});
    for (std::int64_t i = 0; i < img.size(); ++i) {
        const int hi = in.get();
        const int lo = in.get();
        if (hi == EOF || lo == EOF) throw std::runtime_error("read_pgm: truncated raster in " + path);
        (*img.data)[static_cast<std::size_t>(i)] =
            static_cast<double>((hi << 8) | lo) / 65535.0;
    }
    return img;
}

}  // namespace exstyle
