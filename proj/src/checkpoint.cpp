#include "exstyle/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace exstyle {

namespace {

constexpr char kMagic[8] = {'E', 'X', 'S', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
    char b[4] = {static_cast<char>(v), static_cast<char>(v >> 8), static_cast<char>(v >> 16),
                 static_cast<char>(v >> 24)};
    out.write(b, 4);
}

std::uint32_t get_u32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw std::runtime_error("truncated checkpoint " + path);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f64(std::ostream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>(bits >> (8 * i));
    out.write(b, 8);
}

double get_f64(std::istream& in, const std::string& path) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8))
        throw std::runtime_error("truncated checkpoint " + path);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::map<std::string, Tensor>& entries) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    out.write(kMagic, 8);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(entries.size()));
    for (const auto& [name, t] : entries) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(out, static_cast<std::uint32_t>(t.rank()));
        for (int d : t.shape) put_u32(out, static_cast<std::uint32_t>(d));
        for (double v : *t.data) put_f64(out, v);
    }
    if (!out) throw std::runtime_error("write failed for checkpoint " + path);
}

std::map<std::string, Tensor> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path);
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("not a checkpoint file: " + path);
    const std::uint32_t version = get_u32(in, path);
    if (version != kVersion)
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version) +
                                 " in " + path);
    const std::uint32_t count = get_u32(in, path);
    std::map<std::string, Tensor> out;
    for (std::uint32_t e = 0; e < count; ++e) {
        const std::uint32_t name_len = get_u32(in, path);
        std::string name(name_len, '\0');
        if (!in.read(name.data(), name_len)) throw std::runtime_error("truncated checkpoint " + path);
        const std::uint32_t rank = get_u32(in, path);
        if (rank < 1 || rank > 8) throw std::runtime_error("implausible tensor rank in " + path);
        std::vector<int> shape;
        for (std::uint32_t d = 0; d < rank; ++d)
            shape.push_back(static_cast<int>(get_u32(in, path)));
        Tensor t = Tensor::zeros(shape);
        for (double& v : *t.data) v = get_f64(in, path);
        if (!out.emplace(name, std::move(t)).second)
            throw std::runtime_error("duplicate entry '" + name + "' in " + path);
    }
    return out;
}

}  // namespace exstyle
