#include "gift/atn1.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

namespace gift {

namespace {

constexpr char kMagic[4] = {'A', 'T', 'N', '1'};
constexpr int kMaxNdim = 8;

void put_u32le(std::ostream& out, std::uint32_t v) {
    char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                 static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out.write(b, 4);
}

std::uint32_t get_u32le(const unsigned char* b) {
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_atn1(std::ostream& out, const DenseTensor& t) {
    if (t.dims.empty() || t.dims.size() > kMaxNdim)
        throw std::invalid_argument("write_atn1: ndim must be in [1,8]");
    if (!t.shape_matches_data())
        throw std::invalid_argument("write_atn1: dims do not match data length");
    out.write(kMagic, 4);
    out.put(static_cast<char>(t.dims.size()));
    for (auto d : t.dims) put_u32le(out, d);
    for (float x : t.data) put_u32le(out, std::bit_cast<std::uint32_t>(x));
    if (!out) throw std::runtime_error("write_atn1: write failed");
}

void write_atn1(const std::filesystem::path& path, const DenseTensor& t) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_atn1: cannot open " + path.string());
    write_atn1(out, t);
}

DenseTensor read_atn1(std::istream& in, const std::string& name) {
    std::uint64_t offset = 0;
    auto need = [&](unsigned char* dst, std::size_t n, const char* what) {
        in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
        const auto got = static_cast<std::size_t>(in.gcount());
        if (got != n) {
            throw Atn1Error(name + ": truncated " + what + " at offset " +
                                std::to_string(offset + got),
                            offset + got);
        }
        offset += n;
    };

    unsigned char magic[4];
    need(magic, 4, "magic");
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw Atn1Error(name + ": bad magic at offset 0", 0);

    unsigned char ndim_byte;
    need(&ndim_byte, 1, "ndim");
    const int ndim = ndim_byte;
    if (ndim < 1 || ndim > kMaxNdim)
        throw Atn1Error(name + ": implausible ndim " + std::to_string(ndim) +
                            " at offset 4",
                        4);

    DenseTensor t;
    t.dims.resize(static_cast<std::size_t>(ndim));
    std::uint64_t count = 1;
    for (int i = 0; i < ndim; ++i) {
        unsigned char b[4];
        need(b, 4, "extent");
        t.dims[static_cast<std::size_t>(i)] = get_u32le(b);
        if (t.dims[static_cast<std::size_t>(i)] == 0)
            throw Atn1Error(name + ": zero extent at offset " + std::to_string(offset - 4),
                            offset - 4);
        count *= t.dims[static_cast<std::size_t>(i)];
        if (count > (1ull << 32))
            throw Atn1Error(name + ": extent overflow at offset " + std::to_string(offset - 4),
                            offset - 4);
    }

    t.data.resize(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        unsigned char b[4];
        need(b, 4, "data");
        t.data[i] = std::bit_cast<float>(get_u32le(b));
    }
    return t;
}

DenseTensor read_atn1(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_atn1: cannot open " + path.string());
    return read_atn1(in, path.string());
}

}  // namespace gift
