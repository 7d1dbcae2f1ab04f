#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>

#include "gift/tensor.hpp"

namespace gift {

// ATN1 binary tensor format:
//   magic "ATN1" | u8 ndim | ndim x u32le extents | row-major f32le data
//
// Carries attention dumps and saliency maps.

struct Atn1Error : std::runtime_error {
    std::uint64_t offset;  // byte offset where the problem was detected
    Atn1Error(const std::string& msg, std::uint64_t off)
        : std::runtime_error(msg), offset(off) {}
};

void write_atn1(std::ostream& out, const DenseTensor& t);
void write_atn1(const std::filesystem::path& path, const DenseTensor& t);

// Throws Atn1Error naming the offending byte offset on bad magic, an
// implausible header, or truncated data.
DenseTensor read_atn1(std::istream& in, const std::string& name = "<stream>");
DenseTensor read_atn1(const std::filesystem::path& path);

}  // namespace gift
