#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace gift {

// Row-major float32 tensor. The carrier for attention dumps and saliency
// maps; all heavy math lives in flat buffers elsewhere.
struct DenseTensor {
    std::vector<std::uint32_t> dims;
    std::vector<float> data;

    std::size_t size() const;
    bool shape_matches_data() const { return size() == data.size(); }

    static DenseTensor zeros(std::vector<std::uint32_t> dims);
};

// Softmax over the unmasked positions of logits + bias. masked[i] != 0
// excludes position i; excluded outputs are exactly 0.
// Throws on length mismatch, NaN input, or an all-masked row.
std::vector<float> softmax_with_bias(std::span<const float> logits,
                                     std::span<const float> bias,
                                     std::span<const std::uint8_t> masked);

// Plain softmax (nothing masked, zero bias).
std::vector<float> softmax(std::span<const float> logits);

// Affine rescale to [0,1]. A constant vector maps to all-zeros: a flat map
// carries no signal, so downstream steering degrades to identity.
std::vector<float> minmax_normalize(std::span<const float> v);

// Scale a non-negative vector to sum 1. Zero-sum input is an error.
std::vector<float> sum_normalize(std::span<const float> v);

// Cap entries at mean + k * stddev (population, 1/N). Entries at or below
// the bound pass through unchanged.
std::vector<float> clip_sigma(std::span<const float> v, float k);

// Reductions with float64 accumulation.
double sum64(std::span<const float> v);
double mean64(std::span<const float> v);
double stddev_pop64(std::span<const float> v);

}  // namespace gift
