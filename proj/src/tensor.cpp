#include "gift/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace gift {

std::size_t DenseTensor::size() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return dims.empty() ? 0 : n;
}

DenseTensor DenseTensor::zeros(std::vector<std::uint32_t> dims) {
    DenseTensor t;
    t.dims = std::move(dims);
    t.data.assign(t.size(), 0.0f);
    return t;
}

double sum64(std::span<const float> v) {
    double s = 0.0;
    for (float x : v) s += x;
    return s;
}

double mean64(std::span<const float> v) {
    if (v.empty()) throw std::invalid_argument("mean64: empty input");
    return sum64(v) / static_cast<double>(v.size());
}

double stddev_pop64(std::span<const float> v) {
    const double m = mean64(v);
    double acc = 0.0;
    for (float x : v) {
        const double d = static_cast<double>(x) - m;
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(v.size()));
}

std::vector<float> softmax_with_bias(std::span<const float> logits,
                                     std::span<const float> bias,
                                     std::span<const std::uint8_t> masked) {
    const std::size_t n = logits.size();
    if (bias.size() != n || masked.size() != n)
        throw std::invalid_argument("softmax_with_bias: length mismatch");

    bool any_unmasked = false;
    for (std::size_t i = 0; i < n; ++i) {
        if (std::isnan(logits[i]) || std::isnan(bias[i]))
            throw std::invalid_argument("softmax_with_bias: NaN input");
        if (!masked[i]) any_unmasked = true;
    }
    if (!any_unmasked) throw std::runtime_error("empty attention row");

    double zmax = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        if (masked[i]) continue;
        const double z = static_cast<double>(logits[i]) + static_cast<double>(bias[i]);
        if (z > zmax) zmax = z;
    }

    std::vector<double> e(n, 0.0);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (masked[i]) continue;
        const double z = static_cast<double>(logits[i]) + static_cast<double>(bias[i]);
        e[i] = std::exp(z - zmax);
        sum += e[i];
    }

    std::vector<float> out(n, 0.0f);
    for (std::size_t i = 0; i < n; ++i) {
        if (!masked[i]) out[i] = static_cast<float>(e[i] / sum);
    }
    return out;
}

std::vector<float> softmax(std::span<const float> logits) {
    const std::vector<float> zero_bias(logits.size(), 0.0f);
    const std::vector<std::uint8_t> no_mask(logits.size(), 0);
    return softmax_with_bias(logits, zero_bias, no_mask);
}

std::vector<float> minmax_normalize(std::span<const float> v) {
    if (v.empty()) throw std::invalid_argument("minmax_normalize: empty input");
    float lo = v[0], hi = v[0];
    for (float x : v) {
        if (x < lo) lo = x;
        if (x > hi) hi = x;
    }
    std::vector<float> out(v.size());
    if (lo == hi) {
        // constant input rule
        std::fill(out.begin(), out.end(), 0.0f);
        return out;
    }
    const double range = static_cast<double>(hi) - static_cast<double>(lo);
    for (std::size_t i = 0; i < v.size(); ++i)
        out[i] = static_cast<float>((static_cast<double>(v[i]) - lo) / range);
    return out;
}

std::vector<float> sum_normalize(std::span<const float> v) {
    for (float x : v) {
        if (x < 0.0f) throw std::invalid_argument("sum_normalize: negative entry");
    }
    const double total = sum64(v);
    if (total <= 0.0) throw std::runtime_error("degenerate saliency");
    std::vector<float> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        out[i] = static_cast<float>(static_cast<double>(v[i]) / total);
    return out;
}

std::vector<float> clip_sigma(std::span<const float> v, float k) {
    if (v.empty()) throw std::invalid_argument("clip_sigma: empty input");
    if (!(k > 0.0f)) throw std::invalid_argument("clip_sigma: k must be positive");
    const double bound = mean64(v) + static_cast<double>(k) * stddev_pop64(v);
    const float fbound = static_cast<float>(bound);
    std::vector<float> out(v.begin(), v.end());
    for (float& x : out) {
        if (x > fbound) x = fbound;
    }
    return out;
}

}  // namespace gift
