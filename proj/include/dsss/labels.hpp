#pragma once

#include <cstdint>
#include <vector>

namespace dsss {

// Per-pixel class ids, [B,H,W]. 255 marks pixels excluded from loss,
// partitioning, and metrics.
struct LabelMap {
    static constexpr std::uint8_t IGNORE = 255;

    std::int64_t b = 0;
    std::int64_t h = 0;
    std::int64_t w = 0;
    std::vector<std::uint8_t> v;  // length b*h*w

    std::int64_t index(std::int64_t bi, std::int64_t hi, std::int64_t wi) const {
        return (bi * h + hi) * w + wi;
    }
    std::uint8_t at(std::int64_t bi, std::int64_t hi, std::int64_t wi) const {
        return v[static_cast<std::size_t>(index(bi, hi, wi))];
    }

    static LabelMap filled(std::int64_t b, std::int64_t h, std::int64_t w, std::uint8_t value) {
        return LabelMap{b, h, w, std::vector<std::uint8_t>(static_cast<std::size_t>(b * h * w),
                                                           value)};
    }
};

}  // namespace dsss
