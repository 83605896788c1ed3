#pragma once

#include <string>
#include <vector>

#include "dsss/tensor.hpp"

namespace dsss {

// 8-bit grayscale raster, used for label maps and exported sensitivity maps.
struct Gray8 {
    std::int64_t h = 0;
    std::int64_t w = 0;
    std::vector<std::uint8_t> v;  // row-major, length h*w
};

// Binary pixmap (P6, maxval 255). rgb is [1,3,H,W] with values in [0,1];
// bytes are round(255*v).
void write_ppm(const std::string& path, const Tensor& rgb);
Tensor read_ppm(const std::string& path);

// Binary graymap (P5, maxval 65535, big-endian samples). depth is [1,1,H,W]
// in [0,1]; stored values are round(65535*v).
void write_pgm16(const std::string& path, const Tensor& depth);
Tensor read_pgm16(const std::string& path);

// Binary graymap (P5, maxval 255), raw bytes untouched.
void write_pgm8(const std::string& path, const Gray8& img);
Gray8 read_pgm8(const std::string& path);

}  // namespace dsss
