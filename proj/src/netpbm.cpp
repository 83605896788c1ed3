#include "dsss/netpbm.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "dsss/error.hpp"

namespace dsss {

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failed on " + path);
    return bytes;
}

void spit(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed on " + path);
}

// Netpbm header scanner: whitespace-separated tokens, # comments to EOL.
class HeaderParser {
 public:
    explicit HeaderParser(const std::string& bytes) : bytes_(bytes) {}

    void expect_magic(const char* magic) {
        if (bytes_.size() < 2 || bytes_[0] != magic[0] || bytes_[1] != magic[1])
            throw FormatError(std::string("expected magic ") + magic, 0);
        pos_ = 2;
    }

    std::int64_t read_int() {
        skip_separators();
        if (pos_ >= bytes_.size() || !std::isdigit(static_cast<unsigned char>(bytes_[pos_])))
            throw FormatError("expected integer in header", pos_);
        std::int64_t value = 0;
        while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
            value = value * 10 + (bytes_[pos_] - '0');
            if (value > (std::int64_t{1} << 40))
                throw FormatError("header integer out of range", pos_);
            ++pos_;
        }
        return value;
    }

    // A single whitespace byte terminates the header before the raster.
    std::size_t raster_start() {
        if (pos_ >= bytes_.size() ||
            !std::isspace(static_cast<unsigned char>(bytes_[pos_])))
            throw FormatError("expected whitespace before raster", pos_);
        return pos_ + 1;
    }

 private:
    void skip_separators() {
        while (pos_ < bytes_.size()) {
            const unsigned char c = static_cast<unsigned char>(bytes_[pos_]);
            if (std::isspace(c)) {
                ++pos_;
            } else if (c == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else {
                break;
            }
        }
    }

    const std::string& bytes_;
    std::size_t pos_ = 0;
};

struct Raster {
    std::int64_t w = 0;
    std::int64_t h = 0;
    std::size_t start = 0;  // offset of the first sample byte
};

Raster parse_header(const std::string& bytes, const char* magic, std::int64_t want_maxval,
                    const std::string& path) {
    HeaderParser p(bytes);
    try {
        p.expect_magic(magic);
        Raster r;
        r.w = p.read_int();
        r.h = p.read_int();
        const std::int64_t maxval = p.read_int();
        if (maxval != want_maxval)
            throw FormatError("expected maxval " + std::to_string(want_maxval) + ", got " +
                                  std::to_string(maxval),
                              0);
        if (r.w < 1 || r.h < 1) throw FormatError("degenerate image extents", 0);
        r.start = p.raster_start();
        return r;
    } catch (const FormatError& e) {
        throw FormatError(path + ": " + e.what(), e.offset);
    }
}

void check_payload(const std::string& bytes, const Raster& r, std::size_t sample_bytes,
                   const std::string& path) {
    const std::size_t need = static_cast<std::size_t>(r.w * r.h) * sample_bytes;
    if (bytes.size() - r.start < need)
        throw FormatError(path + ": truncated raster, need " + std::to_string(need) +
                              " bytes, have " + std::to_string(bytes.size() - r.start),
                          bytes.size());
}

std::uint8_t quantize8(double v, const std::string& path) {
    if (!(v >= 0.0 && v <= 1.0))
        throw ValidationError(path + ": sample " + std::to_string(v) + " outside [0,1]");
    return static_cast<std::uint8_t>(std::lround(v * 255.0));
}

std::uint16_t quantize16(double v, const std::string& path) {
    if (!(v >= 0.0 && v <= 1.0))
        throw ValidationError(path + ": sample " + std::to_string(v) + " outside [0,1]");
    return static_cast<std::uint16_t>(std::lround(v * 65535.0));
}

std::string header(const char* magic, std::int64_t w, std::int64_t h, std::int64_t maxval) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s\n%lld %lld\n%lld\n", magic, static_cast<long long>(w),
                  static_cast<long long>(h), static_cast<long long>(maxval));
    return buf;
}

}  // namespace

void write_ppm(const std::string& path, const Tensor& rgb) {
    const Shape s = rgb.shape();
    if (s.b != 1 || s.c != 3)
        throw ShapeError("write_ppm: expected [1,3,H,W], got " + to_string(s));
    std::string bytes = header("P6", s.w, s.h, 255);
    bytes.reserve(bytes.size() + static_cast<std::size_t>(3 * s.h * s.w));
    for (std::int64_t y = 0; y < s.h; ++y)
        for (std::int64_t x = 0; x < s.w; ++x)
            for (std::int64_t c = 0; c < 3; ++c)
                bytes.push_back(static_cast<char>(quantize8(rgb.at(0, c, y, x), path)));
    spit(path, bytes);
}

Tensor read_ppm(const std::string& path) {
    const std::string bytes = slurp(path);
    const Raster r = parse_header(bytes, "P6", 255, path);
    check_payload(bytes, r, 3, path);
    std::vector<double> v(static_cast<std::size_t>(3 * r.h * r.w));
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + r.start;
    for (std::int64_t y = 0; y < r.h; ++y)
        for (std::int64_t x = 0; x < r.w; ++x)
            for (std::int64_t c = 0; c < 3; ++c)
                v[static_cast<std::size_t>(((c * r.h) + y) * r.w + x)] =
                    static_cast<double>(p[(y * r.w + x) * 3 + c]) / 255.0;
    return Tensor({1, 3, r.h, r.w}, std::move(v));
}

void write_pgm16(const std::string& path, const Tensor& depth) {
    const Shape s = depth.shape();
    if (s.b != 1 || s.c != 1)
        throw ShapeError("write_pgm16: expected [1,1,H,W], got " + to_string(s));
    std::string bytes = header("P5", s.w, s.h, 65535);
    bytes.reserve(bytes.size() + static_cast<std::size_t>(2 * s.h * s.w));
    for (std::int64_t y = 0; y < s.h; ++y)
        for (std::int64_t x = 0; x < s.w; ++x) {
            const std::uint16_t q = quantize16(depth.at(0, 0, y, x), path);
            bytes.push_back(static_cast<char>(q >> 8));
            bytes.push_back(static_cast<char>(q & 0xff));
        }
    spit(path, bytes);
}

Tensor read_pgm16(const std::string& path) {
    const std::string bytes = slurp(path);
    const Raster r = parse_header(bytes, "P5", 65535, path);
    check_payload(bytes, r, 2, path);
    std::vector<double> v(static_cast<std::size_t>(r.h * r.w));
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + r.start;
    for (std::size_t i = 0; i < v.size(); ++i)
        v[i] = static_cast<double>((p[2 * i] << 8) | p[2 * i + 1]) / 65535.0;
    return Tensor({1, 1, r.h, r.w}, std::move(v));
}

void write_pgm8(const std::string& path, const Gray8& img) {
    if (img.h < 1 || img.w < 1 ||
        img.v.size() != static_cast<std::size_t>(img.h * img.w))
        throw ValidationError("write_pgm8: raster size does not match extents");
    std::string bytes = header("P5", img.w, img.h, 255);
    bytes.append(reinterpret_cast<const char*>(img.v.data()), img.v.size());
    spit(path, bytes);
}

Gray8 read_pgm8(const std::string& path) {
    const std::string bytes = slurp(path);
    const Raster r = parse_header(bytes, "P5", 255, path);
    check_payload(bytes, r, 1, path);
    Gray8 img{r.h, r.w, {}};
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + r.start;
    img.v.assign(p, p + r.h * r.w);
    return img;
}

}  // namespace dsss
