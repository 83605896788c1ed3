#include "dsss/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "dsss/error.hpp"
#include "dsss/netpbm.hpp"
#include "json.hpp"

namespace dsss {

namespace {

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
    h = h - std::floor(h);
    const double c = v * s;
    const double hp = h * 6.0;
    const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    switch (static_cast<int>(hp) % 6) {
        case 0: r = c, g = x; break;
        case 1: r = x, g = c; break;
        case 2: g = c, b = x; break;
        case 3: g = x, b = c; break;
        case 4: r = x, b = c; break;
        default: r = c, b = x; break;
    }
    const double m = v - c;
    return {r + m, g + m, b + m};
}

std::array<double, 3> rgb_to_hsv(const std::array<double, 3>& rgb) {
    const double mx = std::max({rgb[0], rgb[1], rgb[2]});
    const double mn = std::min({rgb[0], rgb[1], rgb[2]});
    const double d = mx - mn;
    double h = 0;
    if (d > 0) {
        if (mx == rgb[0])
            h = std::fmod((rgb[1] - rgb[2]) / d, 6.0) / 6.0;
        else if (mx == rgb[1])
            h = ((rgb[2] - rgb[0]) / d + 2.0) / 6.0;
        else
            h = ((rgb[0] - rgb[1]) / d + 4.0) / 6.0;
        if (h < 0) h += 1.0;
    }
    const double s = mx > 0 ? d / mx : 0.0;
    return {h, s, mx};
}

std::array<double, 3> rotate_hue(const std::array<double, 3>& rgb, double delta) {
    const std::array<double, 3> hsv = rgb_to_hsv(rgb);
    return hsv_to_rgb(hsv[0] + delta, hsv[1], hsv[2]);
}

struct ShapeSpec {
    int type = 0;  // 0 rect, 1 circle, 2 triangle
    std::uint8_t cls = 0;
    double cx = 0, cy = 0;
    double size = 0;
    double aspect = 1.0;
    double depth = 0;
};

bool covers(const ShapeSpec& sh, double x, double y) {
    const double dx = x - sh.cx;
    const double dy = y - sh.cy;
    switch (sh.type) {
        case 0:
            return std::abs(dx) <= sh.size && std::abs(dy) <= sh.size * sh.aspect;
        case 1:
            return dx * dx + dy * dy <= sh.size * sh.size;
        default: {
            // isoceles triangle, apex up
            const double t = (dy + sh.size) / (2.0 * sh.size);
            return t >= 0.0 && t <= 1.0 && std::abs(dx) <= t * sh.size;
        }
    }
}

std::string sample_path(const std::string& dir, const std::string& id, const char* suffix) {
    return dir + "/" + id + suffix;
}

}  // namespace

std::vector<std::array<double, 3>> class_palette(int num_classes) {
    if (num_classes < 2) throw ValidationError("class_palette: need at least two classes");
    std::vector<std::array<double, 3>> palette;
    palette.reserve(static_cast<std::size_t>(num_classes));
    palette.push_back({0.30, 0.33, 0.27});  // ground
    palette.push_back({0.62, 0.60, 0.58});  // sidewalk
    const int objects = num_classes - 2;
    for (int i = 0; i < objects; ++i)
        palette.push_back(hsv_to_rgb(0.83 * i / std::max(1, objects), 0.75, 0.85));
    return palette;
}

DomainSpec domain_preset(const std::string& name, int num_classes) {
    DomainSpec spec;
    spec.name = name;
    spec.palette = class_palette(num_classes);
    if (name == "source") {
        spec.texture_amp = 0.02;
        spec.illum_gain = 1.0;
        spec.illum_offset = 0.0;
        spec.depth_hole_rate = 0.10;
        spec.depth_speckle_sigma = 0.05;
    } else if (name == "shifted") {
        for (auto& c : spec.palette) c = rotate_hue(c, 0.10);
        spec.texture_amp = 0.05;
        spec.illum_gain = 0.90;
        spec.illum_offset = 0.06;
        spec.depth_hole_rate = 0.15;
        spec.depth_speckle_sigma = 0.05;
    } else if (name == "dark") {
        for (auto& c : spec.palette)
            for (auto& v : c) v *= 0.45;
        spec.texture_amp = 0.03;
        spec.illum_gain = 0.55;
        spec.illum_offset = 0.0;
        spec.depth_hole_rate = 0.10;
        spec.depth_speckle_sigma = 0.03;
    } else {
        throw ValidationError("domain_preset: unknown domain '" + name + "'");
    }
    return spec;
}

Sample generate_scene(const DomainSpec& spec, int num_classes, std::int64_t h, std::int64_t w,
                      StreamRng& geom, StreamRng& appearance) {
    if (num_classes < 2) throw ValidationError("generate_scene: need at least two classes");
    if (h < 16 || w < 16) throw ValidationError("generate_scene: extents must be >= 16");
    if (spec.palette.size() != static_cast<std::size_t>(num_classes))
        throw ValidationError("generate_scene: palette has " +
                              std::to_string(spec.palette.size()) + " entries for K=" +
                              std::to_string(num_classes));

    // -- geometry ---------------------------------------------------------
    const double band_top = (0.52 + 0.18 * geom.uniform()) * static_cast<double>(h);
    const double band_height = (0.10 + 0.12 * geom.uniform()) * static_cast<double>(h);

    std::vector<ShapeSpec> shapes;
    const int count = 2 + static_cast<int>(geom.uniform_int(5));
    for (int i = 0; i < count; ++i) {
        ShapeSpec sh;
        sh.type = static_cast<int>(geom.uniform_int(3));
        const std::uint64_t pick =
            num_classes > 2 ? geom.uniform_int(static_cast<std::uint64_t>(num_classes - 2)) : 0;
        sh.cls = static_cast<std::uint8_t>(2 + pick);
        sh.cx = geom.uniform() * static_cast<double>(w);
        sh.cy = geom.uniform() * static_cast<double>(h);
        sh.size = (0.08 + 0.18 * geom.uniform()) * static_cast<double>(std::min(h, w));
        sh.aspect = 0.5 + geom.uniform();
        sh.depth = 0.40 + 0.55 * geom.uniform();
        if (num_classes > 2) shapes.push_back(sh);
    }
    std::stable_sort(shapes.begin(), shapes.end(),
                     [](const ShapeSpec& a, const ShapeSpec& b) { return a.depth < b.depth; });

    LabelMap labels = LabelMap::filled(1, h, w, 0);
    std::vector<double> depth(static_cast<std::size_t>(h * w));
    for (std::int64_t y = 0; y < h; ++y) {
        const bool on_band = static_cast<double>(y) >= band_top &&
                             static_cast<double>(y) < band_top + band_height;
        for (std::int64_t x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y * w + x);
            depth[i] = 0.05 + 0.25 * static_cast<double>(y) / static_cast<double>(h - 1);
            if (on_band) {
                labels.v[i] = 1;
                depth[i] = 0.35;
            }
        }
    }
    for (const ShapeSpec& sh : shapes)
        for (std::int64_t y = 0; y < h; ++y)
            for (std::int64_t x = 0; x < w; ++x)
                if (covers(sh, static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5)) {
                    const std::size_t i = static_cast<std::size_t>(y * w + x);
                    labels.v[i] = sh.cls;
                    depth[i] = sh.depth;
                }

    // -- appearance -------------------------------------------------------
    std::vector<double> rgb(static_cast<std::size_t>(3 * h * w));
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y * w + x);
            const auto& base = spec.palette[labels.v[i]];
            for (std::int64_t c = 0; c < 3; ++c) {
                const double noise = spec.texture_amp * (2.0 * appearance.uniform() - 1.0);
                rgb[static_cast<std::size_t>(c * h * w) + i] =
                    clamp01(spec.illum_gain * (base[static_cast<std::size_t>(c)] + noise) +
                            spec.illum_offset);
            }
        }

    return {Tensor({1, 3, h, w}, std::move(rgb)), Tensor({1, 1, h, w}, std::move(depth)),
            std::move(labels)};
}

Tensor corrupt_depth(const Tensor& depth, const DomainSpec& spec, StreamRng& rng) {
    const Shape s = depth.shape();
    if (s.b != 1 || s.c != 1)
        throw ShapeError("corrupt_depth: expected [1,1,H,W], got " + to_string(s));
    for (double v : depth.values())
        if (v < 0.0 || v > 1.0)
            throw ValidationError("corrupt_depth: depth " + std::to_string(v) +
                                  " outside [0,1]");
    std::vector<double> out(depth.values().begin(), depth.values().end());
    std::vector<std::uint8_t> holed(out.size(), 0);
    const std::int64_t bh = (s.h + 3) / 4;
    const std::int64_t bw = (s.w + 3) / 4;
    for (std::int64_t by = 0; by < bh; ++by)
        for (std::int64_t bx = 0; bx < bw; ++bx) {
            if (rng.uniform() >= spec.depth_hole_rate) continue;
            for (std::int64_t y = by * 4; y < std::min(s.h, by * 4 + 4); ++y)
                for (std::int64_t x = bx * 4; x < std::min(s.w, bx * 4 + 4); ++x) {
                    const std::size_t i = static_cast<std::size_t>(y * s.w + x);
                    out[i] = 0.0;
                    holed[i] = 1;
                }
        }
    if (spec.depth_speckle_sigma > 0)
        for (std::size_t i = 0; i < out.size(); ++i)
            if (!holed[i])
                out[i] = clamp01(out[i] + spec.depth_speckle_sigma * rng.normal());
    return Tensor(s, std::move(out));
}

void write_sample(const Sample& sample, const std::string& dir, const std::string& id) {
    if (sample.labels.b != 1)
        throw ValidationError("write_sample: expected a single-item sample");
    write_ppm(sample_path(dir, id, ".rgb.ppm"), sample.rgb);
    write_pgm16(sample_path(dir, id, ".depth.pgm"), sample.depth);
    write_pgm8(sample_path(dir, id, ".label.pgm"),
               {sample.labels.h, sample.labels.w, sample.labels.v});
}

Sample read_sample(const std::string& dir, const std::string& id) {
    Sample sample;
    sample.rgb = read_ppm(sample_path(dir, id, ".rgb.ppm"));
    sample.depth = read_pgm16(sample_path(dir, id, ".depth.pgm"));
    Gray8 lab = read_pgm8(sample_path(dir, id, ".label.pgm"));
    sample.labels = LabelMap{1, lab.h, lab.w, std::move(lab.v)};
    return sample;
}

std::vector<DatasetEntry> make_dataset(const std::string& dir, const DomainSpec& spec,
                                       int num_classes, std::int64_t h, std::int64_t w, int count,
                                       std::uint64_t seed) {
    if (count < 1) throw ValidationError("make_dataset: count must be positive");
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir + ": " + ec.message());

    std::vector<DatasetEntry> entries;
    entries.reserve(static_cast<std::size_t>(count));
    std::string manifest;
    for (int i = 0; i < count; ++i) {
        char id[16];
        std::snprintf(id, sizeof id, "%06d", i);
        const std::uint64_t sample_seed = seed + static_cast<std::uint64_t>(i);
        StreamRng geom = StreamRng::stream(sample_seed, "geometry", 0);
        StreamRng appearance = StreamRng::stream(sample_seed, "appearance", 0);
        StreamRng corrupt = StreamRng::stream(sample_seed, "corrupt", 0);
        Sample sample = generate_scene(spec, num_classes, h, w, geom, appearance);
        sample.depth = corrupt_depth(sample.depth, spec, corrupt);
        write_sample(sample, dir, id);
        entries.push_back({id, spec.name, sample_seed});
        manifest += nlohmann::json{{"domain", spec.name}, {"id", id}, {"seed", sample_seed}}
                        .dump() +
                    "\n";
    }
    std::ofstream out(dir + "/manifest.jsonl", std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + dir + "/manifest.jsonl");
    out << manifest;
    return entries;
}

std::vector<DatasetEntry> read_manifest(const std::string& dir) {
    std::ifstream in(dir + "/manifest.jsonl");
    if (!in) throw IoError("cannot open " + dir + "/manifest.jsonl");
    std::vector<DatasetEntry> entries;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.contains("id") || !j.contains("domain") ||
            !j.contains("seed"))
            throw FormatError(dir + "/manifest.jsonl: bad record: " + line, 0);
        entries.push_back({j["id"].get<std::string>(), j["domain"].get<std::string>(),
                           j["seed"].get<std::uint64_t>()});
    }
    if (entries.empty()) throw ValidationError("read_manifest: " + dir + " lists no samples");
    return entries;
}

Dataset load_dataset(const std::string& dir) {
    Dataset ds;
    ds.entries = read_manifest(dir);
    ds.samples.reserve(ds.entries.size());
    for (const auto& entry : ds.entries) ds.samples.push_back(read_sample(dir, entry.id));
    return ds;
}

}  // namespace dsss
