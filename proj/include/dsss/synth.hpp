#pragma once

#include <array>
#include <string>
#include <vector>

#include "dsss/labels.hpp"
#include "dsss/rng.hpp"
#include "dsss/tensor.hpp"

namespace dsss {

// Appearance + sensor-noise recipe for one synthetic domain. Geometry is
// shared across domains; only these fields change how a scene is dressed.
struct DomainSpec {
    std::string name;
    std::vector<std::array<double, 3>> palette;  // one base color per class
    double texture_amp = 0.0;                    // per-pixel color noise amplitude
    double illum_gain = 1.0;
    double illum_offset = 0.0;
    double depth_hole_rate = 0.0;      // per 4x4 block
    double depth_speckle_sigma = 0.0;  // additive Gaussian on surviving pixels
};

struct Sample {
    Tensor rgb;       // [1,3,H,W] in [0,1]
    Tensor depth;     // [1,1,H,W] in [0,1], 1 = nearest
    LabelMap labels;  // [1,H,W]
};

// Distinct base colors: fixed ground/sidewalk grays plus an evenly spaced
// hue wheel for object classes.
std::vector<std::array<double, 3>> class_palette(int num_classes);

// Presets: "source", "shifted" (hue-rotated palette, mild illumination shift,
// heavier depth corruption), "dark" (low-light analog).
DomainSpec domain_preset(const std::string& name, int num_classes);

// Ground band (class 0) with a depth ramp, a sidewalk band (class 1), then
// 2-6 shapes of classes 2..K-1 composited far-to-near. Geometry draws come
// only from `geom`, appearance draws only from `appearance`, so one geometry
// can be re-dressed under any domain.
Sample generate_scene(const DomainSpec& spec, int num_classes, std::int64_t h, std::int64_t w,
                      StreamRng& geom, StreamRng& appearance);

// Zero whole 4x4 blocks with probability depth_hole_rate, then speckle the
// surviving pixels and clamp to [0,1]. Holes stay exactly zero.
Tensor corrupt_depth(const Tensor& depth, const DomainSpec& spec, StreamRng& rng);

// {dir}/{id}.rgb.ppm + {id}.depth.pgm + {id}.label.pgm
void write_sample(const Sample& sample, const std::string& dir, const std::string& id);
Sample read_sample(const std::string& dir, const std::string& id);

struct DatasetEntry {
    std::string id;
    std::string domain;
    std::uint64_t seed = 0;  // per-sample root seed (geometry lineage)
};

// Writes `count` samples plus manifest.jsonl into dir; depth is corrupted
// per the spec before writing. Returns the manifest entries.
std::vector<DatasetEntry> make_dataset(const std::string& dir, const DomainSpec& spec,
                                       int num_classes, std::int64_t h, std::int64_t w, int count,
                                       std::uint64_t seed);

std::vector<DatasetEntry> read_manifest(const std::string& dir);

struct Dataset {
    std::vector<DatasetEntry> entries;
    std::vector<Sample> samples;
};

Dataset load_dataset(const std::string& dir);

}  // namespace dsss
