#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "dsss/netpbm.hpp"
#include "dsss/synth.hpp"

using namespace dsss;

namespace {

namespace fs = std::filesystem;

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("dsss_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string str() const { return path.string(); }
    static int& counter() {
        static int n = 0;
        return n;
    }
};

Tensor random_unit_tensor(Shape s, StreamRng& rng) {
    std::vector<double> v(static_cast<std::size_t>(s.numel()));
    for (auto& x : v) x = rng.uniform();
    return Tensor(s, std::move(v));
}

std::string file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("ppm: round trip within quantization, deterministic bytes") {
    TempDir dir;
    StreamRng rng = StreamRng::stream(61, "io", 0);
    Tensor rgb = random_unit_tensor({1, 3, 5, 7}, rng);
    const std::string path = dir.str() + "/a.ppm";
    write_ppm(path, rgb);
    Tensor back = read_ppm(path);
    CHECK(back.shape() == rgb.shape());
    for (std::int64_t i = 0; i < rgb.numel(); ++i)
        CHECK(std::abs(back.values()[static_cast<std::size_t>(i)] -
                       rgb.values()[static_cast<std::size_t>(i)]) <= 1.0 / 255.0);
    const std::string first = file_bytes(path);
    write_ppm(path, rgb);
    CHECK(file_bytes(path) == first);
    // re-reading the quantized image is lossless
    write_ppm(dir.str() + "/b.ppm", back);
    Tensor twice = read_ppm(dir.str() + "/b.ppm");
    for (std::int64_t i = 0; i < rgb.numel(); ++i)
        CHECK(twice.values()[static_cast<std::size_t>(i)] ==
              back.values()[static_cast<std::size_t>(i)]);
}

TEST_CASE("pgm16: quantization arithmetic") {
    TempDir dir;
    Tensor depth({1, 1, 1, 3}, {0.5, 0.0, 1.0});
    const std::string path = dir.str() + "/d.pgm";
    write_pgm16(path, depth);
    const std::string bytes = file_bytes(path);
    // header "P5\n3 1\n65535\n" then big-endian samples; round(0.5*65535)=32768
    const std::size_t raster = bytes.size() - 6;
    const auto hi = static_cast<unsigned char>(bytes[raster]);
    const auto lo = static_cast<unsigned char>(bytes[raster + 1]);
    CHECK(((hi << 8) | lo) == 32768);
    Tensor back = read_pgm16(path);
    CHECK(back.values()[0] == doctest::Approx(32768.0 / 65535.0).epsilon(1e-15));
    CHECK(back.values()[1] == 0.0);
    CHECK(back.values()[2] == 1.0);
    StreamRng rng = StreamRng::stream(61, "io", 1);
    Tensor noisy = random_unit_tensor({1, 1, 6, 4}, rng);
    write_pgm16(path, noisy);
    Tensor round = read_pgm16(path);
    for (std::int64_t i = 0; i < noisy.numel(); ++i)
        CHECK(std::abs(round.values()[static_cast<std::size_t>(i)] -
                       noisy.values()[static_cast<std::size_t>(i)]) <= 1.0 / 65535.0);
}

TEST_CASE("pgm8: labels round trip exactly") {
    TempDir dir;
    Gray8 img{2, 3, {0, 5, 254, 255, 17, 3}};
    const std::string path = dir.str() + "/l.pgm";
    write_pgm8(path, img);
    Gray8 back = read_pgm8(path);
    CHECK(back.h == 2);
    CHECK(back.w == 3);
    CHECK(back.v == img.v);
}

TEST_CASE("netpbm: format errors carry byte offsets") {
    TempDir dir;
    SUBCASE("graymap read as pixmap") {
        write_pgm8(dir.str() + "/x.pgm", {1, 1, {7}});
        CHECK_THROWS_AS(read_ppm(dir.str() + "/x.pgm"), FormatError);
    }
    SUBCASE("pixmap read as graymap") {
        write_ppm(dir.str() + "/x.ppm", Tensor::full({1, 3, 1, 1}, 0.5));
        CHECK_THROWS_AS(read_pgm8(dir.str() + "/x.ppm"), FormatError);
    }
    SUBCASE("truncated raster") {
        std::ofstream out(dir.str() + "/t.ppm", std::ios::binary);
        out << "P6\n4 4\n255\nabc";  // needs 48 payload bytes
        out.close();
        try {
            read_ppm(dir.str() + "/t.ppm");
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(e.offset > 0);
        }
    }
    SUBCASE("wrong maxval") {
        std::ofstream out(dir.str() + "/m.pgm", std::ios::binary);
        out << "P5\n1 1\n63\nz";
        out.close();
        CHECK_THROWS_AS(read_pgm8(dir.str() + "/m.pgm"), FormatError);
    }
    SUBCASE("header comments are skipped") {
        std::ofstream out(dir.str() + "/c.pgm", std::ios::binary);
        out << "P5 # a pixmap\n# full line comment\n 2 1\n# another\n255\n";
        out.put(9);
        out.put(200);
        out.close();
        Gray8 img = read_pgm8(dir.str() + "/c.pgm");
        CHECK(img.w == 2);
        CHECK(img.v[0] == 9);
        CHECK(img.v[1] == 200);
    }
    SUBCASE("missing file") { CHECK_THROWS_AS(read_ppm(dir.str() + "/nope.ppm"), IoError); }
    SUBCASE("range validation on write") {
        CHECK_THROWS_AS(write_ppm(dir.str() + "/r.ppm", Tensor::full({1, 3, 1, 1}, 1.5)),
                        ValidationError);
        CHECK_THROWS_AS(write_ppm(dir.str() + "/r.ppm", Tensor::zeros({1, 1, 1, 1})), ShapeError);
        CHECK_THROWS_AS(write_pgm16(dir.str() + "/r.pgm", Tensor::zeros({2, 1, 1, 1})),
                        ShapeError);
    }
}

TEST_CASE("class_palette and presets") {
    auto palette = class_palette(6);
    REQUIRE(palette.size() == 6);
    std::set<std::array<double, 3>> uniq(palette.begin(), palette.end());
    CHECK(uniq.size() == 6);
    for (const auto& c : palette)
        for (double v : c) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    DomainSpec shifted = domain_preset("shifted", 6);
    CHECK(shifted.depth_hole_rate == 0.15);
    CHECK(shifted.depth_speckle_sigma == 0.05);
    CHECK(shifted.palette != palette);
    CHECK(domain_preset("dark", 6).illum_gain < 1.0);
    CHECK_THROWS_AS(domain_preset("mars", 6), ValidationError);
    CHECK_THROWS_AS(class_palette(1), ValidationError);
}

TEST_CASE("generate_scene: noise-free limit hits the palette exactly") {
    DomainSpec spec;
    spec.name = "flat";
    spec.palette = class_palette(5);
    spec.texture_amp = 0.0;
    StreamRng geom = StreamRng::stream(71, "geometry", 0);
    StreamRng app = StreamRng::stream(71, "appearance", 0);
    Sample s = generate_scene(spec, 5, 32, 32, geom, app);
    for (std::int64_t y = 0; y < 32; ++y)
        for (std::int64_t x = 0; x < 32; ++x) {
            const auto& want = spec.palette[s.labels.at(0, y, x)];
            for (std::int64_t c = 0; c < 3; ++c)
                CHECK(s.rgb.at(0, c, y, x) == want[static_cast<std::size_t>(c)]);
        }
}

TEST_CASE("generate_scene: determinism and validation") {
    DomainSpec spec = domain_preset("source", 6);
    auto render = [&](std::uint64_t seed) {
        StreamRng geom = StreamRng::stream(seed, "geometry", 0);
        StreamRng app = StreamRng::stream(seed, "appearance", 0);
        return generate_scene(spec, 6, 32, 32, geom, app);
    };
    Sample a = render(5);
    Sample b = render(5);
    CHECK(a.labels.v == b.labels.v);
    for (std::int64_t i = 0; i < a.rgb.numel(); ++i)
        CHECK(a.rgb.values()[static_cast<std::size_t>(i)] ==
              b.rgb.values()[static_cast<std::size_t>(i)]);
    for (std::int64_t i = 0; i < a.depth.numel(); ++i)
        CHECK(a.depth.values()[static_cast<std::size_t>(i)] ==
              b.depth.values()[static_cast<std::size_t>(i)]);
    Sample c = render(6);
    CHECK(c.labels.v != a.labels.v);

    StreamRng geom = StreamRng::stream(5, "geometry", 0);
    StreamRng app = StreamRng::stream(5, "appearance", 0);
    CHECK_THROWS_AS(generate_scene(spec, 1, 32, 32, geom, app), ValidationError);
    CHECK_THROWS_AS(generate_scene(spec, 6, 8, 32, geom, app), ValidationError);
    DomainSpec bad = spec;
    bad.palette.pop_back();
    CHECK_THROWS_AS(generate_scene(bad, 6, 32, 32, geom, app), ValidationError);
}

TEST_CASE("generate_scene: depth layering is consistent with labels") {
    DomainSpec spec = domain_preset("source", 6);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        StreamRng geom = StreamRng::stream(seed, "geometry", 0);
        StreamRng app = StreamRng::stream(seed, "appearance", 0);
        Sample s = generate_scene(spec, 6, 32, 48, geom, app);
        bool any_object = false;
        for (std::int64_t y = 0; y < 32; ++y)
            for (std::int64_t x = 0; x < 48; ++x) {
                const std::uint8_t cls = s.labels.at(0, y, x);
                const double d = s.depth.at(0, 0, y, x);
                if (cls == 0) {
                    CHECK(d == 0.05 + 0.25 * static_cast<double>(y) / 31.0);
                } else if (cls == 1) {
                    CHECK(d == 0.35);
                } else {
                    any_object = true;
                    CHECK(d >= 0.40);
                    CHECK(d <= 0.95);
                }
                CHECK(cls < 6);
            }
        CHECK(any_object);
    }
}

TEST_CASE("corrupt_depth: limits and hole statistics") {
    DomainSpec clean;
    StreamRng rng = StreamRng::stream(81, "corrupt", 0);
    Tensor depth = random_unit_tensor({1, 1, 8, 8}, rng);
    SUBCASE("no corruption is the identity") {
        StreamRng r = StreamRng::stream(81, "corrupt", 1);
        Tensor out = corrupt_depth(depth, clean, r);
        for (std::int64_t i = 0; i < depth.numel(); ++i)
            CHECK(out.values()[static_cast<std::size_t>(i)] ==
                  depth.values()[static_cast<std::size_t>(i)]);
    }
    SUBCASE("full hole rate zeroes everything") {
        DomainSpec all;
        all.depth_hole_rate = 1.0;
        StreamRng r = StreamRng::stream(81, "corrupt", 2);
        Tensor out = corrupt_depth(depth, all, r);
        for (auto v : out.values()) CHECK(v == 0.0);
    }
    SUBCASE("holes stay zero under speckle, all values clamped") {
        DomainSpec noisy;
        noisy.depth_hole_rate = 0.5;
        noisy.depth_speckle_sigma = 0.3;
        StreamRng r = StreamRng::stream(81, "corrupt", 3);
        Tensor out = corrupt_depth(depth, noisy, r);
        int zeros = 0;
        for (auto v : out.values()) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
            zeros += v == 0.0;
        }
        CHECK(zeros >= 16);  // at least one 4x4 block at rate 0.5 over 4 blocks
    }
    SUBCASE("hole-block frequency matches the rate") {
        DomainSpec quarter;
        quarter.depth_hole_rate = 0.25;
        Tensor flat = Tensor::full({1, 1, 8, 8}, 0.5);
        std::int64_t holed_blocks = 0;
        for (int trial = 0; trial < 1000; ++trial) {
            StreamRng r = StreamRng::stream(static_cast<std::uint64_t>(trial), "corrupt", 4);
            Tensor out = corrupt_depth(flat, quarter, r);
            for (std::int64_t by = 0; by < 2; ++by)
                for (std::int64_t bx = 0; bx < 2; ++bx)
                    holed_blocks += out.at(0, 0, by * 4, bx * 4) == 0.0;
        }
        const double fraction = static_cast<double>(holed_blocks) / 4000.0;
        CHECK(fraction > 0.21);
        CHECK(fraction < 0.29);
    }
    SUBCASE("input range enforced") {
        DomainSpec spec;
        StreamRng r = StreamRng::stream(81, "corrupt", 5);
        CHECK_THROWS_AS(corrupt_depth(Tensor::full({1, 1, 4, 4}, 1.5), spec, r),
                        ValidationError);
    }
}

TEST_CASE("samples round trip through the directory layout") {
    TempDir dir;
    DomainSpec spec = domain_preset("source", 6);
    StreamRng geom = StreamRng::stream(91, "geometry", 0);
    StreamRng app = StreamRng::stream(91, "appearance", 0);
    Sample s = generate_scene(spec, 6, 32, 32, geom, app);
    write_sample(s, dir.str(), "000007");
    CHECK(fs::exists(dir.path / "000007.rgb.ppm"));
    CHECK(fs::exists(dir.path / "000007.depth.pgm"));
    CHECK(fs::exists(dir.path / "000007.label.pgm"));
    Sample back = read_sample(dir.str(), "000007");
    CHECK(back.labels.v == s.labels.v);
    for (std::int64_t i = 0; i < s.rgb.numel(); ++i)
        CHECK(std::abs(back.rgb.values()[static_cast<std::size_t>(i)] -
                       s.rgb.values()[static_cast<std::size_t>(i)]) <= 1.0 / 255.0);
    for (std::int64_t i = 0; i < s.depth.numel(); ++i)
        CHECK(std::abs(back.depth.values()[static_cast<std::size_t>(i)] -
                       s.depth.values()[static_cast<std::size_t>(i)]) <= 1.0 / 65535.0);
}

TEST_CASE("make_dataset: layout, determinism, loading") {
    TempDir a;
    TempDir b;
    DomainSpec spec = domain_preset("source", 6);
    auto entries = make_dataset(a.str(), spec, 6, 32, 32, 5, 1234);
    REQUIRE(entries.size() == 5);
    CHECK(entries[0].id == "000000");
    CHECK(entries[4].seed == 1238);
    CHECK(entries[2].domain == "source");

    int files = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(a.path)) ++files;
    CHECK(files == 16);  // 3 per sample + manifest

    make_dataset(b.str(), spec, 6, 32, 32, 5, 1234);
    for (const auto& e : fs::directory_iterator(a.path)) {
        const auto name = e.path().filename();
        CHECK(file_bytes((b.path / name).string()) == file_bytes(e.path().string()));
    }

    Dataset ds = load_dataset(a.str());
    CHECK(ds.entries.size() == 5);
    CHECK(ds.samples.size() == 5);
    CHECK(ds.samples[0].labels.h == 32);
    CHECK(ds.samples[0].rgb.shape() == Shape{1, 3, 32, 32});

    CHECK_THROWS_AS(load_dataset(a.str() + "/missing"), IoError);
}

TEST_CASE("domain shift moves color but not geometry") {
    DomainSpec source = domain_preset("source", 6);
    DomainSpec shifted = domain_preset("shifted", 6);
    constexpr int kBins = 32;
    std::array<double, kBins> hist_src{};
    std::array<double, kBins> hist_shift{};
    double total = 0;
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        StreamRng geom_a = StreamRng::stream(seed, "geometry", 0);
        StreamRng app_a = StreamRng::stream(seed, "appearance", 0);
        Sample sa = generate_scene(source, 6, 32, 32, geom_a, app_a);
        StreamRng geom_b = StreamRng::stream(seed, "geometry", 0);
        StreamRng app_b = StreamRng::stream(seed, "appearance", 0);
        Sample sb = generate_scene(shifted, 6, 32, 32, geom_b, app_b);

        CHECK(sa.labels.v == sb.labels.v);
        for (std::int64_t i = 0; i < sa.depth.numel(); ++i)
            CHECK(sa.depth.values()[static_cast<std::size_t>(i)] ==
                  sb.depth.values()[static_cast<std::size_t>(i)]);

        for (std::int64_t i = 0; i < sa.rgb.numel(); ++i) {
            const double va = sa.rgb.values()[static_cast<std::size_t>(i)];
            const double vb = sb.rgb.values()[static_cast<std::size_t>(i)];
            hist_src[std::min<int>(kBins - 1, static_cast<int>(va * kBins))] += 1;
            hist_shift[std::min<int>(kBins - 1, static_cast<int>(vb * kBins))] += 1;
            total += 1;
        }
    }
    double l1 = 0;
    for (int i = 0; i < kBins; ++i) l1 += std::abs(hist_src[i] - hist_shift[i]) / total;
    CHECK(l1 > 0.05);
}
