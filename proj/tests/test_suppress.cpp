#include <cmath>
#include <vector>

#include "doctest.h"
#include "dsss/rng.hpp"
#include "dsss/suppress.hpp"

using namespace dsss;

namespace {

Tensor random_tensor(Shape s, StreamRng& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(static_cast<std::size_t>(s.numel()));
    for (auto& x : v) x = lo + (hi - lo) * rng.uniform();
    return Tensor(s, std::move(v));
}

LabelMap random_labels(std::int64_t b, std::int64_t h, std::int64_t w, int k, StreamRng& rng,
                       double ignore_rate = 0.1) {
    LabelMap m{b, h, w, std::vector<std::uint8_t>(static_cast<std::size_t>(b * h * w))};
    for (auto& v : m.v)
        v = rng.uniform() < ignore_rate
                ? LabelMap::IGNORE
                : static_cast<std::uint8_t>(rng.uniform_int(static_cast<std::uint64_t>(k)));
    return m;
}

const Tensor kOne = Tensor::scalar(1.0);
const Tensor kZero = Tensor::scalar(0.0);

}  // namespace

TEST_CASE("feature_difference: oracle values") {
    Tensor a({1, 1, 1, 2}, {1.0, -2.0});
    Tensor b({1, 1, 1, 2}, {3.0, 1.0});
    Tensor d = feature_difference(a, b);
    CHECK(d.values()[0] == 2.0);
    CHECK(d.values()[1] == 3.0);
    Tensor d2 = feature_difference(b, a);
    CHECK(d2.values()[0] == d.values()[0]);
    CHECK(d2.values()[1] == d.values()[1]);
    Tensor same = feature_difference(a, a);
    for (auto v : same.values()) CHECK(v == 0.0);
    CHECK_THROWS_AS(feature_difference(a, Tensor::zeros({1, 1, 2, 1})), ShapeError);
}

TEST_CASE("downsample_labels: identity, constancy, nearest picks") {
    LabelMap same = LabelMap::filled(1, 2, 2, 3);
    LabelMap out = downsample_labels(same, 2, 2);
    CHECK(out.v == same.v);

    LabelMap constant = LabelMap::filled(1, 4, 4, 1);
    LabelMap down = downsample_labels(constant, 2, 2);
    for (auto v : down.v) CHECK(v == 1);

    LabelMap checker{1, 4, 4, {}};
    checker.v.resize(16);
    for (std::int64_t h = 0; h < 4; ++h)
        for (std::int64_t w = 0; w < 4; ++w)
            checker.v[static_cast<std::size_t>(checker.index(0, h, w))] =
                static_cast<std::uint8_t>((h + w) % 2);
    LabelMap picks = downsample_labels(checker, 2, 2);
    for (std::int64_t h = 0; h < 2; ++h)
        for (std::int64_t w = 0; w < 2; ++w)
            CHECK(picks.at(0, h, w) == checker.at(0, 2 * h, 2 * w));

    LabelMap with_ignore = LabelMap::filled(1, 4, 4, LabelMap::IGNORE);
    CHECK(downsample_labels(with_ignore, 2, 2).v[0] == LabelMap::IGNORE);
    CHECK_THROWS_AS(downsample_labels(with_ignore, 8, 8), ValidationError);
}

TEST_CASE("class_partition: forced and empty partitions") {
    Tensor diff({1, 2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
    SUBCASE("single class owns everything") {
        LabelMap labels = LabelMap::filled(1, 2, 2, 0);
        auto parts = class_partition(diff, labels, 3);
        REQUIRE(parts.size() == 3);
        for (std::int64_t i = 0; i < diff.numel(); ++i)
            CHECK(parts[0].values()[static_cast<std::size_t>(i)] ==
                  diff.values()[static_cast<std::size_t>(i)]);
        for (std::size_t k = 1; k < 3; ++k)
            for (auto v : parts[k].values()) CHECK(v == 0.0);
    }
    SUBCASE("all ignored") {
        LabelMap labels = LabelMap::filled(1, 2, 2, LabelMap::IGNORE);
        for (const auto& part : class_partition(diff, labels, 2))
            for (auto v : part.values()) CHECK(v == 0.0);
    }
    SUBCASE("out-of-range label") {
        LabelMap labels = LabelMap::filled(1, 2, 2, 2);
        CHECK_THROWS_AS(class_partition(diff, labels, 2), ValidationError);
    }
}

TEST_CASE("class_partition: partition of unity over random maps") {
    StreamRng rng = StreamRng::stream(41, "suppress", 0);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor diff = random_tensor({2, 3, 4, 5}, rng, 0.0, 2.0);
        LabelMap labels = random_labels(2, 4, 5, 4, rng, 0.15);
        auto parts = class_partition(diff, labels, 4);
        const Shape s = diff.shape();
        for (std::int64_t b = 0; b < s.b; ++b)
            for (std::int64_t c = 0; c < s.c; ++c)
                for (std::int64_t h = 0; h < s.h; ++h)
                    for (std::int64_t w = 0; w < s.w; ++w) {
                        double sum = 0;
                        for (const auto& part : parts) sum += part.at(b, c, h, w);
                        if (labels.at(b, h, w) == LabelMap::IGNORE)
                            sum += diff.at(b, c, h, w);
                        CHECK(sum == diff.at(b, c, h, w));
                    }
    }
}

TEST_CASE("class_spatial_sensitivity: uniform, averaging, and absence rules") {
    SUBCASE("uniform nonzero diff spreads 1/n") {
        Tensor z = Tensor::full({1, 3, 2, 2}, 0.5);
        SpatialMask mask{1, 2, 2, {1, 1, 0, 1}};
        Tensor s = class_spatial_sensitivity(z, mask);
        CHECK(s.shape() == Shape{1, 1, 2, 2});
        CHECK(s.values()[0] == doctest::Approx(1.0 / 3).epsilon(1e-12));
        CHECK(s.values()[1] == doctest::Approx(1.0 / 3).epsilon(1e-12));
        CHECK(s.values()[2] == 0.0);
        CHECK(s.values()[3] == doctest::Approx(1.0 / 3).epsilon(1e-12));
    }
    SUBCASE("two channels average their softmaxes") {
        Tensor z({1, 2, 1, 2}, {0.0, std::log(3.0), std::log(3.0), 0.0});
        SpatialMask mask{1, 1, 2, {1, 1}};
        Tensor s = class_spatial_sensitivity(z, mask);
        CHECK(s.values()[0] == doctest::Approx((0.25 + 0.75) / 2).epsilon(1e-12));
        CHECK(s.values()[1] == doctest::Approx((0.75 + 0.25) / 2).epsilon(1e-12));
    }
    SUBCASE("empty mask and zero response give zero maps") {
        Tensor z = Tensor::full({1, 2, 2, 2}, 0.3);
        SpatialMask empty{1, 2, 2, {0, 0, 0, 0}};
        Tensor absent = class_spatial_sensitivity(z, empty);
        for (auto v : absent.values()) CHECK(v == 0.0);
        Tensor zero = Tensor::zeros({1, 2, 2, 2});
        SpatialMask full{1, 2, 2, {1, 1, 1, 1}};
        Tensor silent = class_spatial_sensitivity(zero, full);
        for (auto v : silent.values()) CHECK(v == 0.0);
    }
}

TEST_CASE("class_spatial_sensitivity: present classes sum to one") {
    StreamRng rng = StreamRng::stream(41, "suppress", 1);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor diff = random_tensor({2, 4, 5, 5}, rng, 0.05, 2.0);
        LabelMap labels = random_labels(2, 5, 5, 3, rng, 0.2);
        auto masks = class_partition_masks(labels, 3);
        auto parts = class_partition(diff, labels, 3);
        for (std::size_t k = 0; k < 3; ++k) {
            Tensor s = class_spatial_sensitivity(parts[k], masks[k]);
            for (std::int64_t b = 0; b < 2; ++b) {
                bool present = false;
                for (std::int64_t p = 0; p < 25; ++p)
                    present |= masks[k].on[static_cast<std::size_t>(b * 25 + p)] != 0;
                double sum = 0;
                for (std::int64_t p = 0; p < 25; ++p)
                    sum += s.values()[static_cast<std::size_t>(b * 25 + p)];
                if (present)
                    CHECK(std::abs(sum - 1.0) < 1e-9);
                else
                    CHECK(sum == 0.0);
            }
        }
    }
}

TEST_CASE("global_sensitivity: arithmetic oracles") {
    SUBCASE("zero input, identity conv") {
        std::vector<Tensor> maps{Tensor::zeros({1, 1, 2, 2}), Tensor::zeros({1, 1, 2, 2})};
        Tensor s = global_sensitivity(maps, kOne, kZero, false);
        for (auto v : s.values()) CHECK(v == 0.5);
    }
    SUBCASE("sum one through weight 2 bias -1") {
        std::vector<Tensor> maps{Tensor::full({1, 1, 1, 1}, 1.0)};
        Tensor s = global_sensitivity(maps, Tensor::scalar(2.0), Tensor::scalar(-1.0), false);
        CHECK(s.item() == doctest::Approx(0.7310585786300049).epsilon(1e-12));
    }
    SUBCASE("rescale multiplies by area over classes") {
        // two maps of shape [1,1,2,3]: (H*W)/K = 3; sum 0.4 -> sigmoid(1.2)
        std::vector<Tensor> maps{Tensor::full({1, 1, 2, 3}, 0.1), Tensor::full({1, 1, 2, 3}, 0.3)};
        Tensor s = global_sensitivity(maps, kOne, kZero, true);
        const double want = 1.0 / (1.0 + std::exp(-1.2));
        for (auto v : s.values()) CHECK(v == doctest::Approx(want).epsilon(1e-12));
    }
    SUBCASE("monotone in the accumulated sensitivity") {
        std::vector<Tensor> lo{Tensor::full({1, 1, 1, 1}, 0.2)};
        std::vector<Tensor> hi{Tensor::full({1, 1, 1, 1}, 0.9)};
        CHECK(global_sensitivity(hi, kOne, kZero, false).item() >
              global_sensitivity(lo, kOne, kZero, false).item());
    }
    SUBCASE("range is strictly (0,1)") {
        StreamRng rng = StreamRng::stream(41, "suppress", 2);
        std::vector<Tensor> maps{random_tensor({2, 1, 3, 3}, rng, -5.0, 5.0)};
        Tensor s = global_sensitivity(maps, Tensor::scalar(3.0), Tensor::scalar(-0.5), false);
        for (auto v : s.values()) {
            CHECK(v > 0.0);
            CHECK(v < 1.0);
        }
    }
}

TEST_CASE("non_sensitivity: exact complement") {
    Tensor s({1, 1, 1, 3}, {0.7, 0.5, 0.123});
    Tensor n = non_sensitivity(s);
    CHECK(n.values()[0] == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(n.values()[1] == 0.5);
    StreamRng rng = StreamRng::stream(41, "suppress", 3);
    std::vector<Tensor> maps{random_tensor({2, 1, 4, 4}, rng, -3.0, 3.0)};
    Tensor sg = global_sensitivity(maps, kOne, kZero, false);
    Tensor ng = non_sensitivity(sg);
    for (std::size_t i = 0; i < sg.values().size(); ++i)
        CHECK(sg.values()[i] + ng.values()[i] == 1.0);
}

TEST_CASE("refine_depth and fuse_rgbd: arithmetic forms") {
    Tensor z({1, 2, 1, 2}, {4.0, -1.0, 2.0, 0.5});
    SUBCASE("refine endpoints") {
        Tensor zero_map = Tensor::zeros({1, 1, 1, 2});
        Tensor same = refine_depth(z, zero_map);
        for (std::int64_t i = 0; i < 4; ++i)
            CHECK(same.values()[static_cast<std::size_t>(i)] ==
                  z.values()[static_cast<std::size_t>(i)]);
        Tensor ones_map = Tensor::full({1, 1, 1, 2}, 1.0);
        Tensor twice = refine_depth(z, ones_map);
        for (std::int64_t i = 0; i < 4; ++i)
            CHECK(twice.values()[static_cast<std::size_t>(i)] ==
                  2.0 * z.values()[static_cast<std::size_t>(i)]);
        Tensor quarter = refine_depth(z, Tensor::full({1, 1, 1, 2}, 0.25));
        CHECK(quarter.values()[0] == 5.0);
    }
    SUBCASE("fuse endpoints") {
        Tensor fine = Tensor::full({1, 2, 1, 2}, 1.0);
        Tensor rgb = Tensor::full({1, 2, 1, 2}, 3.0);
        Tensor both = fuse_rgbd(fine, rgb);
        for (auto v : both.values()) CHECK(v == 6.0);
        Tensor rgb_only = fuse_rgbd(Tensor::zeros({1, 2, 1, 2}), rgb);
        for (auto v : rgb_only.values()) CHECK(v == 3.0);
        Tensor dark = fuse_rgbd(fine, Tensor::zeros({1, 2, 1, 2}));
        for (auto v : dark.values()) CHECK(v == 0.0);
        CHECK_THROWS_AS(fuse_rgbd(fine, Tensor::zeros({1, 1, 1, 2})), ShapeError);
    }
    SUBCASE("algebraic equivalents on random data") {
        StreamRng rng = StreamRng::stream(41, "suppress", 4);
        Tensor zd = random_tensor({2, 3, 3, 3}, rng);
        Tensor ng = random_tensor({2, 1, 3, 3}, rng, 0.0, 1.0);
        Tensor rgb = random_tensor({2, 3, 3, 3}, rng);
        Tensor fine = refine_depth(zd, ng);
        Tensor want_fine = mul(zd, add_scalar(ng, 1.0));
        for (std::int64_t i = 0; i < zd.numel(); ++i)
            CHECK(std::abs(fine.values()[static_cast<std::size_t>(i)] -
                           want_fine.values()[static_cast<std::size_t>(i)]) < 1e-15);
        Tensor fused = fuse_rgbd(fine, rgb);
        Tensor want_fused = mul(rgb, add_scalar(fine, 1.0));
        for (std::int64_t i = 0; i < zd.numel(); ++i)
            CHECK(std::abs(fused.values()[static_cast<std::size_t>(i)] -
                           want_fused.values()[static_cast<std::size_t>(i)]) < 1e-14);
    }
}

TEST_CASE("identity chain: zero diff yields uniform bias-only sensitivity") {
    Tensor diff = Tensor::zeros({2, 3, 4, 4});
    LabelMap labels = LabelMap::filled(2, 4, 4, 1);
    labels.v[0] = 0;
    labels.v[5] = LabelMap::IGNORE;
    SensitivityBundle bundle =
        build_sensitivity(diff, labels, 2, Tensor::scalar(2.0), Tensor::scalar(0.3), true);
    for (const auto& map : bundle.per_class)
        for (auto v : map.values()) CHECK(v == 0.0);
    const double want = 1.0 / (1.0 + std::exp(-0.3));
    for (auto v : bundle.global.values()) CHECK(std::abs(v - want) < 1e-12);
    const double first = bundle.non_sensitive.values()[0];
    for (auto v : bundle.non_sensitive.values()) CHECK(std::abs(v - first) <= 1e-12);
    // refine then scales z_d by the uniform factor 1 + N_g
    Tensor z = Tensor::full({2, 3, 4, 4}, 1.5);
    Tensor fine = refine_depth(z, bundle.non_sensitive);
    for (auto v : fine.values()) CHECK(std::abs(v - 1.5 * (1.0 + first)) < 1e-12);
}

TEST_CASE("hard_mask: strict threshold semantics") {
    Tensor diff({1, 1, 1, 4}, {25.0, 10.0, 20.0, 20.0000001});
    HardMask m = hard_mask(diff, 20.0);
    CHECK(m.alpha == 20.0);
    CHECK(m.map.values()[0] == 1.0);
    CHECK(m.map.values()[1] == 0.0);
    CHECK(m.map.values()[2] == 0.0);
    CHECK(m.map.values()[3] == 1.0);
    for (auto v : m.map.values()) CHECK((v == 0.0 || v == 1.0));
    CHECK_THROWS_AS(hard_mask(diff, std::nan("")), ValidationError);
    CHECK_THROWS_AS(hard_mask(Tensor::zeros({1, 2, 1, 4}), 1.0), ShapeError);
}

TEST_CASE("hard_mask_items: one threshold per item") {
    Tensor diff({2, 1, 1, 2}, {1.0, 3.0, 1.0, 3.0});
    Tensor m = hard_mask_items(diff, {2.0, 0.5});
    CHECK(m.values()[0] == 0.0);
    CHECK(m.values()[1] == 1.0);
    CHECK(m.values()[2] == 1.0);
    CHECK(m.values()[3] == 1.0);
    CHECK_THROWS_AS(hard_mask_items(diff, {1.0}), ValidationError);
}

TEST_CASE("quantile: nearest-rank picks") {
    CHECK(quantile({4.0, 1.0, 3.0, 2.0}, 0.0) == 1.0);
    CHECK(quantile({4.0, 1.0, 3.0, 2.0}, 0.5) == 3.0);
    CHECK(quantile({4.0, 1.0, 3.0, 2.0}, 1.0) == 4.0);
    CHECK(quantile({4.0, 1.0, 3.0, 2.0}, 0.9) == 4.0);
    CHECK(quantile({7.0}, 0.3) == 7.0);
    CHECK_THROWS_AS(quantile({}, 0.5), ValidationError);
    CHECK_THROWS_AS(quantile({1.0}, 1.5), ValidationError);
}

TEST_CASE("channel_sensitivity_gcss: degenerate, uniform, and hand oracle") {
    SUBCASE("single channel is identity weight") {
        StreamRng rng = StreamRng::stream(41, "suppress", 5);
        Tensor diff = random_tensor({2, 1, 3, 3}, rng, 0.0, 5.0);
        Tensor w = channel_sensitivity_gcss(diff);
        CHECK(w.shape() == Shape{2, 1, 1, 1});
        for (auto v : w.values()) CHECK(v == 1.0);
    }
    SUBCASE("equal channel means weigh equally at one") {
        Tensor diff = Tensor::full({1, 4, 2, 2}, 0.7);
        Tensor w = channel_sensitivity_gcss(diff);
        for (auto v : w.values()) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("softmax oracle [0, ln 3]") {
        Tensor diff({1, 2, 1, 2}, {0.0, 0.0, std::log(3.0), std::log(3.0)});
        Tensor w = channel_sensitivity_gcss(diff);
        CHECK(w.values()[0] == doctest::Approx(1.5).epsilon(1e-12));
        CHECK(w.values()[1] == doctest::Approx(0.5).epsilon(1e-12));
    }
    SUBCASE("weights always average to one per item") {
        StreamRng rng = StreamRng::stream(41, "suppress", 6);
        for (int trial = 0; trial < 10; ++trial) {
            Tensor diff = random_tensor({2, 5, 3, 3}, rng, 0.0, 3.0);
            Tensor w = channel_sensitivity_gcss(diff);
            for (std::int64_t b = 0; b < 2; ++b) {
                double sum = 0;
                for (std::int64_t c = 0; c < 5; ++c) sum += w.at(b, c, 0, 0);
                CHECK(std::abs(sum / 5 - 1.0) < 1e-12);
            }
        }
    }
}

TEST_CASE("suppression chain is differentiable") {
    StreamRng rng = StreamRng::stream(41, "suppress", 7);
    Tensor zd0 = random_tensor({1, 2, 3, 3}, rng, 0.5, 1.5);
    Tensor styled = random_tensor({1, 2, 3, 3}, rng, -1.5, -0.5);
    Tensor rgb0 = random_tensor({1, 2, 3, 3}, rng);
    LabelMap labels = random_labels(1, 3, 3, 2, rng, 0.1);
    Tensor w0 = Tensor::scalar(1.2);
    Tensor b0 = Tensor::scalar(-0.3);

    auto run = [&](const Tensor& zd, const Tensor& rgb, const Tensor& w, const Tensor& b) {
        Tensor diff = feature_difference(zd, styled);
        SensitivityBundle bundle = build_sensitivity(diff, labels, 2, w, b, true);
        return sum_all(fuse_rgbd(refine_depth(zd, bundle.non_sensitive), rgb));
    };

    Tape tape;
    Tensor zd = tape.watch(zd0);
    Tensor rgb = tape.watch(rgb0);
    Tensor w = tape.watch(w0);
    Tensor b = tape.watch(b0);
    Gradients g = tape.backward(run(zd, rgb, w, b));

    auto compare = [&](const Tensor& analytic, const Tensor& at, int which) {
        Tensor num = finite_diff_grad(
            [&](const Tensor& t) {
                Tape t2;
                Tensor leaf = t2.watch(t);
                switch (which) {
                    case 0: return run(leaf, rgb0, w0, b0).item();
                    case 1: return run(zd0, leaf, w0, b0).item();
                    case 2: return run(zd0, rgb0, leaf, b0).item();
                    default: return run(zd0, rgb0, w0, leaf).item();
                }
            },
            at, 1e-6);
        for (std::int64_t i = 0; i < at.numel(); ++i) {
            const double a = analytic.values()[static_cast<std::size_t>(i)];
            const double n = num.values()[static_cast<std::size_t>(i)];
            CHECK(std::abs(a - n) <= 1e-7 + 1e-5 * std::max(std::abs(a), std::abs(n)));
        }
    };
    compare(g.at(zd), zd0, 0);
    compare(g.at(rgb), rgb0, 1);
    compare(g.at(w), w0, 2);
    compare(g.at(b), b0, 3);
}
