#include <doctest.h>

#include "oracles.hpp"
#include "vtunet/error.hpp"
#include "vtunet/metrics.hpp"

using namespace vtunet;

TEST_CASE("hand-counted half overlap gives DSC 0.5") {
    // Two 1x2x2 slabs sharing one row of 2 voxels: 2*2 / (4 + 4).
    BinaryMask p{{1, 3, 2}, {1, 1, 1, 1, 0, 0}};
    BinaryMask g{{1, 3, 2}, {0, 0, 1, 1, 1, 1}};
    CHECK(dsc(p, g) == 0.5);
    CHECK(dsc(p, p) == 1.0);
    BinaryMask empty{{1, 3, 2}, std::vector<std::uint8_t>(6, 0)};
    CHECK(dsc(empty, empty) == 1.0);
    CHECK(dsc(p, empty) == 0.0);
}

TEST_CASE("hand-counted HD95") {
    BinaryMask p{{1, 1, 8}, {1, 0, 0, 0, 0, 0, 0, 0}};
    BinaryMask g{{1, 1, 8}, {0, 0, 0, 1, 0, 0, 0, 0}};
    CHECK(hd95(p, g) == 3.0);
    CHECK(hd95(p, g, {1.0, 1.0, 0.5}) == 1.5);
    CHECK(hd95(p, p) == 0.0);
    BinaryMask empty{{1, 1, 8}, std::vector<std::uint8_t>(8, 0)};
    CHECK_THROWS_AS(hd95(p, empty), MetricError);
}

TEST_CASE("randomized suite against brute-force oracles") {
    Rng rng(51);
    double worst = 0.0;
    std::size_t cases = 0;
    while (cases < 200) {
        const Dims3 d{1 + rng.below(12), 1 + rng.below(12), 1 + rng.below(12)};
        const BinaryMask a{d, oracle::random_blob(d, rng)}, b{d, oracle::random_blob(d, rng)};
        const Spacing sp = cases % 3 == 0 ? Spacing{1.0, 1.0, 1.0}
                                          : Spacing{rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0)};
        REQUIRE(dsc(a, b) == oracle::dsc_count(a.voxels, b.voxels));
        const double h = hd95(a, b, sp);
        worst = std::max(worst, std::abs(h - oracle::brute_hd95(d, a.voxels, b.voxels, sp)));
        CHECK(hd95(b, a, sp) == doctest::Approx(h).epsilon(1e-12));
        ++cases;
    }
    CHECK(worst < 1e-9);
}

TEST_CASE("distance transform matches brute force") {
    Rng rng(52);
    const Dims3 d{5, 7, 6};
    std::vector<std::size_t> seeds;
    for (int i = 0; i < 4; ++i) seeds.push_back(rng.below(d.volume()));
    const Spacing sp{1.5, 0.7, 1.0};
    const auto dt = squared_distance_transform(d, seeds, sp);
    for (std::size_t i = 0; i < d.volume(); ++i) {
        double best = 1e300;
        for (auto s : seeds) {
            const double dz = (double(i / (d.h * d.w)) - double(s / (d.h * d.w))) * sp[0];
            const double dy = (double(i / d.w % d.h) - double(s / d.w % d.h)) * sp[1];
            const double dx = (double(i % d.w) - double(s % d.w)) * sp[2];
            best = std::min(best, dz * dz + dy * dy + dx * dx);
        }
        REQUIRE(std::abs(dt[i] - best) < 1e-12);
    }
}

TEST_CASE("region nesting on random label volumes") {
    Rng rng(53);
    for (int trial = 0; trial < 20; ++trial) {
        LabelVolume lv{{4, 5, 6}, std::vector<std::int32_t>(120)};
        for (auto& l : lv.labels) l = static_cast<std::int32_t>(rng.below(4));
        const RegionMasks r = compose_regions(lv);
        for (std::size_t i = 0; i < 120; ++i) {
            REQUIRE(r.et.voxels[i] <= r.tc.voxels[i]);
            REQUIRE(r.tc.voxels[i] <= r.wt.voxels[i]);
            CHECK(r.et.voxels[i] == (lv.labels[i] == 2));
            CHECK(r.tc.voxels[i] == (lv.labels[i] == 2 || lv.labels[i] == 3));
            CHECK(r.wt.voxels[i] == (lv.labels[i] != 0));
        }
    }
    LabelVolume bad{{1, 1, 2}, {0, 4}};
    CHECK_THROWS_AS(compose_regions(bad), MetricError);
}

TEST_CASE("region evaluation rows and undefined HD95") {
    LabelVolume gt{{1, 2, 4}, {0, 1, 1, 0, 0, 3, 2, 0}};
    LabelVolume pred{{1, 2, 4}, {0, 1, 1, 0, 0, 1, 1, 0}};
    const auto rows = evaluate_regions(pred, gt);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].region == "WT");
    CHECK(rows[0].dsc == 1.0);
    CHECK(rows[0].hd95 == 0.0);
    CHECK(rows[1].region == "ET");
    CHECK(rows[1].dsc == 0.0);
    CHECK_FALSE(rows[1].hd95_defined);
    CHECK_FALSE(rows[1].note.empty());
    const std::string csv = evaluation_csv("c1", rows);
    CHECK(csv.rfind("case,region,dsc,hd95,note\n", 0) == 0);
    CHECK(csv.find("c1,average,") != std::string::npos);
}

TEST_CASE("percentile interpolation") {
    CHECK(percentile_sorted({0.0, 10.0}, 0.95) == doctest::Approx(9.5));
    CHECK(percentile_sorted({4.0}, 0.95) == 4.0);
}
