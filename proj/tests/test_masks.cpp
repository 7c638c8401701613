#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>

#include "boxlift/error.hpp"
#include "boxlift/masks.hpp"
#include "boxlift/rng.hpp"

using namespace boxlift;

namespace {

PseudoBev make_pbev(int rows, int cols) {
    PseudoBev p;
    p.grid = {0.0, rows * 1.0, 0.0, cols * 1.0, 1.0, 1.0};
    p.map = FeatureMap(rows, cols, 1);
    return p;
}

// Step-by-step reference: window max, strict threshold, neighborhood-scan
// dilation, complement.
RegionMasks build_masks_brute(const PseudoBev& x, int out_rows, int out_cols, float tau, int dr) {
    const int wr = x.map.rows / out_rows, wc = x.map.cols / out_cols;
    FeatureMap fg(out_rows, out_cols, 1);
    for (int r = 0; r < out_rows; ++r)
        for (int c = 0; c < out_cols; ++c) {
            float best = -1e30f;
            for (int rr = r * wr; rr < (r + 1) * wr; ++rr)
                for (int cc = c * wc; cc < (c + 1) * wc; ++cc)
                    best = std::max(best, x.map.at(rr, cc, 0));
            fg.at(r, c, 0) = best > tau ? 1.0f : 0.0f;
        }
    RegionMasks m;
    m.obj = FeatureMap(out_rows, out_cols, 1);
    for (int r = 0; r < out_rows; ++r)
        for (int c = 0; c < out_cols; ++c) {
            bool any = false;
            for (int rr = std::max(0, r - dr); rr <= std::min(out_rows - 1, r + dr); ++rr)
                for (int cc = std::max(0, c - dr); cc <= std::min(out_cols - 1, c + dr); ++cc)
                    any = any || fg.at(rr, cc, 0) != 0.0f;
            m.obj.at(r, c, 0) = any ? 1.0f : 0.0f;
        }
    m.bg = FeatureMap(out_rows, out_cols, 1);
    for (std::size_t i = 0; i < m.obj.data.size(); ++i) m.bg.data[i] = 1.0f - m.obj.data[i];
    return m;
}

}  // namespace

TEST_CASE("all-zero map gives empty object mask and full background") {
    const PseudoBev p = make_pbev(16, 12);
    const RegionMasks m = build_masks(p, 4, 3);
    for (const float v : m.obj.data) CHECK(v == 0.0f);
    for (const float v : m.bg.data) CHECK(v == 1.0f);
}

TEST_CASE("single occupied fine cell dilates to a 5x5 block at the defaults") {
    PseudoBev p = make_pbev(32, 32);
    p.map.at(17, 18, 0) = 0.4f;  // one fine cell -> coarse cell (4, 4) at 4x window
    const RegionMasks m = build_masks(p, 8, 8, 0.0f, 2);
    int ones = 0;
    for (const float v : m.obj.data) ones += v == 1.0f;
    CHECK(ones == 25);
    for (int r = 2; r <= 6; ++r)
        for (int c = 2; c <= 6; ++c) CHECK(m.obj.at(r, c, 0) == 1.0f);
}

TEST_CASE("border foreground clips the dilated block") {
    PseudoBev p = make_pbev(8, 8);
    p.map.at(0, 0, 0) = 1.0f;
    const RegionMasks m = build_masks(p, 8, 8, 0.0f, 2);
    int ones = 0;
    for (const float v : m.obj.data) ones += v == 1.0f;
    CHECK(ones == 9);
}

TEST_CASE("random maps match the composed brute-force oracle exactly") {
    SplitMix64 rng(13);
    for (int trial = 0; trial < 40; ++trial) {
        PseudoBev p = make_pbev(24, 16);
        for (float& v : p.map.data)
            v = rng.uniform01() < 0.08 ? static_cast<float>(rng.uniform(0.1, 1.0)) : 0.0f;
        const RegionMasks a = build_masks(p, 6, 4, 0.0f, 2);
        const RegionMasks b = build_masks_brute(p, 6, 4, 0.0f, 2);
        CHECK(a.obj.data == b.obj.data);
        CHECK(a.bg.data == b.bg.data);
    }
}

TEST_CASE("obj and bg are exact complements") {
    SplitMix64 rng(14);
    PseudoBev p = make_pbev(16, 16);
    for (float& v : p.map.data) v = rng.uniform01() < 0.2 ? 1.0f : 0.0f;
    const RegionMasks m = build_masks(p, 8, 8);
    for (std::size_t i = 0; i < m.obj.data.size(); ++i) {
        CHECK(m.obj.data[i] + m.bg.data[i] == 1.0f);
        CHECK(m.obj.data[i] * m.bg.data[i] == 0.0f);
        CHECK((m.obj.data[i] == 0.0f || m.obj.data[i] == 1.0f));
    }
}

TEST_CASE("raising a cell value never shrinks the object mask") {
    SplitMix64 rng(15);
    PseudoBev p = make_pbev(16, 16);
    for (float& v : p.map.data) v = rng.uniform01() < 0.1 ? 0.5f : 0.0f;
    const RegionMasks before = build_masks(p, 8, 8);
    p.map.at(9, 9, 0) = 0.9f;
    const RegionMasks after = build_masks(p, 8, 8);
    for (std::size_t i = 0; i < before.obj.data.size(); ++i)
        CHECK(after.obj.data[i] >= before.obj.data[i]);
}

TEST_CASE("with no dilation the object mask equals the foreground mask") {
    SplitMix64 rng(16);
    PseudoBev p = make_pbev(12, 12);
    for (float& v : p.map.data) v = rng.uniform01() < 0.15 ? 1.0f : 0.0f;
    const RegionMasks m = build_masks(p, 6, 6, 0.0f, 0);
    const FeatureMap pooled = max_pool_to(p.map, 6, 6);
    for (std::size_t i = 0; i < m.obj.data.size(); ++i)
        CHECK(m.obj.data[i] == (pooled.data[i] > 0.0f ? 1.0f : 0.0f));
}

TEST_CASE("threshold is strict: cells holding exactly tau are background") {
    PseudoBev p = make_pbev(4, 4);
    p.map.at(0, 0, 0) = 0.25f;
    const RegionMasks at_tau = build_masks(p, 4, 4, 0.25f, 0);
    for (const float v : at_tau.obj.data) CHECK(v == 0.0f);
    const RegionMasks below_tau = build_masks(p, 4, 4, 0.2499f, 0);
    CHECK(below_tau.obj.at(0, 0, 0) == 1.0f);
}

TEST_CASE("non-divisible pooling ratio is a config error") {
    const PseudoBev p = make_pbev(10, 10);
    CHECK_THROWS_AS(build_masks(p, 3, 5), ConfigError);
}
