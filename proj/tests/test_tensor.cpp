#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>

#include "boxlift/rng.hpp"
#include "boxlift/tensor.hpp"

using namespace boxlift;

namespace {

// Independent six-nested-loop convolution reference.
template <typename T>
BasicFeatureMap<T> conv2d_naive(const BasicFeatureMap<T>& x, const BasicConvParams<T>& p) {
    const int pad = p.padding();
    const int out_rows = (x.rows + 2 * pad - p.kernel) / p.stride + 1;
    const int out_cols = (x.cols + 2 * pad - p.kernel) / p.stride + 1;
    BasicFeatureMap<T> out(out_rows, out_cols, p.out_channels);
    for (int ro = 0; ro < out_rows; ++ro)
        for (int co = 0; co < out_cols; ++co)
            for (int oc = 0; oc < p.out_channels; ++oc) {
                T acc = p.bias[oc];
                for (int ky = 0; ky < p.kernel; ++ky)
                    for (int kx = 0; kx < p.kernel; ++kx)
                        for (int ic = 0; ic < p.in_channels; ++ic) {
                            const int r = ro * p.stride - pad + ky;
                            const int c = co * p.stride - pad + kx;
                            if (r < 0 || r >= x.rows || c < 0 || c >= x.cols) continue;
                            acc += x.at(r, c, ic) * p.w(oc, ic, ky, kx);
                        }
                out.at(ro, co, oc) = acc;
            }
    return out;
}

FeatureMap random_map(int rows, int cols, int ch, SplitMix64& rng, double lo = -1.0, double hi = 1.0) {
    FeatureMap x(rows, cols, ch);
    for (float& v : x.data) v = static_cast<float>(rng.uniform(lo, hi));
    return x;
}

ConvParams random_conv(int in_ch, int out_ch, int k, int s, SplitMix64& rng) {
    ConvParams p(in_ch, out_ch, k, s);
    for (float& w : p.weight) w = static_cast<float>(rng.uniform(-1.0, 1.0));
    for (float& b : p.bias) b = static_cast<float>(rng.uniform(-0.5, 0.5));
    return p;
}

}  // namespace

TEST_CASE("conv2d stride-2 output dims use ceil division") {
    FeatureMap x(512, 192, 1);
    ConvParams p(1, 8, 3, 2);
    const FeatureMap y = conv2d(x, p);
    CHECK(y.rows == 256);
    CHECK(y.cols == 96);
    CHECK(y.channels == 8);

    FeatureMap odd(5, 7, 1);
    const FeatureMap y2 = conv2d(odd, ConvParams(1, 1, 3, 2));
    CHECK(y2.rows == 3);
    CHECK(y2.cols == 4);
}

TEST_CASE("conv2d identity kernel reproduces the input") {
    SplitMix64 rng(11);
    const FeatureMap x = random_map(6, 5, 3, rng);
    ConvParams p(3, 3, 3, 1);
    for (int ch = 0; ch < 3; ++ch) p.w(ch, ch, 1, 1) = 1.0f;  // center tap
    const FeatureMap y = conv2d(x, p);
    REQUIRE(y.same_shape(x));
    for (std::size_t i = 0; i < x.data.size(); ++i) CHECK(y.data[i] == x.data[i]);
}

TEST_CASE("conv2d matches the naive reference") {
    SplitMix64 rng(22);
    SUBCASE("5x5x2 example") {
        const FeatureMap x = random_map(5, 5, 2, rng);
        const ConvParams p = random_conv(2, 3, 3, 1, rng);
        const FeatureMap a = conv2d(x, p);
        const FeatureMap b = conv2d_naive(x, p);
        REQUIRE(a.same_shape(b));
        for (std::size_t i = 0; i < a.data.size(); ++i)
            CHECK(std::abs(a.data[i] - b.data[i]) <= 1e-6f);
    }
    SUBCASE("shapes up to 8x8x4, both kernels and strides") {
        for (int rows : {1, 3, 8})
            for (int cols : {1, 4, 8})
                for (int ch : {1, 4})
                    for (int k : {1, 3})
                        for (int s : {1, 2}) {
                            const FeatureMap x = random_map(rows, cols, ch, rng);
                            const ConvParams p = random_conv(ch, 3, k, s, rng);
                            const FeatureMap a = conv2d(x, p);
                            const FeatureMap b = conv2d_naive(x, p);
                            REQUIRE(a.same_shape(b));
                            for (std::size_t i = 0; i < a.data.size(); ++i)
                                CHECK(std::abs(a.data[i] - b.data[i]) <= 1e-6f);
                        }
    }
}

TEST_CASE("conv2d rejects channel mismatch") {
    FeatureMap x(4, 4, 2);
    ConvParams p(3, 1, 3, 1);
    CHECK_THROWS_AS(conv2d(x, p), ShapeError);
}

TEST_CASE("bn_affine follows the affine formula") {
    SUBCASE("identity statistics are identity up to epsilon") {
        SplitMix64 rng(3);
        const FeatureMap x = random_map(4, 4, 2, rng);
        const FeatureMap y = bn_affine(x, BnAffine::identity(2));
        for (std::size_t i = 0; i < x.data.size(); ++i)
            CHECK(std::abs(y.data[i] - x.data[i]) <= 1e-5f * (1.0f + std::abs(x.data[i])));
    }
    SUBCASE("scalar example") {
        // 2*(3-1)/sqrt((4-eps)+eps) + 1 = 3
        FeatureMap x(1, 1, 1);
        x.at(0, 0, 0) = 3.0f;
        BnAffine b;
        b.mean = {1.0f};
        b.var = {4.0f - 1e-5f};
        b.scale = {2.0f};
        b.shift = {1.0f};
        const FeatureMap y = bn_affine(x, b);
        CHECK(y.at(0, 0, 0) == doctest::Approx(3.0f).epsilon(1e-6));
    }
    SUBCASE("zero scale collapses to shift") {
        FeatureMap x(3, 3, 1, 7.5f);
        BnAffine b = BnAffine::identity(1);
        b.scale = {0.0f};
        b.shift = {0.25f};
        const FeatureMap y = bn_affine(x, b);
        for (const float v : y.data) CHECK(v == 0.25f);
    }
    SUBCASE("channel mismatch throws") {
        FeatureMap x(2, 2, 3);
        CHECK_THROWS_AS(bn_affine(x, BnAffine::identity(2)), ShapeError);
    }
}

TEST_CASE("silu values and asymptotes") {
    FeatureMap x(1, 1, 4);
    x.data = {0.0f, 1.0f, 40.0f, -40.0f};
    const FeatureMap y = silu(x);
    CHECK(y.data[0] == 0.0f);
    CHECK(y.data[1] == doctest::Approx(0.7310585786f).epsilon(1e-6));
    CHECK(y.data[2] == doctest::Approx(40.0f).epsilon(1e-6));
    CHECK(std::abs(y.data[3]) <= 1e-6f);
}

TEST_CASE("bilinear_upsample") {
    SplitMix64 rng(4);
    SUBCASE("factor 1 is identity") {
        const FeatureMap x = random_map(3, 5, 2, rng);
        const FeatureMap y = bilinear_upsample(x, 1);
        for (std::size_t i = 0; i < x.data.size(); ++i) CHECK(y.data[i] == x.data[i]);
    }
    SUBCASE("constant map stays constant") {
        for (int m : {2, 4}) {
            const FeatureMap y = bilinear_upsample(FeatureMap(3, 4, 1, 0.75f), m);
            CHECK(y.rows == 3 * m);
            CHECK(y.cols == 4 * m);
            for (const float v : y.data) CHECK(v == doctest::Approx(0.75f).epsilon(1e-7));
        }
    }
    SUBCASE("2x2 ramp, factor 2, hand-evaluated") {
        FeatureMap x(2, 2, 1);
        x.at(0, 0, 0) = 0.0f;
        x.at(0, 1, 0) = 1.0f;
        x.at(1, 0, 0) = 2.0f;
        x.at(1, 1, 0) = 3.0f;
        const FeatureMap y = bilinear_upsample(x, 2);
        const float expected[4][4] = {{0.0f, 0.25f, 0.75f, 1.0f},
                                      {0.5f, 0.75f, 1.25f, 1.5f},
                                      {1.5f, 1.75f, 2.25f, 2.5f},
                                      {2.0f, 2.25f, 2.75f, 3.0f}};
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c)
                CHECK(y.at(r, c, 0) == doctest::Approx(expected[r][c]).epsilon(1e-7));
    }
    SUBCASE("exact on affine ramps in the interior") {
        for (int m : {2, 4}) {
            FeatureMap x(6, 7, 1);
            for (int r = 0; r < 6; ++r)
                for (int c = 0; c < 7; ++c) x.at(r, c, 0) = 0.5f * r - 1.25f * c + 2.0f;
            const FeatureMap y = bilinear_upsample(x, m);
            // Interior: source coords strictly inside [0, rows-1] x [0, cols-1].
            for (int r = m; r < y.rows - m; ++r)
                for (int c = m; c < y.cols - m; ++c) {
                    const double sr = (r + 0.5) / m - 0.5;
                    const double sc = (c + 0.5) / m - 0.5;
                    const double want = 0.5 * sr - 1.25 * sc + 2.0;
                    CHECK(std::abs(y.at(r, c, 0) - want) <= 1e-5);
                }
        }
    }
    SUBCASE("unsupported factor") {
        CHECK_THROWS_AS(bilinear_upsample(FeatureMap(2, 2, 1), 3), ConfigError);
    }
}

TEST_CASE("adaptive_avg_pool") {
    SplitMix64 rng(5);
    SUBCASE("same size is identity") {
        const FeatureMap x = random_map(4, 6, 2, rng);
        const FeatureMap y = adaptive_avg_pool(x, 4, 6);
        for (std::size_t i = 0; i < x.data.size(); ++i) CHECK(y.data[i] == x.data[i]);
    }
    SUBCASE("global pool preserves the mean") {
        const FeatureMap x = random_map(8, 4, 1, rng);
        double mean = 0.0;
        for (const float v : x.data) mean += v;
        mean /= static_cast<double>(x.data.size());
        const FeatureMap y = adaptive_avg_pool(x, 1, 1);
        CHECK(y.at(0, 0, 0) == doctest::Approx(mean).epsilon(1e-5));
    }
    SUBCASE("4x4 checkerboard pooled to 2x2 is all 0.5") {
        FeatureMap x(4, 4, 1);
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c) x.at(r, c, 0) = static_cast<float>((r + c) % 2);
        const FeatureMap y = adaptive_avg_pool(x, 2, 2);
        for (const float v : y.data) CHECK(v == 0.5f);
    }
    SUBCASE("non-integer ratio throws") {
        CHECK_THROWS_AS(adaptive_avg_pool(FeatureMap(6, 6, 1), 4, 3), ConfigError);
        CHECK_THROWS_AS(adaptive_avg_pool(FeatureMap(4, 4, 1), 8, 4), ConfigError);
    }
}

TEST_CASE("max_pool_to") {
    SplitMix64 rng(6);
    SUBCASE("binary input stays binary, a lone 1 dominates its window") {
        FeatureMap x(4, 4, 1);
        x.at(1, 2, 0) = 1.0f;
        const FeatureMap y = max_pool_to(x, 2, 2);
        CHECK(y.at(0, 1, 0) == 1.0f);
        for (const float v : y.data) CHECK((v == 0.0f || v == 1.0f));
    }
    SUBCASE("random map matches the per-window scan") {
        const FeatureMap x = random_map(12, 8, 3, rng);
        const FeatureMap y = max_pool_to(x, 3, 4);
        for (int ro = 0; ro < 3; ++ro)
            for (int co = 0; co < 4; ++co)
                for (int ch = 0; ch < 3; ++ch) {
                    float best = -1e30f;
                    for (int r = ro * 4; r < ro * 4 + 4; ++r)
                        for (int c = co * 2; c < co * 2 + 2; ++c)
                            best = std::max(best, x.at(r, c, ch));
                    CHECK(y.at(ro, co, ch) == best);
                }
    }
}

TEST_CASE("dilate_binary") {
    SUBCASE("radius 0 is identity") {
        FeatureMap x(4, 4, 1);
        x.at(2, 2, 0) = 1.0f;
        const FeatureMap y = dilate_binary(x, 0);
        for (std::size_t i = 0; i < x.data.size(); ++i) CHECK(y.data[i] == x.data[i]);
    }
    SUBCASE("interior 1 with radius 2 becomes a 5x5 block") {
        FeatureMap x(7, 7, 1);
        x.at(3, 3, 0) = 1.0f;
        const FeatureMap y = dilate_binary(x, 2);
        int ones = 0;
        for (const float v : y.data) ones += v == 1.0f;
        CHECK(ones == 25);
        for (int r = 1; r <= 5; ++r)
            for (int c = 1; c <= 5; ++c) CHECK(y.at(r, c, 0) == 1.0f);
    }
    SUBCASE("corner 1 with radius 2 clips to 9 cells") {
        FeatureMap x(4, 4, 1);
        x.at(0, 0, 0) = 1.0f;
        const FeatureMap y = dilate_binary(x, 2);
        int ones = 0;
        for (const float v : y.data) ones += v == 1.0f;
        CHECK(ones == 9);
    }
    SUBCASE("composition: r1+r2 equals sequential dilation") {
        SplitMix64 rng(7);
        for (int r1 : {0, 1, 2})
            for (int r2 : {0, 1, 2}) {
                FeatureMap x(9, 11, 1);
                for (float& v : x.data) v = rng.uniform01() < 0.12 ? 1.0f : 0.0f;
                const FeatureMap a = dilate_binary(x, r1 + r2);
                const FeatureMap b = dilate_binary(dilate_binary(x, r1), r2);
                for (std::size_t i = 0; i < a.data.size(); ++i) CHECK(a.data[i] == b.data[i]);
            }
    }
    SUBCASE("random mask matches the neighborhood scan") {
        SplitMix64 rng(8);
        FeatureMap x(10, 6, 1);
        for (float& v : x.data) v = rng.uniform01() < 0.15 ? 1.0f : 0.0f;
        const FeatureMap y = dilate_binary(x, 2);
        for (int r = 0; r < 10; ++r)
            for (int c = 0; c < 6; ++c) {
                bool any = false;
                for (int rr = std::max(0, r - 2); rr <= std::min(9, r + 2); ++rr)
                    for (int cc = std::max(0, c - 2); cc <= std::min(5, c + 2); ++cc)
                        any = any || x.at(rr, cc, 0) != 0.0f;
                CHECK(y.at(r, c, 0) == (any ? 1.0f : 0.0f));
            }
    }
}

TEST_CASE("ops are pure: same inputs give bit-identical outputs") {
    SplitMix64 rng(9);
    const FeatureMap x = random_map(6, 6, 4, rng);
    const ConvParams p = random_conv(4, 4, 3, 1, rng);
    const FeatureMap a = conv2d(silu(x), p);
    const FeatureMap b = conv2d(silu(x), p);
    CHECK(a.data == b.data);
}

TEST_CASE("feature map dump/read round trip") {
    SplitMix64 rng(10);
    const FeatureMap x = random_map(3, 4, 2, rng);
    std::stringstream ss;
    dump_feature_map(ss, x);
    const FeatureMap y = read_feature_map(ss);
    REQUIRE(y.same_shape(x));
    CHECK(y.data == x.data);
}
