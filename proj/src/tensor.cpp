#include "boxlift/tensor.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <string>

namespace boxlift {

template <typename T>
bool BasicFeatureMap<T>::all_finite() const {
    for (const T v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

template <typename T>
void BasicConvParams<T>::validate() const {
    if (kernel != 1 && kernel != 3) throw ConfigError("conv kernel must be 1 or 3");
    if (stride != 1 && stride != 2) throw ConfigError("conv stride must be 1 or 2");
    if (weight.size() != static_cast<std::size_t>(out_channels) * kernel * kernel * in_channels ||
        bias.size() != static_cast<std::size_t>(out_channels))
        throw ShapeError("conv weight/bias size inconsistent with declared channels");
}

template <typename T>
BasicFeatureMap<T> conv2d(const BasicFeatureMap<T>& x, const BasicConvParams<T>& p) {
    p.validate();
    if (x.channels != p.in_channels)
        throw ShapeError("conv2d: input has " + std::to_string(x.channels) +
                         " channels, kernel expects " + std::to_string(p.in_channels));
    const int pad = p.padding();
    const int out_rows = (x.rows + 2 * pad - p.kernel) / p.stride + 1;
    const int out_cols = (x.cols + 2 * pad - p.kernel) / p.stride + 1;
    BasicFeatureMap<T> out(out_rows, out_cols, p.out_channels);

    const int k = p.kernel;
    const int ic_n = p.in_channels;
    const int oc_n = p.out_channels;

    // Repack weights [oc][ky][kx][ic] -> [ky][kx][ic][oc] so the hot loop is
    // an elementwise FMA over contiguous out-channels (vectorizes without
    // reassociating any sum, keeping results bit-reproducible).
    std::vector<T> wt(p.weight.size());
    for (int oc = 0; oc < oc_n; ++oc)
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx)
                for (int ic = 0; ic < ic_n; ++ic)
                    wt[((static_cast<std::size_t>(ky) * k + kx) * ic_n + ic) * oc_n + oc] =
                        p.w(oc, ic, ky, kx);

    // Column tiling keeps the accumulator block and the current weight row in
    // cache while the full weight tensor streams once per tile.
    constexpr int kTile = 16;
    std::vector<T> acc(static_cast<std::size_t>(kTile) * oc_n);
    for (int ro = 0; ro < out_rows; ++ro) {
        const int r0 = ro * p.stride - pad;
        for (int co0 = 0; co0 < out_cols; co0 += kTile) {
            const int tiles = std::min(kTile, out_cols - co0);
            for (int t = 0; t < tiles; ++t)
                for (int oc = 0; oc < oc_n; ++oc) acc[t * oc_n + oc] = p.bias[oc];
            for (int ky = 0; ky < k; ++ky) {
                const int r = r0 + ky;
                if (r < 0 || r >= x.rows) continue;  // zero padding
                for (int kx = 0; kx < k; ++kx) {
                    const T* wk = wt.data() + (static_cast<std::size_t>(ky) * k + kx) * ic_n * oc_n;
                    for (int ic = 0; ic < ic_n; ++ic) {
                        const T* wrow = wk + static_cast<std::size_t>(ic) * oc_n;
                        for (int t = 0; t < tiles; ++t) {
                            const int c = (co0 + t) * p.stride - pad + kx;
                            if (c < 0 || c >= x.cols) continue;
                            const T v = x.at(r, c, ic);
                            if (v == T(0)) continue;  // pseudo-BEV inputs are mostly zero
                            T* arow = acc.data() + static_cast<std::size_t>(t) * oc_n;
                            for (int oc = 0; oc < oc_n; ++oc) arow[oc] += v * wrow[oc];
                        }
                    }
                }
            }
            for (int t = 0; t < tiles; ++t) {
                T* dst = out.row_ptr(ro, co0 + t);
                for (int oc = 0; oc < oc_n; ++oc) dst[oc] = acc[t * oc_n + oc];
            }
        }
    }
    return out;
}

template <typename T>
BasicFeatureMap<T> bn_affine(const BasicFeatureMap<T>& x, const BasicBnAffine<T>& b) {
    if (b.channels() != x.channels || b.var.size() != b.mean.size() ||
        b.scale.size() != b.mean.size() || b.shift.size() != b.mean.size())
        throw ShapeError("bn_affine: channel count mismatch");
    std::vector<T> mul(x.channels), add(x.channels);
    for (int ch = 0; ch < x.channels; ++ch) {
        if (b.var[ch] < T(0)) throw ConfigError("bn_affine: negative variance");
        mul[ch] = b.scale[ch] / std::sqrt(b.var[ch] + b.epsilon);
        add[ch] = b.shift[ch] - b.mean[ch] * mul[ch];
    }
    BasicFeatureMap<T> out(x.rows, x.cols, x.channels);
    const std::size_t cells = static_cast<std::size_t>(x.rows) * x.cols;
    for (std::size_t i = 0; i < cells; ++i) {
        const T* src = x.data.data() + i * x.channels;
        T* dst = out.data.data() + i * x.channels;
        for (int ch = 0; ch < x.channels; ++ch) dst[ch] = src[ch] * mul[ch] + add[ch];
    }
    return out;
}

template <typename T>
BasicFeatureMap<T> silu(const BasicFeatureMap<T>& x) {
    BasicFeatureMap<T> out(x.rows, x.cols, x.channels);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const T v = x.data[i];
        out.data[i] = v / (T(1) + std::exp(-v));
    }
    return out;
}

template <typename T>
BasicFeatureMap<T> bilinear_upsample(const BasicFeatureMap<T>& x, int factor) {
    if (factor != 1 && factor != 2 && factor != 4)
        throw ConfigError("bilinear_upsample: factor must be 1, 2 or 4");
    if (factor == 1) return x;
    const int out_rows = x.rows * factor;
    const int out_cols = x.cols * factor;
    BasicFeatureMap<T> out(out_rows, out_cols, x.channels);
    const double inv = 1.0 / factor;
    for (int ro = 0; ro < out_rows; ++ro) {
        const double sr = (ro + 0.5) * inv - 0.5;
        int r0 = static_cast<int>(std::floor(sr));
        double fr = sr - r0;
        int r1 = r0 + 1;
        if (r0 < 0) { r0 = 0; r1 = 0; fr = 0.0; }
        if (r1 >= x.rows) { r1 = x.rows - 1; if (r0 >= x.rows) { r0 = x.rows - 1; fr = 0.0; } }
        for (int co = 0; co < out_cols; ++co) {
            const double sc = (co + 0.5) * inv - 0.5;
            int c0 = static_cast<int>(std::floor(sc));
            double fc = sc - c0;
            int c1 = c0 + 1;
            if (c0 < 0) { c0 = 0; c1 = 0; fc = 0.0; }
            if (c1 >= x.cols) { c1 = x.cols - 1; if (c0 >= x.cols) { c0 = x.cols - 1; fc = 0.0; } }
            const T* p00 = x.row_ptr(r0, c0);
            const T* p01 = x.row_ptr(r0, c1);
            const T* p10 = x.row_ptr(r1, c0);
            const T* p11 = x.row_ptr(r1, c1);
            T* dst = out.row_ptr(ro, co);
            const double w00 = (1.0 - fr) * (1.0 - fc), w01 = (1.0 - fr) * fc;
            const double w10 = fr * (1.0 - fc), w11 = fr * fc;
            for (int ch = 0; ch < x.channels; ++ch)
                dst[ch] = static_cast<T>(w00 * p00[ch] + w01 * p01[ch] + w10 * p10[ch] + w11 * p11[ch]);
        }
    }
    return out;
}

namespace {

void check_pool_dims(int in_rows, int in_cols, int out_rows, int out_cols) {
    if (out_rows <= 0 || out_cols <= 0 || out_rows > in_rows || out_cols > in_cols ||
        in_rows % out_rows != 0 || in_cols % out_cols != 0)
        throw ConfigError("pool: output dims must divide input dims evenly (" +
                          std::to_string(in_rows) + "x" + std::to_string(in_cols) + " -> " +
                          std::to_string(out_rows) + "x" + std::to_string(out_cols) + ")");
}

}  // namespace

template <typename T>
BasicFeatureMap<T> adaptive_avg_pool(const BasicFeatureMap<T>& x, int out_rows, int out_cols) {
    check_pool_dims(x.rows, x.cols, out_rows, out_cols);
    const int wr = x.rows / out_rows, wc = x.cols / out_cols;
    const T norm = T(1) / static_cast<T>(wr * wc);
    BasicFeatureMap<T> out(out_rows, out_cols, x.channels);
    for (int ro = 0; ro < out_rows; ++ro)
        for (int co = 0; co < out_cols; ++co) {
            T* dst = out.row_ptr(ro, co);
            for (int r = ro * wr; r < (ro + 1) * wr; ++r)
                for (int c = co * wc; c < (co + 1) * wc; ++c) {
                    const T* src = x.row_ptr(r, c);
                    for (int ch = 0; ch < x.channels; ++ch) dst[ch] += src[ch];
                }
            for (int ch = 0; ch < x.channels; ++ch) dst[ch] *= norm;
        }
    return out;
}

template <typename T>
BasicFeatureMap<T> max_pool_to(const BasicFeatureMap<T>& x, int out_rows, int out_cols) {
    check_pool_dims(x.rows, x.cols, out_rows, out_cols);
    const int wr = x.rows / out_rows, wc = x.cols / out_cols;
    BasicFeatureMap<T> out(out_rows, out_cols, x.channels, std::numeric_limits<T>::lowest());
    for (int ro = 0; ro < out_rows; ++ro)
        for (int co = 0; co < out_cols; ++co) {
            T* dst = out.row_ptr(ro, co);
            for (int r = ro * wr; r < (ro + 1) * wr; ++r)
                for (int c = co * wc; c < (co + 1) * wc; ++c) {
                    const T* src = x.row_ptr(r, c);
                    for (int ch = 0; ch < x.channels; ++ch)
                        if (src[ch] > dst[ch]) dst[ch] = src[ch];
                }
        }
    return out;
}

template <typename T>
BasicFeatureMap<T> dilate_binary(const BasicFeatureMap<T>& mask, int radius) {
    if (radius < 0) throw ConfigError("dilate_binary: negative radius");
    if (radius == 0) return mask;
    BasicFeatureMap<T> out(mask.rows, mask.cols, mask.channels);
    for (int r = 0; r < mask.rows; ++r)
        for (int c = 0; c < mask.cols; ++c)
            for (int ch = 0; ch < mask.channels; ++ch) {
                if (mask.at(r, c, ch) == T(0)) continue;
                const int r_lo = std::max(0, r - radius), r_hi = std::min(mask.rows - 1, r + radius);
                const int c_lo = std::max(0, c - radius), c_hi = std::min(mask.cols - 1, c + radius);
                for (int rr = r_lo; rr <= r_hi; ++rr)
                    for (int cc = c_lo; cc <= c_hi; ++cc) out.at(rr, cc, ch) = T(1);
            }
    return out;
}

void dump_feature_map(std::ostream& os, const FeatureMap& x) {
    os << x.rows << ' ' << x.cols << ' ' << x.channels << '\n';
    char buf[32];
    for (const float v : x.data) {
        std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(v));
        os << buf << '\n';
    }
}

FeatureMap read_feature_map(std::istream& is) {
    int rows = 0, cols = 0, channels = 0;
    if (!(is >> rows >> cols >> channels) || rows < 0 || cols < 0 || channels < 0)
        throw ParseError("bad feature map header", 1);
    FeatureMap x(rows, cols, channels);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        double v;
        if (!(is >> v)) throw ParseError("truncated feature map body", static_cast<int>(i) + 2);
        x.data[i] = static_cast<float>(v);
    }
    return x;
}

template struct BasicFeatureMap<float>;
template struct BasicFeatureMap<double>;
template struct BasicConvParams<float>;
template struct BasicConvParams<double>;

template BasicFeatureMap<float> conv2d(const BasicFeatureMap<float>&, const BasicConvParams<float>&);
template BasicFeatureMap<double> conv2d(const BasicFeatureMap<double>&, const BasicConvParams<double>&);
template BasicFeatureMap<float> bn_affine(const BasicFeatureMap<float>&, const BasicBnAffine<float>&);
template BasicFeatureMap<double> bn_affine(const BasicFeatureMap<double>&, const BasicBnAffine<double>&);
template BasicFeatureMap<float> silu(const BasicFeatureMap<float>&);
template BasicFeatureMap<double> silu(const BasicFeatureMap<double>&);
template BasicFeatureMap<float> bilinear_upsample(const BasicFeatureMap<float>&, int);
template BasicFeatureMap<double> bilinear_upsample(const BasicFeatureMap<double>&, int);
template BasicFeatureMap<float> adaptive_avg_pool(const BasicFeatureMap<float>&, int, int);
template BasicFeatureMap<double> adaptive_avg_pool(const BasicFeatureMap<double>&, int, int);
template BasicFeatureMap<float> max_pool_to(const BasicFeatureMap<float>&, int, int);
template BasicFeatureMap<double> max_pool_to(const BasicFeatureMap<double>&, int, int);
template BasicFeatureMap<float> dilate_binary(const BasicFeatureMap<float>&, int);
template BasicFeatureMap<double> dilate_binary(const BasicFeatureMap<double>&, int);

}  // namespace boxlift
