#pragma once

#include <cstddef>
#include <iosfwd>
#include <vector>

#include "boxlift/error.hpp"

namespace boxlift {

/// Dense rank-3 grid, row-major and channel-fastest:
/// data[(r * cols + c) * channels + ch]. rows index the x axis of the BEV
/// plane, cols the y axis. float is the working element type; double is used
/// by the gradient-check paths.
template <typename T>
struct BasicFeatureMap {
    int rows = 0;
    int cols = 0;
    int channels = 0;
    std::vector<T> data;

    BasicFeatureMap() = default;
    BasicFeatureMap(int r, int c, int ch, T fill = T(0))
        : rows(r), cols(c), channels(ch),
          data(static_cast<std::size_t>(r) * c * ch, fill) {}

    T& at(int r, int c, int ch) {
        return data[(static_cast<std::size_t>(r) * cols + c) * channels + ch];
    }
    T at(int r, int c, int ch) const {
        return data[(static_cast<std::size_t>(r) * cols + c) * channels + ch];
    }
    const T* row_ptr(int r, int c) const {
        return data.data() + (static_cast<std::size_t>(r) * cols + c) * channels;
    }
    T* row_ptr(int r, int c) {
        return data.data() + (static_cast<std::size_t>(r) * cols + c) * channels;
    }

    std::size_t size() const { return data.size(); }
    bool same_shape(const BasicFeatureMap& o) const {
        return rows == o.rows && cols == o.cols && channels == o.channels;
    }
    bool all_finite() const;
};

using FeatureMap = BasicFeatureMap<float>;
using FeatureMap64 = BasicFeatureMap<double>;

/// 3x3 or 1x1 convolution weights. Storage is [out][ky][kx][in] so the
/// in-channel dot product runs over contiguous memory.
template <typename T>
struct BasicConvParams {
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 3;  // 3 or 1
    int stride = 1;  // 1 or 2
    std::vector<T> weight;  // out*kernel*kernel*in
    std::vector<T> bias;    // out

    BasicConvParams() = default;
    BasicConvParams(int in_ch, int out_ch, int k, int s)
        : in_channels(in_ch), out_channels(out_ch), kernel(k), stride(s),
          weight(static_cast<std::size_t>(out_ch) * k * k * in_ch, T(0)),
          bias(out_ch, T(0)) {}

    int padding() const { return kernel == 3 ? 1 : 0; }

    T& w(int oc, int ic, int ky, int kx) {
        return weight[((static_cast<std::size_t>(oc) * kernel + ky) * kernel + kx) * in_channels + ic];
    }
    T w(int oc, int ic, int ky, int kx) const {
        return weight[((static_cast<std::size_t>(oc) * kernel + ky) * kernel + kx) * in_channels + ic];
    }
    void validate() const;
};

using ConvParams = BasicConvParams<float>;

/// Inference-mode batch norm: per-channel affine with stored statistics.
template <typename T>
struct BasicBnAffine {
    std::vector<T> mean, var, scale, shift;
    T epsilon = T(1e-5);

    static BasicBnAffine identity(int channels) {
        BasicBnAffine b;
        b.mean.assign(channels, T(0));
        b.var.assign(channels, T(1));
        b.scale.assign(channels, T(1));
        b.shift.assign(channels, T(0));
        return b;
    }
    int channels() const { return static_cast<int>(mean.size()); }
};

using BnAffine = BasicBnAffine<float>;

/// Zero-padded 2D convolution. Stride 1 preserves the spatial dims (kernel 3,
/// padding 1); stride 2 yields ceil(rows/2) x ceil(cols/2).
template <typename T>
BasicFeatureMap<T> conv2d(const BasicFeatureMap<T>& x, const BasicConvParams<T>& p);

/// y = scale * (x - mean) / sqrt(var + eps) + shift, per channel.
template <typename T>
BasicFeatureMap<T> bn_affine(const BasicFeatureMap<T>& x, const BasicBnAffine<T>& b);

/// y = x * sigmoid(x).
template <typename T>
BasicFeatureMap<T> silu(const BasicFeatureMap<T>& x);

/// Bilinear upsampling by an integer factor in {1, 2, 4}. Sample centers use
/// the half-pixel convention: source coord of output i is (i + 0.5)/m - 0.5
/// (align-corners disabled).
template <typename T>
BasicFeatureMap<T> bilinear_upsample(const BasicFeatureMap<T>& x, int factor);

/// Average pooling with non-overlapping windows; output dims must divide the
/// input dims evenly.
template <typename T>
BasicFeatureMap<T> adaptive_avg_pool(const BasicFeatureMap<T>& x, int out_rows, int out_cols);

/// Max pooling with the same window contract as adaptive_avg_pool.
template <typename T>
BasicFeatureMap<T> max_pool_to(const BasicFeatureMap<T>& x, int out_rows, int out_cols);

/// Binary morphological dilation with a (2r+1)x(2r+1) square kernel
/// (Chebyshev radius r), clipped at the borders.
template <typename T>
BasicFeatureMap<T> dilate_binary(const BasicFeatureMap<T>& mask, int radius);

template <typename U, typename T>
BasicFeatureMap<U> convert_map(const BasicFeatureMap<T>& x) {
    BasicFeatureMap<U> out(x.rows, x.cols, x.channels);
    for (std::size_t i = 0; i < x.data.size(); ++i) out.data[i] = static_cast<U>(x.data[i]);
    return out;
}

/// Text dump: header "rows cols channels", then one scalar per line in
/// storage order. %.9g keeps float values exact through a round trip.
void dump_feature_map(std::ostream& os, const FeatureMap& x);
FeatureMap read_feature_map(std::istream& is);

}  // namespace boxlift
