#include "boxlift/loss.hpp"

#include <cmath>

#include "boxlift/error.hpp"

namespace boxlift {

namespace {

template <typename T>
void check_loss_shapes(const BasicFeatureMap<T>& fhat, const BasicFeatureMap<T>& fstar,
                       const BasicFeatureMap<T>& omega) {
    if (!fhat.same_shape(fstar)) throw ShapeError("cos_align: feature shapes differ");
    if (omega.rows != fhat.rows || omega.cols != fhat.cols || omega.channels != 1)
        throw ShapeError("cos_align: mask must be rows x cols x 1");
}

constexpr double kNormFloor = 1e-12;

}  // namespace

template <typename T>
T cos_align(const BasicFeatureMap<T>& fhat, const BasicFeatureMap<T>& fstar,
            const BasicFeatureMap<T>& omega) {
    check_loss_shapes(fhat, fstar, omega);
    const std::size_t cells = static_cast<std::size_t>(fhat.rows) * fhat.cols;
    const int ch_n = fhat.channels;
    double sum = 0.0, mask_sum = 0.0;
    for (std::size_t i = 0; i < cells; ++i) {
        const double wgt = static_cast<double>(omega.data[i]);
        if (wgt == 0.0) continue;
        mask_sum += wgt;
        const T* a = fhat.data.data() + i * ch_n;
        const T* b = fstar.data.data() + i * ch_n;
        double dot = 0.0, na2 = 0.0, nb2 = 0.0;
        for (int ch = 0; ch < ch_n; ++ch) {
            dot += static_cast<double>(a[ch]) * b[ch];
            na2 += static_cast<double>(a[ch]) * a[ch];
            nb2 += static_cast<double>(b[ch]) * b[ch];
        }
        const double na = std::sqrt(na2), nb = std::sqrt(nb2);
        const double cosv = (na < kNormFloor || nb < kNormFloor) ? 0.0 : dot / (na * nb);
        sum += wgt * (1.0 - cosv);
    }
    return static_cast<T>(sum / std::max(1.0, mask_sum));
}

double align_loss_agent(const FeatureMap& fhat, const FeatureMap& fstar,
                        const RegionMasks& masks, const LossWeights& w) {
    return w.obj * static_cast<double>(cos_align(fhat, fstar, masks.obj)) +
           w.bg * static_cast<double>(cos_align(fhat, fstar, masks.bg));
}

double total_loss(double det_loss, const std::vector<double>& per_agent_align,
                  const LossWeights& w) {
    double mean = 0.0;
    if (!per_agent_align.empty()) {
        for (const double a : per_agent_align) mean += a;
        mean /= static_cast<double>(per_agent_align.size());
    }
    return w.det * det_loss + w.align * mean;
}

template <typename T>
CosAlignGrad<T> grad_cos_align(const BasicFeatureMap<T>& fhat, const BasicFeatureMap<T>& fstar,
                               const BasicFeatureMap<T>& omega) {
    check_loss_shapes(fhat, fstar, omega);
    const std::size_t cells = static_cast<std::size_t>(fhat.rows) * fhat.cols;
    const int ch_n = fhat.channels;
    double mask_sum = 0.0;
    for (std::size_t i = 0; i < cells; ++i) mask_sum += static_cast<double>(omega.data[i]);
    const double norm = 1.0 / std::max(1.0, mask_sum);

    CosAlignGrad<T> out;
    out.grad = BasicFeatureMap<T>(fhat.rows, fhat.cols, ch_n);
    for (std::size_t i = 0; i < cells; ++i) {
        const double wgt = static_cast<double>(omega.data[i]);
        if (wgt == 0.0) continue;
        const T* a = fhat.data.data() + i * ch_n;
        const T* b = fstar.data.data() + i * ch_n;
        double dot = 0.0, na2 = 0.0, nb2 = 0.0;
        for (int ch = 0; ch < ch_n; ++ch) {
            dot += static_cast<double>(a[ch]) * b[ch];
            na2 += static_cast<double>(a[ch]) * a[ch];
            nb2 += static_cast<double>(b[ch]) * b[ch];
        }
        const double na = std::sqrt(na2), nb = std::sqrt(nb2);
        if (na < kNormFloor || nb < kNormFloor) {
            ++out.degenerate_cells;  // cos pinned to 0 there, no usable direction
            continue;
        }
        const double cosv = dot / (na * nb);
        T* g = out.grad.data.data() + i * ch_n;
        const double scale = wgt * norm;
        // d(1 - cos)/da = cos * a / |a|^2 - b / (|a| |b|)
        for (int ch = 0; ch < ch_n; ++ch)
            g[ch] = static_cast<T>(scale * (cosv * a[ch] / na2 - b[ch] / (na * nb)));
    }
    return out;
}

template float cos_align(const BasicFeatureMap<float>&, const BasicFeatureMap<float>&,
                         const BasicFeatureMap<float>&);
template double cos_align(const BasicFeatureMap<double>&, const BasicFeatureMap<double>&,
                          const BasicFeatureMap<double>&);
template CosAlignGrad<float> grad_cos_align(const BasicFeatureMap<float>&,
                                            const BasicFeatureMap<float>&,
                                            const BasicFeatureMap<float>&);
template CosAlignGrad<double> grad_cos_align(const BasicFeatureMap<double>&,
                                             const BasicFeatureMap<double>&,
                                             const BasicFeatureMap<double>&);

}  // namespace boxlift
