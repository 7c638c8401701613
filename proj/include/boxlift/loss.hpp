#pragma once

#include <vector>

#include "boxlift/masks.hpp"
#include "boxlift/tensor.hpp"

namespace boxlift {

/// Objective weights. Defaults follow the published setting: cls 1.0,
/// reg 2.0, obj 1.0, bg 0.5, det 1.0, align 1.0.
struct LossWeights {
    double det = 1.0;
    double align = 1.0;
    double obj = 1.0;
    double bg = 0.5;
    double cls = 1.0;
    double reg = 2.0;
};

/// Region-weighted cosine alignment:
///   sum over masked cells of (1 - cos(fhat(u,v), fstar(u,v))) / max(1, |omega|_1)
/// where the cosine runs over the channel vectors. A cell whose vector norm
/// falls below 1e-12 scores cos = 0 (full penalty of 1). Range [0, 2].
template <typename T>
T cos_align(const BasicFeatureMap<T>& fhat, const BasicFeatureMap<T>& fstar,
            const BasicFeatureMap<T>& omega);

/// obj-weighted + bg-weighted cosine terms for one agent.
double align_loss_agent(const FeatureMap& fhat, const FeatureMap& fstar,
                        const RegionMasks& masks, const LossWeights& w);

/// det weight * detector loss + align weight * mean of the per-agent terms.
/// The detector loss is an externally supplied scalar (the frozen detector's
/// objective); an empty agent list contributes 0.
double total_loss(double det_loss, const std::vector<double>& per_agent_align,
                  const LossWeights& w);

template <typename T>
struct CosAlignGrad {
    BasicFeatureMap<T> grad;
    int degenerate_cells = 0;  // masked cells with near-zero norm, gradient zeroed
};

/// Analytic d cos_align / d fhat; exactly zero on unmasked cells. Run in
/// double for finite-difference comparisons.
template <typename T>
CosAlignGrad<T> grad_cos_align(const BasicFeatureMap<T>& fhat, const BasicFeatureMap<T>& fstar,
                               const BasicFeatureMap<T>& omega);

}  // namespace boxlift
