#pragma once

#include "boxlift/rasterizer.hpp"
#include "boxlift/tensor.hpp"

namespace boxlift {

/// Complementary binary maps over the feature grid: obj + bg == 1 everywhere.
struct RegionMasks {
    FeatureMap obj;  // rows x cols x 1, values in {0, 1}
    FeatureMap bg;
};

/// Foreground = max-pooled pseudo-BEV strictly above tau (a cell holding
/// exactly tau is background); the object mask dilates it by
/// dilation_radius (kernel 2r+1); background is the complement.
RegionMasks build_masks(const PseudoBev& x, int out_rows, int out_cols,
                        float tau = 0.0f, int dilation_radius = 2);

}  // namespace boxlift
