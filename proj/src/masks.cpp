#include "boxlift/masks.hpp"

namespace boxlift {

RegionMasks build_masks(const PseudoBev& x, int out_rows, int out_cols,
                        float tau, int dilation_radius) {
    const FeatureMap pooled = max_pool_to(x.map, out_rows, out_cols);
    FeatureMap fg(out_rows, out_cols, 1);
    for (std::size_t i = 0; i < pooled.data.size(); ++i)
        fg.data[i] = pooled.data[i] > tau ? 1.0f : 0.0f;

    RegionMasks m;
    m.obj = dilate_binary(fg, dilation_radius);
    m.bg = FeatureMap(out_rows, out_cols, 1);
    for (std::size_t i = 0; i < m.obj.data.size(); ++i)
        m.bg.data[i] = 1.0f - m.obj.data[i];
    return m;
}

}  // namespace boxlift
