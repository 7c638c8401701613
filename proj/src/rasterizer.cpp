#include "boxlift/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "boxlift/error.hpp"

namespace boxlift {

void GridSpec::validate() const {
    if (!(x_max > x_min) || !(y_max > y_min)) throw ConfigError("grid range is empty");
    if (!(v_x > 0.0) || !(v_y > 0.0)) throw ConfigError("grid cell size must be positive");
}

GridDims grid_dims(const GridSpec& g) {
    g.validate();
    // The ranges and voxel sizes are decimal values, so the quotient can land
    // an ulp below an exact integer; nudge before flooring.
    GridDims d;
    d.rows = static_cast<int>(std::floor((g.x_max - g.x_min) / g.v_x + 1e-9));
    d.cols = static_cast<int>(std::floor((g.y_max - g.y_min) / g.v_y + 1e-9));
    return d;
}

PseudoBev rasterize(const std::vector<BoxBEV>& boxes, const GridSpec& g) {
    const GridDims d = grid_dims(g);
    if (d.rows <= 0 || d.cols <= 0)
        throw ConfigError("grid resolves to " + std::to_string(d.rows) + "x" +
                          std::to_string(d.cols) + " cells");
    PseudoBev out;
    out.grid = g;
    out.map = FeatureMap(d.rows, d.cols, 1);

    for (const BoxBEV& b : boxes) {
        const auto corners = box_corners(b);
        double bx_min = corners[0][0], bx_max = corners[0][0];
        double by_min = corners[0][1], by_max = corners[0][1];
        for (int i = 1; i < 4; ++i) {
            bx_min = std::min(bx_min, corners[i][0]);
            bx_max = std::max(bx_max, corners[i][0]);
            by_min = std::min(by_min, corners[i][1]);
            by_max = std::max(by_max, corners[i][1]);
        }
        // Candidate cells: centers inside the (slightly padded) AABB. The
        // exact decision below is point_in_box, shared with the oracle path.
        int u_lo = static_cast<int>(std::ceil((bx_min - g.x_min) / g.v_x - 0.5 - 1e-9));
        int u_hi = static_cast<int>(std::floor((bx_max - g.x_min) / g.v_x - 0.5 + 1e-9));
        int v_lo = static_cast<int>(std::ceil((by_min - g.y_min) / g.v_y - 0.5 - 1e-9));
        int v_hi = static_cast<int>(std::floor((by_max - g.y_min) / g.v_y - 0.5 + 1e-9));
        u_lo = std::max(u_lo, 0);
        v_lo = std::max(v_lo, 0);
        u_hi = std::min(u_hi, d.rows - 1);
        v_hi = std::min(v_hi, d.cols - 1);
        const float s = static_cast<float>(std::clamp(b.score, 0.0, 1.0));
        for (int u = u_lo; u <= u_hi; ++u) {
            const double cx = cell_center_x(g, u);
            for (int v = v_lo; v <= v_hi; ++v) {
                if (!point_in_box(cx, cell_center_y(g, v), b)) continue;
                float& cell = out.map.at(u, v, 0);
                if (s > cell) cell = s;
            }
        }
    }
    return out;
}

std::string to_pgm(const PseudoBev& x) {
    std::ostringstream os;
    os << "P2\n" << x.map.cols << ' ' << x.map.rows << "\n255\n";
    for (int u = 0; u < x.map.rows; ++u) {
        for (int v = 0; v < x.map.cols; ++v) {
            const int g = std::clamp(static_cast<int>(std::lround(x.map.at(u, v, 0) * 255.0f)), 0, 255);
            os << g << (v + 1 == x.map.cols ? '\n' : ' ');
        }
    }
    return os.str();
}

}  // namespace boxlift
