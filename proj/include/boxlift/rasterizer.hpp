#pragma once

#include <string>
#include <vector>

#include "boxlift/geometry.hpp"
#include "boxlift/tensor.hpp"

namespace boxlift {

/// BEV grid geometry: detection range plus cell size.
/// rows = floor((x_max - x_min) / v_x), cols = floor((y_max - y_min) / v_y).
struct GridSpec {
    double x_min = 0.0, x_max = 0.0;
    double y_min = 0.0, y_max = 0.0;
    double v_x = 1.0, v_y = 1.0;

    void validate() const;
    bool contains(double x, double y) const {
        return x >= x_min && x <= x_max && y >= y_min && y <= y_max;
    }
};

struct GridDims {
    int rows = 0;  // H_bev, x-axis bins
    int cols = 0;  // W_bev, y-axis bins
};

GridDims grid_dims(const GridSpec& g);

/// Center of cell (u, v): row u counts from x_min, column v from y_min.
inline double cell_center_x(const GridSpec& g, int u) { return g.x_min + (u + 0.5) * g.v_x; }
inline double cell_center_y(const GridSpec& g, int v) { return g.y_min + (v + 0.5) * g.v_y; }

/// Single-channel confidence map over the grid; zero where no box footprint
/// covers the cell center.
struct PseudoBev {
    GridSpec grid;
    FeatureMap map;  // rows x cols x 1
};

/// Mark every cell whose center lies inside a box footprint with the maximum
/// covering score. Each box only scans the cells under its axis-aligned
/// bounding rectangle, so the cost is O(footprint) per box, not O(grid).
/// Boxes straddling the range boundary contribute their in-range cells only.
PseudoBev rasterize(const std::vector<BoxBEV>& boxes, const GridSpec& g);

/// P2 (ASCII) grayscale, values scaled by 255, for visual inspection.
std::string to_pgm(const PseudoBev& x);

}  // namespace boxlift
