#pragma once

#include <cmath>
#include <vector>

#include "svox/core.hpp"

namespace svox {

// Axis-aligned-or-yawed BEV rectangle in grid-cell units. Center may be
// fractional; half extents are measured along the box axes.
struct GroundTruthBox {
    double center_u = 0.0;
    double center_v = 0.0;
    double half_u = 0.0;
    double half_v = 0.0;
    double yaw = 0.0;  // radians, rotation of the box frame in the BEV plane

    // Point-in-rectangle test, boundary inclusive.
    bool contains(double u, double v) const {
        const double du = u - center_u;
        const double dv = v - center_v;
        const double c = std::cos(yaw);
        const double s = std::sin(yaw);
        const double lu = c * du + s * dv;
        const double lv = -s * du + c * dv;
        return std::abs(lu) <= half_u && std::abs(lv) <= half_v;
    }

    // Rescale from one grid resolution to another (e.g. full-res cells to the
    // 1/8 heatmap grid).
    GroundTruthBox scaled(double factor) const {
        return GroundTruthBox{center_u * factor, center_v * factor, half_u * factor,
                              half_v * factor, yaw};
    }
};

inline bool in_any_box(const std::vector<GroundTruthBox>& boxes, double u, double v) {
    for (const auto& b : boxes) {
        if (b.contains(u, v)) return true;
    }
    return false;
}

// Cell-center membership for a BEV pixel.
inline bool cell_in_any_box(const std::vector<GroundTruthBox>& boxes, const Coord2& c) {
    return in_any_box(boxes, c.u + 0.5, c.v + 0.5);
}

// Cell-center membership for a voxel, on its (x, y) column.
inline bool cell_in_any_box(const std::vector<GroundTruthBox>& boxes, const Coord3& c) {
    return in_any_box(boxes, c.x + 0.5, c.y + 0.5);
}

}  // namespace svox
