#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "svox/box.hpp"
#include "svox/core.hpp"
#include "svox/error.hpp"

namespace svox {

// Dense single-channel map with values in [0, 1], row-major.
struct Heatmap {
    Extent2 extent;
    std::vector<double> values;

    Heatmap() = default;
    explicit Heatmap(Extent2 e, double fill = 0.0)
        : extent(e), values(static_cast<std::size_t>(e.w) * e.h, fill) {}

    double at(std::int32_t u, std::int32_t v) const {
        return values[static_cast<std::size_t>(v) * extent.w + u];
    }
    double& at(std::int32_t u, std::int32_t v) {
        return values[static_cast<std::size_t>(v) * extent.w + u];
    }
};

// Ground-truth target: a 2D Gaussian rendered at each box center, summed over
// boxes and clamped to 1 so targets stay attainable for a sigmoid output.
// Coordinates are in heatmap cells; callers rescale boxes when the heatmap
// grid is coarser than the box grid.
inline Heatmap gt_heatmap(const std::vector<GroundTruthBox>& boxes, Extent2 extent, double sigma) {
    if (!(sigma > 0.0)) throw ConfigError("gaussian sigma must be > 0");
    Heatmap m(extent);
    const double inv = 1.0 / (2.0 * sigma * sigma);
    for (std::int32_t v = 0; v < extent.h; ++v) {
        for (std::int32_t u = 0; u < extent.w; ++u) {
            double s = 0.0;
            for (const GroundTruthBox& b : boxes) {
                const double du = u - b.center_u;
                const double dv = v - b.center_v;
                s += std::exp(-(du * du + dv * dv) * inv);
            }
            m.at(u, v) = std::min(1.0, s);
        }
    }
    return m;
}

inline double mse_loss(const Heatmap& pred, const Heatmap& gt) {
    if (!(pred.extent == gt.extent)) throw ShapeError("heatmap extent mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.values.size(); ++i) {
        const double d = pred.values[i] - gt.values[i];
        s += d * d;
    }
    return s / static_cast<double>(pred.values.size());
}

}  // namespace svox
