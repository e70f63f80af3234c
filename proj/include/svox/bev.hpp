#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "svox/core.hpp"
#include "svox/error.hpp"
#include "svox/voxelize.hpp"

namespace svox {

// Keep/drop mask over a BEV grid; `kept` holds the coordinates that survive.
struct BEVMask {
    Extent2 extent;
    std::vector<Coord2> kept;  // sorted, unique

    static BEVMask from_kept(Extent2 extent, std::vector<Coord2> kept) {
        std::sort(kept.begin(), kept.end());
        kept.erase(std::unique(kept.begin(), kept.end()), kept.end());
        for (const Coord2& c : kept) {
            if (!extent.contains(c)) throw ShapeError("mask coordinate outside extent");
        }
        return BEVMask{extent, std::move(kept)};
    }

    bool contains(const Coord2& c) const {
        return std::binary_search(kept.begin(), kept.end(), c);
    }

    // Mask composition: keep only what both masks keep.
    BEVMask intersect(const BEVMask& other) const {
        if (!(extent == other.extent)) throw ShapeError("mask extent mismatch");
        std::vector<Coord2> out;
        std::set_intersection(kept.begin(), kept.end(), other.kept.begin(), other.kept.end(),
                              std::back_inserter(out));
        return BEVMask{extent, std::move(out)};
    }
};

// Pooled point-count heatmap over the BEV grid, normalized to [0, 1].
struct DensityHeatmap {
    Extent2 extent;
    std::vector<double> values;  // row-major: values[v * w + u]
    int pool_kernel = 1;

    double at(std::int32_t u, std::int32_t v) const { return values[static_cast<std::size_t>(v) * extent.w + u]; }
    double& at(std::int32_t u, std::int32_t v) { return values[static_cast<std::size_t>(v) * extent.w + u]; }
};

// Sum pooling along the z-axis: one BEV pixel per distinct (x, y) column,
// feature = channel-wise sum over the column's voxels.
inline SparseBEVTensor project_3d_to_2d(const SparseVoxelTensor& t, Extent2 extent) {
    const std::int64_t c = t.channels();
    // coords are sorted by (x, y, z), so columns are contiguous runs
    std::vector<Coord2> pix;
    std::vector<std::int64_t> first_row;
    for (std::int64_t i = 0; i < t.size(); ++i) {
        const Coord2 p{t.coords[i].x, t.coords[i].y};
        if (!extent.contains(p)) throw ShapeError("voxel (x, y) outside BEV extent");
        if (pix.empty() || !(pix.back() == p)) {
            pix.push_back(p);
            first_row.push_back(i);
        }
    }
    SparseBEVTensor out;
    out.extent = extent;
    out.coords = std::move(pix);
    out.feats = Matrix(static_cast<std::int64_t>(out.coords.size()), c);
    for (std::size_t k = 0; k < out.coords.size(); ++k) {
        const std::int64_t lo = first_row[k];
        const std::int64_t hi =
            k + 1 < out.coords.size() ? first_row[k + 1] : t.size();
        double* dst = out.feats.row_ptr(static_cast<std::int64_t>(k));
        for (std::int64_t i = lo; i < hi; ++i) {
            const double* src = t.feats.row_ptr(i);
            for (std::int64_t ch = 0; ch < c; ++ch) dst[ch] += src[ch];
        }
    }
    return out;
}

// Broadcasts a BEV keep mask back to voxel space: voxels in dropped columns
// are physically removed, not zeroed, so their compute and storage disappear
// from every later layer.
inline SparseVoxelTensor lift_mask_2d_to_3d(const BEVMask& mask, const SparseVoxelTensor& t) {
    std::vector<std::int64_t> keep_rows;
    keep_rows.reserve(t.coords.size());
    for (std::int64_t i = 0; i < t.size(); ++i) {
        const Coord2 p{t.coords[i].x, t.coords[i].y};
        if (!mask.extent.contains(p)) throw ShapeError("voxel (x, y) outside mask extent");
        if (mask.contains(p)) keep_rows.push_back(i);
    }
    SparseVoxelTensor out;
    out.coords.reserve(keep_rows.size());
    out.feats = Matrix(static_cast<std::int64_t>(keep_rows.size()), t.channels());
    for (std::size_t k = 0; k < keep_rows.size(); ++k) {
        out.coords.push_back(t.coords[keep_rows[k]]);
        std::copy(t.feats.row_ptr(keep_rows[k]), t.feats.row_ptr(keep_rows[k]) + t.channels(),
                  out.feats.row_ptr(static_cast<std::int64_t>(k)));
    }
    return out;
}

// Same filtering applied directly in BEV space.
inline SparseBEVTensor apply_mask_2d(const BEVMask& mask, const SparseBEVTensor& t) {
    if (!(mask.extent == t.extent)) throw ShapeError("mask extent mismatch");
    std::vector<std::int64_t> keep_rows;
    for (std::int64_t i = 0; i < t.size(); ++i) {
        if (mask.contains(t.coords[i])) keep_rows.push_back(i);
    }
    SparseBEVTensor out;
    out.extent = t.extent;
    out.coords.reserve(keep_rows.size());
    out.feats = Matrix(static_cast<std::int64_t>(keep_rows.size()), t.channels());
    for (std::size_t k = 0; k < keep_rows.size(); ++k) {
        out.coords.push_back(t.coords[keep_rows[k]]);
        std::copy(t.feats.row_ptr(keep_rows[k]), t.feats.row_ptr(keep_rows[k]) + t.channels(),
                  out.feats.row_ptr(static_cast<std::int64_t>(k)));
    }
    return out;
}

// Point-count density over the BEV footprint of the grid: count points per
// cell, average-pool with a g x g window (zero padding), then divide by the
// post-pooling maximum so values lie in [0, 1] with max exactly 1.
inline DensityHeatmap density_heatmap(const std::vector<PointXYZR>& points,
                                      const VoxelGridSpec& spec, int g) {
    spec.validate();
    if (g < 1 || g % 2 == 0) throw ConfigError("density pooling kernel must be odd and >= 1");

    const std::int32_t w = spec.extent[0];
    const std::int32_t h = spec.extent[1];
    std::vector<double> counts(static_cast<std::size_t>(w) * h, 0.0);
    std::int64_t n_inside = 0;
    for (const PointXYZR& p : points) {
        if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw InvalidInput("non-finite point");
        const double fu = std::floor((p.x - spec.origin[0]) / spec.voxel_size[0]);
        const double fv = std::floor((p.y - spec.origin[1]) / spec.voxel_size[1]);
        if (fu < 0 || fv < 0 || fu >= w || fv >= h) continue;
        counts[static_cast<std::size_t>(fv) * w + static_cast<std::size_t>(fu)] += 1.0;
        ++n_inside;
    }
    if (n_inside == 0) throw EmptyScene("no points inside the BEV grid");

    DensityHeatmap out;
    out.extent = Extent2{w, h};
    out.pool_kernel = g;
    out.values.assign(counts.size(), 0.0);
    const int half = g / 2;
    const double window = static_cast<double>(g) * g;
    double maxv = 0.0;
    for (std::int32_t v = 0; v < h; ++v) {
        for (std::int32_t u = 0; u < w; ++u) {
            double s = 0.0;
            for (int dv = -half; dv <= half; ++dv) {
                const std::int32_t vv = v + dv;
                if (vv < 0 || vv >= h) continue;
                for (int du = -half; du <= half; ++du) {
                    const std::int32_t uu = u + du;
                    if (uu < 0 || uu >= w) continue;
                    s += counts[static_cast<std::size_t>(vv) * w + uu];
                }
            }
            const double pooled = s / window;
            out.at(u, v) = pooled;
            maxv = std::max(maxv, pooled);
        }
    }
    for (double& v : out.values) v /= maxv;
    return out;
}

// Nearest-neighbor resampling of a density heatmap onto another grid extent.
inline DensityHeatmap resample_nearest(const DensityHeatmap& d, Extent2 extent) {
    if (extent == d.extent) return d;
    DensityHeatmap out;
    out.extent = extent;
    out.pool_kernel = d.pool_kernel;
    out.values.assign(static_cast<std::size_t>(extent.w) * extent.h, 0.0);
    for (std::int32_t v = 0; v < extent.h; ++v) {
        for (std::int32_t u = 0; u < extent.w; ++u) {
            std::int32_t su = static_cast<std::int32_t>((static_cast<std::int64_t>(u) * d.extent.w) / extent.w);
            std::int32_t sv = static_cast<std::int32_t>((static_cast<std::int64_t>(v) * d.extent.h) / extent.h);
            su = std::min(su, d.extent.w - 1);
            sv = std::min(sv, d.extent.h - 1);
            out.at(u, v) = d.at(su, sv);
        }
    }
    return out;
}

}  // namespace svox
