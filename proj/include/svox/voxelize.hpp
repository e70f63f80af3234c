#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "svox/box.hpp"
#include "svox/core.hpp"
#include "svox/error.hpp"
#include "svox/rng.hpp"

namespace svox {

// One Lidar return: position in meters plus reflectance.
struct PointXYZR {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
    double r = 0.0;
};

enum class Reduce { kMean, kMax, kCount };

inline Reduce reduce_from_string(const std::string& s) {
    if (s == "mean") return Reduce::kMean;
    if (s == "max") return Reduce::kMax;
    if (s == "count") return Reduce::kCount;
    throw ConfigError("unknown reduce mode: " + s);
}

// Quantizes a point cloud into the grid. Cell index is floor((p - origin) /
// voxel_size); points on a cell boundary fall into the lower cell. Points
// outside the extent are discarded. Feature per occupied cell is the chosen
// reduction of member points' (x, y, z, r) vectors (C=4), or the occupancy
// count (C=1) for Reduce::kCount.
inline SparseVoxelTensor voxelize(const std::vector<PointXYZR>& points, const VoxelGridSpec& spec,
                                  Reduce reduce = Reduce::kMean) {
    spec.validate();

    struct Acc {
        double f[4] = {0, 0, 0, 0};
        std::int64_t n = 0;
    };
    std::unordered_map<std::int64_t, Acc> cells;
    cells.reserve(points.size());

    const std::int64_t ey = spec.extent[1];
    const std::int64_t ez = spec.extent[2];

    for (const PointXYZR& p : points) {
        if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z) ||
            !std::isfinite(p.r)) {
            throw InvalidInput("non-finite point component");
        }
        std::int32_t cell[3];
        bool inside = true;
        const double comp[3] = {p.x, p.y, p.z};
        for (int a = 0; a < 3; ++a) {
            const double idx = std::floor((comp[a] - spec.origin[a]) / spec.voxel_size[a]);
            if (idx < 0 || idx >= static_cast<double>(spec.extent[a])) {
                inside = false;
                break;
            }
            cell[a] = static_cast<std::int32_t>(idx);
        }
        if (!inside) continue;

        // flattened cell key over the grid extent: ((x*Y)+y)*Z + z
        const std::int64_t key = (static_cast<std::int64_t>(cell[0]) * ey + cell[1]) * ez + cell[2];
        Acc& acc = cells[key];
        const double fv[4] = {p.x, p.y, p.z, p.r};
        if (reduce == Reduce::kMax) {
            if (acc.n == 0) {
                std::copy(fv, fv + 4, acc.f);
            } else {
                for (int c = 0; c < 4; ++c) acc.f[c] = std::max(acc.f[c], fv[c]);
            }
        } else {
            for (int c = 0; c < 4; ++c) acc.f[c] += fv[c];
        }
        ++acc.n;
    }

    if (cells.empty()) {
        throw EmptyScene("no points inside the voxel grid");
    }

    std::vector<std::int64_t> keys;
    keys.reserve(cells.size());
    for (const auto& kv : cells) keys.push_back(kv.first);
    std::sort(keys.begin(), keys.end());  // key order == lexicographic (x,y,z) order

    const std::int64_t n = static_cast<std::int64_t>(keys.size());
    const std::int64_t c_out = reduce == Reduce::kCount ? 1 : 4;
    std::vector<Coord3> coords(n);
    Matrix feats(n, c_out);
    for (std::int64_t i = 0; i < n; ++i) {
        const std::int64_t key = keys[i];
        coords[i] = Coord3{static_cast<std::int32_t>(key / (ey * ez)),
                           static_cast<std::int32_t>((key / ez) % ey),
                           static_cast<std::int32_t>(key % ez)};
        const Acc& acc = cells.at(key);
        if (reduce == Reduce::kCount) {
            feats(i, 0) = static_cast<double>(acc.n);
        } else if (reduce == Reduce::kMean) {
            for (int c = 0; c < 4; ++c) feats(i, c) = acc.f[c] / static_cast<double>(acc.n);
        } else {
            for (int c = 0; c < 4; ++c) feats(i, c) = acc.f[c];
        }
    }

    SparseVoxelTensor t;
    t.coords = std::move(coords);
    t.feats = std::move(feats);
    return t;
}

// Removes floor(fraction * N_eligible) voxels uniformly at random (seeded).
// Voxels whose (x, y) cell center lies inside any exclusion box are never
// eligible. Canonical order is preserved.
inline SparseVoxelTensor random_drop(const SparseVoxelTensor& t, double fraction,
                                     std::uint64_t seed,
                                     const std::vector<GroundTruthBox>* exclude = nullptr) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) {
        throw ConfigError("drop fraction must be in [0, 1]");
    }
    const std::int64_t n = t.size();
    std::vector<std::int64_t> eligible;
    eligible.reserve(n);
    for (std::int64_t i = 0; i < n; ++i) {
        if (exclude != nullptr && cell_in_any_box(*exclude, t.coords[i])) continue;
        eligible.push_back(i);
    }
    const std::int64_t k =
        static_cast<std::int64_t>(std::floor(fraction * static_cast<double>(eligible.size())));
    if (k == 0) return t;

    Rng rng(seed);
    // partial Fisher-Yates: the first k entries are the dropped rows
    for (std::int64_t i = 0; i < k; ++i) {
        const std::int64_t j = i + static_cast<std::int64_t>(rng.below(eligible.size() - i));
        std::swap(eligible[i], eligible[j]);
    }
    std::vector<bool> dropped(n, false);
    for (std::int64_t i = 0; i < k; ++i) dropped[eligible[i]] = true;

    SparseVoxelTensor out;
    out.coords.reserve(n - k);
    out.feats = Matrix(n - k, t.channels());
    std::int64_t w = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        if (dropped[i]) continue;
        out.coords.push_back(t.coords[i]);
        std::copy(t.feats.row_ptr(i), t.feats.row_ptr(i) + t.channels(), out.feats.row_ptr(w));
        ++w;
    }
    return out;
}

}  // namespace svox
