#pragma once

// Independent reference implementations used to cross-check the engine.
// Everything here deliberately avoids the library's hash index / rulebook /
// gather-scatter code paths.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <tuple>
#include <vector>

#include "svox/conv.hpp"
#include "svox/core.hpp"
#include "svox/rng.hpp"
#include "svox/voxelize.hpp"

namespace oracles {

using svox::Coord2;
using svox::Coord3;
using svox::DenseGrid;
using svox::KernelWeights;
using svox::Matrix;
using svox::PointXYZR;
using svox::Rng;
using svox::SparseBEVTensor;
using svox::SparseVoxelTensor;
using svox::VoxelGridSpec;

// -------------------------------------------------------------- lookups ----

inline std::int64_t linear_scan_lookup(const std::vector<Coord3>& coords, const Coord3& c) {
    for (std::size_t i = 0; i < coords.size(); ++i) {
        if (coords[i] == c) return static_cast<std::int64_t>(i);
    }
    return -1;
}

// ------------------------------------------------------------ voxelize -----

struct CellKey {
    int x, y, z;
    bool operator<(const CellKey& o) const {
        return std::tie(x, y, z) < std::tie(o.x, o.y, o.z);
    }
};

// Brute-force group-by on floor-divided cell keys, using an ordered map and
// per-cell point lists rather than streaming accumulators.
inline std::map<CellKey, std::vector<PointXYZR>> group_points(const std::vector<PointXYZR>& pts,
                                                              const VoxelGridSpec& spec) {
    std::map<CellKey, std::vector<PointXYZR>> cells;
    for (const PointXYZR& p : pts) {
        const double fx = std::floor((p.x - spec.origin[0]) / spec.voxel_size[0]);
        const double fy = std::floor((p.y - spec.origin[1]) / spec.voxel_size[1]);
        const double fz = std::floor((p.z - spec.origin[2]) / spec.voxel_size[2]);
        if (fx < 0 || fy < 0 || fz < 0 || fx >= spec.extent[0] || fy >= spec.extent[1] ||
            fz >= spec.extent[2]) {
            continue;
        }
        cells[CellKey{static_cast<int>(fx), static_cast<int>(fy), static_cast<int>(fz)}].push_back(p);
    }
    return cells;
}

// ---------------------------------------------------------- dense conv -----

// Second direct-convolution implementation, organized from the input side
// (scatter): each input site adds its contribution to every output in its
// neighborhood. Cross-checks the library's output-side oracle.
inline DenseGrid naive_conv_scatter(const DenseGrid& in, const KernelWeights& kernel) {
    DenseGrid out(in.dim, kernel.c_out, in.extent);
    const int n_off = kernel.offset_count();
    for (int px = 0; px < in.extent[0]; ++px) {
        for (int py = 0; py < in.extent[1]; ++py) {
            for (int pz = 0; pz < in.extent[2]; ++pz) {
                for (int o = 0; o < n_off; ++o) {
                    const auto d = kernel.offset(o);
                    // out[q] sums w_o * in[q + d], so the input at p feeds q = p - d
                    const int qx = px - d[0], qy = py - d[1], qz = pz - d[2];
                    if (!out.inside(qx, qy, qz)) continue;
                    const Matrix& w = kernel.weights[o];
                    for (int co = 0; co < kernel.c_out; ++co) {
                        double acc = 0.0;
                        for (int ci = 0; ci < kernel.c_in; ++ci) {
                            acc += w(ci, co) * in.at(ci, px, py, pz);
                        }
                        out.at(co, qx, qy, qz) += acc;
                    }
                }
            }
        }
    }
    return out;
}

// ------------------------------------------------------- pair counting -----

// Rulebook-pair recount without the hash index: sorted coordinate list plus
// binary search.
template <typename CoordT>
std::uint64_t count_pairs(const std::vector<CoordT>& coords_in,
                          const std::vector<CoordT>& coords_out, const KernelWeights& kernel) {
    std::vector<CoordT> sorted = coords_in;
    std::sort(sorted.begin(), sorted.end());
    std::uint64_t pairs = 0;
    for (const CoordT& q : coords_out) {
        for (int o = 0; o < kernel.offset_count(); ++o) {
            const auto d = kernel.offset(o);
            CoordT p = q;
            if constexpr (std::is_same_v<CoordT, Coord3>) {
                p = Coord3{kernel.stride * q.x + d[0], kernel.stride * q.y + d[1],
                           kernel.stride * q.z + d[2]};
            } else {
                p = Coord2{kernel.stride * q.u + d[0], kernel.stride * q.v + d[1]};
            }
            if (std::binary_search(sorted.begin(), sorted.end(), p)) ++pairs;
        }
    }
    return pairs;
}

// ------------------------------------------------------------ geometry -----

// Direct point-in-rotated-rectangle, written against the box corners rather
// than the box frame.
inline bool point_in_box_loop(double u, double v, double cu, double cv, double hu, double hv,
                              double yaw) {
    // project the offset onto the two box axes
    const double ax_u[2] = {std::cos(yaw), std::sin(yaw)};
    const double ax_v[2] = {-std::sin(yaw), std::cos(yaw)};
    const double du = u - cu;
    const double dv = v - cv;
    const double proj_u = du * ax_u[0] + dv * ax_u[1];
    const double proj_v = du * ax_v[0] + dv * ax_v[1];
    return std::abs(proj_u) <= hu && std::abs(proj_v) <= hv;
}

// ------------------------------------------------------------- top-k -------

// Full-sort selection oracle: returns the kept coordinate set.
inline std::vector<Coord2> sort_kept(const std::vector<double>& scores,
                                     const std::vector<Coord2>& coords, double r_drop) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] < scores[b];
        return coords[a] < coords[b];
    });
    const std::size_t k =
        static_cast<std::size_t>(std::floor(r_drop * static_cast<double>(scores.size())));
    std::vector<Coord2> kept;
    for (std::size_t i = k; i < order.size(); ++i) kept.push_back(coords[order[i]]);
    std::sort(kept.begin(), kept.end());
    return kept;
}

// -------------------------------------------------------------- stats ------

inline std::pair<double, double> flat_mean_var(const std::vector<double>& v) {
    double mu = 0.0;
    for (double x : v) mu += x;
    mu /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mu) * (x - mu);
    var /= static_cast<double>(v.size());
    return {mu, var};
}

// Pearson chi-squared statistic against a uniform expectation.
inline double chi2_uniform(const std::vector<std::int64_t>& counts) {
    std::int64_t total = 0;
    for (auto c : counts) total += c;
    const double expected = static_cast<double>(total) / static_cast<double>(counts.size());
    double stat = 0.0;
    for (auto c : counts) {
        const double d = static_cast<double>(c) - expected;
        stat += d * d / expected;
    }
    return stat;
}

// ----------------------------------------------------------- builders ------

inline SparseVoxelTensor random_voxel_tensor(Rng& rng, std::array<std::int32_t, 3> extent,
                                             std::int64_t channels, double occupancy) {
    std::vector<Coord3> coords;
    for (std::int32_t x = 0; x < extent[0]; ++x) {
        for (std::int32_t y = 0; y < extent[1]; ++y) {
            for (std::int32_t z = 0; z < extent[2]; ++z) {
                if (rng.uniform() < occupancy) coords.push_back(Coord3{x, y, z});
            }
        }
    }
    if (coords.empty()) coords.push_back(Coord3{0, 0, 0});
    Matrix feats(static_cast<std::int64_t>(coords.size()), channels);
    for (double& v : feats.data()) v = rng.uniform(-1.0, 1.0);
    return SparseVoxelTensor::canonical(std::move(coords), std::move(feats));
}

inline SparseBEVTensor random_bev_tensor(Rng& rng, svox::Extent2 extent, std::int64_t channels,
                                         double occupancy) {
    std::vector<Coord2> coords;
    for (std::int32_t u = 0; u < extent.w; ++u) {
        for (std::int32_t v = 0; v < extent.h; ++v) {
            if (rng.uniform() < occupancy) coords.push_back(Coord2{u, v});
        }
    }
    if (coords.empty()) coords.push_back(Coord2{0, 0});
    Matrix feats(static_cast<std::int64_t>(coords.size()), channels);
    for (double& v : feats.data()) v = rng.uniform(-1.0, 1.0);
    return SparseBEVTensor::canonical(std::move(coords), std::move(feats), extent);
}

// ------------------------------------------------------------ compare ------

inline double rel_error(const std::vector<double>& got, const std::vector<double>& want) {
    double max_diff = 0.0, max_ref = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i) {
        max_diff = std::max(max_diff, std::abs(got[i] - want[i]));
        max_ref = std::max(max_ref, std::abs(want[i]));
    }
    return max_diff / std::max(max_ref, 1e-12);
}

// Scatter a sparse result into a dense zero grid for whole-array comparison.
inline DenseGrid scatter_to_dense(const SparseVoxelTensor& t, std::array<std::int32_t, 3> extent,
                                  std::array<std::int32_t, 3> shift = {0, 0, 0}) {
    DenseGrid g(3, static_cast<int>(t.channels()), extent);
    for (std::int64_t i = 0; i < t.size(); ++i) {
        const Coord3 c{t.coords[i].x + shift[0], t.coords[i].y + shift[1],
                       t.coords[i].z + shift[2]};
        for (std::int64_t ch = 0; ch < t.channels(); ++ch) {
            g.at(static_cast<int>(ch), c.x, c.y, c.z) = t.feats(i, ch);
        }
    }
    return g;
}

inline DenseGrid scatter_to_dense(const SparseBEVTensor& t) {
    DenseGrid g(2, static_cast<int>(t.channels()), {t.extent.w, t.extent.h, 1});
    for (std::int64_t i = 0; i < t.size(); ++i) {
        for (std::int64_t ch = 0; ch < t.channels(); ++ch) {
            g.at(static_cast<int>(ch), t.coords[i].u, t.coords[i].v) = t.feats(i, ch);
        }
    }
    return g;
}

}  // namespace oracles
