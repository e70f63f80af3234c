#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "svox/bev.hpp"
#include "svox/box.hpp"
#include "svox/core.hpp"
#include "svox/error.hpp"
#include "svox/predictor.hpp"

namespace svox {

enum class TieBreak { kCoordLex };

// Spatial-filtering knobs: how much to drop, how density guidance is mixed
// in, and at which backbone layers (1-based indices) the filter runs.
struct FilterConfig {
    double r_drop = 0.25;
    double beta = 0.5;
    int density_pool = 5;
    std::vector<int> layers_3d;
    std::vector<int> layers_2d;
    TieBreak tie_break = TieBreak::kCoordLex;

    void validate(int n_layers_3d, int n_layers_2d) const {
        if (!(r_drop >= 0.0 && r_drop < 1.0)) throw ConfigError("r_drop must be in [0, 1)");
        if (!(beta >= 0.0)) throw ConfigError("beta must be >= 0");
        if (density_pool < 1 || density_pool % 2 == 0) {
            throw ConfigError("density_pool must be odd and >= 1");
        }
        for (int l : layers_3d) {
            if (l < 1 || l > n_layers_3d) throw ConfigError("3D filter layer index out of range");
        }
        for (int l : layers_2d) {
            if (l < 1 || l > n_layers_2d) throw ConfigError("2D filter layer index out of range");
        }
    }

    bool applies_3d(int layer_1based) const {
        return std::find(layers_3d.begin(), layers_3d.end(), layer_1based) != layers_3d.end();
    }
    bool applies_2d(int layer_1based) const {
        return std::find(layers_2d.begin(), layers_2d.end(), layer_1based) != layers_2d.end();
    }
};

// Importance per stored pixel: predictor score at the pixel's 1/8-resolution
// cell, multiplied by the beta-exponentiated pooled density at the pixel.
inline std::vector<double> importance_score(const SparseBEVTensor& x_bev, const PredictorNet& net,
                                            const DensityHeatmap& density, double beta,
                                            CostLedger* ledger = nullptr,
                                            Heatmap* pred_out = nullptr) {
    if (!(density.extent == x_bev.extent)) {
        throw ShapeError("density heatmap extent must match the BEV tensor extent");
    }
    const Heatmap pred = predictor_forward(x_bev, net, ledger);
    if (pred_out != nullptr) *pred_out = pred;
    std::vector<double> scores(x_bev.coords.size());
    for (std::size_t i = 0; i < x_bev.coords.size(); ++i) {
        const Coord2& p = x_bev.coords[i];
        const std::int32_t hu = std::min(p.u / net.pool_factor, pred.extent.w - 1);
        const std::int32_t hv = std::min(p.v / net.pool_factor, pred.extent.h - 1);
        scores[i] = pred.at(hu, hv) * std::pow(density.at(p.u, p.v), beta);
    }
    return scores;
}

// Keeps everything but the floor(r_drop * M) lowest-scored pixels. Ties are
// broken by lexicographic coordinate order so the mask is deterministic.
inline BEVMask drop_mask(const std::vector<double>& scores, const std::vector<Coord2>& coords,
                         Extent2 extent, double r_drop, TieBreak tie_break = TieBreak::kCoordLex) {
    (void)tie_break;  // single deterministic rule
    if (scores.size() != coords.size()) throw ShapeError("scores and coords must align");
    if (!(r_drop >= 0.0 && r_drop < 1.0)) throw ConfigError("r_drop must be in [0, 1)");
    const std::size_t m = coords.size();
    const std::size_t k = static_cast<std::size_t>(std::floor(r_drop * static_cast<double>(m)));

    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] < scores[b];
        return coords[a] < coords[b];
    });

    std::vector<Coord2> kept;
    kept.reserve(m - k);
    for (std::size_t i = k; i < m; ++i) kept.push_back(coords[order[i]]);
    return BEVMask::from_kept(extent, std::move(kept));
}

struct FilterOutcome2D {
    SparseBEVTensor out;
    BEVMask mask;
    std::vector<double> scores;
    Heatmap pred;
};

struct FilterOutcome3D {
    SparseVoxelTensor out;
    BEVMask mask;
    std::vector<double> scores;
    SparseBEVTensor projected;
    Heatmap pred;
};

// Project to BEV, score, build the keep mask, and broadcast it back to voxel
// space: voxels in dropped columns are removed outright.
inline FilterOutcome3D filter_3d_detailed(const SparseVoxelTensor& t, const FilterConfig& cfg,
                                          const PredictorNet& net, const DensityHeatmap& density,
                                          CostLedger* ledger = nullptr) {
    FilterOutcome3D r;
    r.projected = project_3d_to_2d(t, density.extent);
    r.scores = importance_score(r.projected, net, density, cfg.beta, ledger, &r.pred);
    r.mask = drop_mask(r.scores, r.projected.coords, density.extent, cfg.r_drop, cfg.tie_break);
    r.out = lift_mask_2d_to_3d(r.mask, t);
    return r;
}

inline SparseVoxelTensor filter_3d(const SparseVoxelTensor& t, const FilterConfig& cfg,
                                   const PredictorNet& net, const DensityHeatmap& density,
                                   CostLedger* ledger = nullptr) {
    return filter_3d_detailed(t, cfg, net, density, ledger).out;
}

// Same selection applied directly in BEV space, without the 3D round trip.
inline FilterOutcome2D filter_2d_detailed(const SparseBEVTensor& t, const FilterConfig& cfg,
                                          const PredictorNet& net, const DensityHeatmap& density,
                                          CostLedger* ledger = nullptr) {
    FilterOutcome2D r;
    r.scores = importance_score(t, net, density, cfg.beta, ledger, &r.pred);
    r.mask = drop_mask(r.scores, t.coords, t.extent, cfg.r_drop, cfg.tie_break);
    r.out = apply_mask_2d(r.mask, t);
    return r;
}

inline SparseBEVTensor filter_2d(const SparseBEVTensor& t, const FilterConfig& cfg,
                                 const PredictorNet& net, const DensityHeatmap& density,
                                 CostLedger* ledger = nullptr) {
    return filter_2d_detailed(t, cfg, net, density, ledger).out;
}

// Fraction of dropped coordinates whose cell center lies inside any
// ground-truth box; 0 by convention when nothing was dropped.
inline double r_inbox(const std::vector<Coord2>& dropped,
                      const std::vector<GroundTruthBox>& boxes) {
    if (dropped.empty()) return 0.0;
    std::int64_t inside = 0;
    for (const Coord2& c : dropped) {
        if (cell_in_any_box(boxes, c)) ++inside;
    }
    return static_cast<double>(inside) / static_cast<double>(dropped.size());
}

// Complement helper: stored coordinates of `before` that a mask dropped.
inline std::vector<Coord2> dropped_coords(const SparseBEVTensor& before, const BEVMask& mask) {
    std::vector<Coord2> out;
    for (const Coord2& c : before.coords) {
        if (!mask.contains(c)) out.push_back(c);
    }
    return out;
}

// Selects the candidate beta whose density-score variance best matches the
// predictor-score variance, pooled over the scenes' stored pixels. Earlier
// candidates win ties.
inline double calibrate_beta(
    const std::vector<std::pair<SparseBEVTensor, DensityHeatmap>>& scenes,
    const PredictorNet& net, const std::vector<double>& candidates) {
    if (candidates.empty()) throw ConfigError("empty beta candidate grid");
    if (scenes.empty()) throw EmptyBatch("calibrate_beta needs at least one scene");

    std::vector<double> pred_scores;
    std::vector<double> densities;
    for (const auto& [bev, density] : scenes) {
        if (!(density.extent == bev.extent)) {
            throw ShapeError("density extent must match the BEV tensor extent");
        }
        const Heatmap pred = predictor_forward(bev, net);
        for (const Coord2& p : bev.coords) {
            const std::int32_t hu = std::min(p.u / net.pool_factor, pred.extent.w - 1);
            const std::int32_t hv = std::min(p.v / net.pool_factor, pred.extent.h - 1);
            pred_scores.push_back(pred.at(hu, hv));
            densities.push_back(density.at(p.u, p.v));
        }
    }

    auto variance = [](const std::vector<double>& v) {
        double mu = 0.0;
        for (double x : v) mu += x;
        mu /= static_cast<double>(v.size());
        double s = 0.0;
        for (double x : v) s += (x - mu) * (x - mu);
        return s / static_cast<double>(v.size());
    };

    const double target = variance(pred_scores);
    double best_beta = candidates.front();
    double best_gap = std::numeric_limits<double>::infinity();
    std::vector<double> powered(densities.size());
    for (double beta : candidates) {
        if (!(beta >= 0.0)) throw ConfigError("beta candidates must be >= 0");
        for (std::size_t i = 0; i < densities.size(); ++i) {
            powered[i] = std::pow(densities[i], beta);
        }
        const double gap = std::abs(variance(powered) - target);
        if (gap < best_gap) {
            best_gap = gap;
            best_beta = beta;
        }
    }
    return best_beta;
}

}  // namespace svox
