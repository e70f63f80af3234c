#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "svox/bev.hpp"
#include "svox/conv.hpp"
#include "svox/core.hpp"
#include "svox/error.hpp"
#include "svox/filter.hpp"
#include "svox/ledger.hpp"
#include "svox/norm.hpp"
#include "svox/predictor.hpp"
#include "svox/voxelize.hpp"

namespace svox {

// One backbone layer: a sparse convolution plus an optional normalization.
struct LayerSpec {
    std::string name;
    int kernel = 3;
    int stride = 1;
    ConvKind kind = ConvKind::kSubmanifold;
    int c_out = 16;
    std::optional<NormVariant> norm;  // nullopt = no normalization
};

struct PipelineConfig {
    VoxelGridSpec grid;
    Reduce reduce = Reduce::kMean;
    std::vector<LayerSpec> backbone3d;
    std::vector<LayerSpec> backbone2d;
    FilterConfig filter;
    double sigma = 5.0;             // gt heatmap gaussian radius
    std::uint64_t seed = 0;
    std::uint64_t predictor_seed = 1;
    bool report_rulebook_memory = false;

    std::int64_t input_channels() const { return reduce == Reduce::kCount ? 1 : 4; }

    void validate() const {
        grid.validate();
        filter.validate(static_cast<int>(backbone3d.size()), static_cast<int>(backbone2d.size()));
        for (const LayerSpec& l : backbone3d) {
            if (l.norm && *l.norm == NormVariant::kNormal) {
                throw ConfigError("normal BN is not defined for 3D layers: " + l.name);
            }
            if (l.kind == ConvKind::kSubmanifold && l.stride != 1) {
                throw ConfigError("submanifold layer must have stride 1: " + l.name);
            }
        }
        for (const LayerSpec& l : backbone2d) {
            if (l.kind == ConvKind::kSubmanifold && l.stride != 1) {
                throw ConfigError("submanifold layer must have stride 1: " + l.name);
            }
        }
    }
};

// Backbone weights, one kernel per layer; normalization statistics may be
// pinned here (e.g. loaded from a model file) or left to be fitted from the
// data of each run.
struct ModelWeights {
    std::vector<KernelWeights> w3d;
    std::vector<KernelWeights> w2d;
    std::vector<std::optional<NormParams>> norm3d;
    std::vector<std::optional<NormParams>> norm2d;
};

// Seeded random weights matching the config's layer shapes.
inline ModelWeights build_random_model(const PipelineConfig& cfg) {
    ModelWeights m;
    int c_in = static_cast<int>(cfg.input_channels());
    std::uint64_t tag = 0;
    for (const LayerSpec& l : cfg.backbone3d) {
        m.w3d.push_back(KernelWeights::random(3, l.kernel, l.stride, l.kind, c_in, l.c_out,
                                              cfg.seed ^ (0x51ed2701u + 17 * ++tag)));
        m.norm3d.emplace_back();
        c_in = l.c_out;
    }
    for (const LayerSpec& l : cfg.backbone2d) {
        m.w2d.push_back(KernelWeights::random(2, l.kernel, l.stride, l.kind, c_in, l.c_out,
                                              cfg.seed ^ (0x51ed2701u + 17 * ++tag)));
        m.norm2d.emplace_back();
        c_in = l.c_out;
    }
    return m;
}

inline void validate_model(const PipelineConfig& cfg, const ModelWeights& m) {
    if (m.w3d.size() != cfg.backbone3d.size() || m.w2d.size() != cfg.backbone2d.size()) {
        throw ConfigError("model layer count does not match the config");
    }
    int c_in = static_cast<int>(cfg.input_channels());
    for (std::size_t i = 0; i < m.w3d.size(); ++i) {
        const LayerSpec& l = cfg.backbone3d[i];
        const KernelWeights& k = m.w3d[i];
        k.validate();
        if (k.dim != 3 || k.kernel_size != l.kernel || k.stride != l.stride || k.kind != l.kind ||
            k.c_in != c_in || k.c_out != l.c_out) {
            throw ConfigError("model weights do not match layer " + l.name);
        }
        c_in = l.c_out;
    }
    for (std::size_t i = 0; i < m.w2d.size(); ++i) {
        const LayerSpec& l = cfg.backbone2d[i];
        const KernelWeights& k = m.w2d[i];
        k.validate();
        if (k.dim != 2 || k.kernel_size != l.kernel || k.stride != l.stride || k.kind != l.kind ||
            k.c_in != c_in || k.c_out != l.c_out) {
            throw ConfigError("model weights do not match layer " + l.name);
        }
        c_in = l.c_out;
    }
}

struct FilterRecord {
    std::string layer;
    BEVMask mask;
    std::vector<double> scores;
    Heatmap pred;
};

struct PipelineResult {
    CostLedger ledger;
    SparseVoxelTensor out3d;  // final 3D backbone output (post filtering)
    SparseBEVTensor out2d;    // final 2D backbone output
    DensityHeatmap density;   // full-resolution input density
    std::vector<FilterRecord> filters;
};

namespace detail {

inline NormParams layer_norm_params(const std::optional<NormParams>& pinned, NormVariant variant,
                                    const SparseBEVTensor& t) {
    if (pinned) return *pinned;
    return fit_stats(std::vector<SparseBEVTensor>{t}, variant);
}

inline NormParams layer_norm_params(const std::optional<NormParams>& pinned, NormVariant variant,
                                    const SparseVoxelTensor& t) {
    if (pinned) return *pinned;
    return fit_stats(std::vector<SparseVoxelTensor>{t}, variant);
}

}  // namespace detail

// Full adaptive-inference pass: voxelize, 3D backbone with density-guided
// filtering after the configured layers, BEV projection, 2D backbone with the
// configured normalization and filtering. Filtering is disabled entirely when
// r_drop is 0 or no filter layers are configured, so such a run's ledger is
// identical to an unfiltered baseline.
inline PipelineResult run_pipeline(const PipelineConfig& cfg, const ModelWeights& model,
                                   PredictorNet& net, const std::vector<PointXYZR>& cloud) {
    cfg.validate();
    validate_model(cfg, model);

    PipelineResult res;
    const bool filtering = cfg.filter.r_drop > 0.0 &&
                           (!cfg.filter.layers_3d.empty() || !cfg.filter.layers_2d.empty());

    SparseVoxelTensor t3 = voxelize(cloud, cfg.grid, cfg.reduce);
    res.density = density_heatmap(cloud, cfg.grid, cfg.filter.density_pool);

    std::array<std::int32_t, 3> ext = {cfg.grid.extent[0], cfg.grid.extent[1],
                                       cfg.grid.extent[2]};

    for (std::size_t i = 0; i < cfg.backbone3d.size(); ++i) {
        const LayerSpec& spec = cfg.backbone3d[i];
        const KernelWeights& kernel = model.w3d[i];
        for (int a = 0; a < 3; ++a) ext[a] = (ext[a] + spec.stride - 1) / spec.stride;

        Conv3Result conv = conv3_run(t3, kernel, &ext);
        t3 = std::move(conv.out);
        if (spec.norm) {
            t3 = normalize(t3, detail::layer_norm_params(model.norm3d[i], *spec.norm, t3));
        }

        const double cells3 =
            static_cast<double>(ext[0]) * ext[1] * ext[2];
        const double rate_pre = static_cast<double>(t3.size()) / cells3;
        double rate_post = rate_pre;

        if (filtering && cfg.filter.applies_3d(static_cast<int>(i) + 1)) {
            const DensityHeatmap d = resample_nearest(res.density, Extent2{ext[0], ext[1]});
            net.ensure_compress(static_cast<int>(t3.channels()));
            FilterOutcome3D fo =
                filter_3d_detailed(t3, cfg.filter, net, d, &res.ledger);
            t3 = std::move(fo.out);
            res.filters.push_back(FilterRecord{spec.name, std::move(fo.mask), std::move(fo.scores),
                                               std::move(fo.pred)});
            rate_post = static_cast<double>(t3.size()) / cells3;
        }

        res.ledger.log(LayerCost{
            spec.name, Domain::kThreeD, conv.stats.flops,
            static_cast<std::uint64_t>(t3.size()) * static_cast<std::uint64_t>(t3.channels()) * 4ull,
            conv.stats.pairs, conv.stats.rulebook_bytes, rate_pre, rate_post});
    }

    const Extent2 bev_extent{ext[0], ext[1]};
    SparseBEVTensor t2 = project_3d_to_2d(t3, bev_extent);
    res.ledger.log(LayerCost{
        "bev_project", Domain::kTwoD, 0,
        static_cast<std::uint64_t>(t2.size()) * static_cast<std::uint64_t>(t2.channels()) * 4ull, 0,
        0, t2.dense_rate(), t2.dense_rate()});

    for (std::size_t i = 0; i < cfg.backbone2d.size(); ++i) {
        const LayerSpec& spec = cfg.backbone2d[i];
        const KernelWeights& kernel = model.w2d[i];

        Conv2Result conv = conv2_run(t2, kernel);
        t2 = std::move(conv.out);
        if (spec.norm) {
            t2 = normalize(t2, detail::layer_norm_params(model.norm2d[i], *spec.norm, t2));
        }

        const double rate_pre = t2.dense_rate();
        double rate_post = rate_pre;

        if (filtering && cfg.filter.applies_2d(static_cast<int>(i) + 1)) {
            const DensityHeatmap d = resample_nearest(res.density, t2.extent);
            net.ensure_compress(static_cast<int>(t2.channels()));
            FilterOutcome2D fo = filter_2d_detailed(t2, cfg.filter, net, d, &res.ledger);
            t2 = std::move(fo.out);
            res.filters.push_back(FilterRecord{spec.name, std::move(fo.mask), std::move(fo.scores),
                                               std::move(fo.pred)});
            rate_post = t2.dense_rate();
        }

        res.ledger.log(LayerCost{
            spec.name, Domain::kTwoD, conv.stats.flops,
            static_cast<std::uint64_t>(t2.size()) * static_cast<std::uint64_t>(t2.channels()) * 4ull,
            conv.stats.pairs, conv.stats.rulebook_bytes, rate_pre, rate_post});
    }

    res.out3d = std::move(t3);
    res.out2d = std::move(t2);
    return res;
}

// Input-level BEV features for predictor training, evaluation, and beta
// calibration: voxelize, project, and sp-normalize, so the feature scale
// matches what the predictor sees after in-pipeline normalization.
inline SparseBEVTensor input_bev_features(const std::vector<PointXYZR>& cloud,
                                          const VoxelGridSpec& grid,
                                          Reduce reduce = Reduce::kMean) {
    const SparseVoxelTensor t = voxelize(cloud, grid, reduce);
    SparseBEVTensor bev = project_3d_to_2d(t, grid.bev_extent());
    return normalize(bev, fit_stats(std::vector<SparseBEVTensor>{bev}, NormVariant::kSp));
}

// Baseline counterpart of a config: no filtering, dense (normal) BN in the
// 2D backbone. This is the pre-optimization model that compression ratios
// are reported against.
inline PipelineConfig baseline_config(PipelineConfig cfg) {
    cfg.filter.layers_3d.clear();
    cfg.filter.layers_2d.clear();
    for (LayerSpec& l : cfg.backbone2d) {
        if (l.norm) l.norm = NormVariant::kNormal;
    }
    return cfg;
}

}  // namespace svox
