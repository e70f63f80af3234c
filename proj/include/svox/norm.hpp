#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "svox/core.hpp"
#include "svox/error.hpp"

namespace svox {

enum class NormVariant { kNormal, kNonzero, kSp };

inline NormVariant norm_variant_from_string(const std::string& s) {
    if (s == "normal") return NormVariant::kNormal;
    if (s == "nonzero") return NormVariant::kNonzero;
    if (s == "sp") return NormVariant::kSp;
    throw ConfigError("unknown norm variant: " + s);
}

inline const char* norm_variant_name(NormVariant v) {
    switch (v) {
        case NormVariant::kNormal: return "normal";
        case NormVariant::kNonzero: return "nonzero";
        default: return "sp";
    }
}

// Per-channel normalization parameters. The sp variant divides by the
// standard deviation without subtracting the mean, so stored zeros stay
// distinguishable from absent background; mean is used only by the normal
// and nonzero variants.
struct NormParams {
    std::vector<double> variance;
    std::vector<double> mean;
    std::vector<double> gamma;
    std::vector<double> beta_affine;
    double epsilon = 1e-5;
    NormVariant variant = NormVariant::kSp;

    std::int64_t channels() const { return static_cast<std::int64_t>(variance.size()); }

    void validate() const {
        if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be non-negative");
        if (mean.size() != variance.size() || gamma.size() != variance.size() ||
            beta_affine.size() != variance.size()) {
            throw ConfigError("norm parameter arrays must share the channel count");
        }
        for (double v : variance) {
            if (v < 0.0) throw ConfigError("variance must be non-negative");
        }
    }

    static NormParams unit(std::int64_t channels, NormVariant variant, double epsilon = 1e-5) {
        NormParams p;
        p.variance.assign(channels, 1.0);
        p.mean.assign(channels, 0.0);
        p.gamma.assign(channels, 1.0);
        p.beta_affine.assign(channels, 0.0);
        p.epsilon = epsilon;
        p.variant = variant;
        return p;
    }
};

namespace detail {

// Standardize + affine over the rows of a feature matrix, in place.
inline void normalize_rows(Matrix& feats, const NormParams& p) {
    const std::int64_t c = feats.cols();
    std::vector<double> scale(c), shift(c);
    for (std::int64_t ch = 0; ch < c; ++ch) {
        const double inv_sd = 1.0 / std::sqrt(p.variance[ch] + p.epsilon);
        scale[ch] = p.gamma[ch] * inv_sd;
        const double mu = p.variant == NormVariant::kSp ? 0.0 : p.mean[ch];
        shift[ch] = p.beta_affine[ch] - mu * scale[ch];
    }
    for (std::int64_t i = 0; i < feats.rows(); ++i) {
        double* row = feats.row_ptr(i);
        for (std::int64_t ch = 0; ch < c; ++ch) row[ch] = row[ch] * scale[ch] + shift[ch];
    }
}

}  // namespace detail

// Applies the configured batch-normalization variant to a BEV tensor.
//   sp      — x / sqrt(var + eps), affine; stored elements only, coordinates
//             unchanged (absent stays absent).
//   nonzero — full (x - mean) standardization + affine on stored elements.
//   normal  — tensor is densified (absent = 0) and every W*H pixel is
//             standardized, affined, and stored: dense rate becomes 1.
inline SparseBEVTensor normalize(const SparseBEVTensor& t, const NormParams& p) {
    p.validate();
    if (p.channels() != t.channels()) {
        throw ShapeError("norm channel mismatch: tensor has " + std::to_string(t.channels()) +
                         ", params have " + std::to_string(p.channels()));
    }
    if (p.variant != NormVariant::kNormal) {
        SparseBEVTensor out = t;
        detail::normalize_rows(out.feats, p);
        return out;
    }
    // densify, then normalize everywhere
    const std::int64_t c = t.channels();
    SparseBEVTensor out;
    out.extent = t.extent;
    out.coords.reserve(static_cast<std::size_t>(t.extent.cells()));
    for (std::int32_t u = 0; u < t.extent.w; ++u) {
        for (std::int32_t v = 0; v < t.extent.h; ++v) {
            out.coords.push_back(Coord2{u, v});
        }
    }
    out.feats = Matrix(t.extent.cells(), c);
    for (std::int64_t i = 0; i < t.size(); ++i) {
        const std::int64_t row =
            static_cast<std::int64_t>(t.coords[i].u) * t.extent.h + t.coords[i].v;
        std::copy(t.feats.row_ptr(i), t.feats.row_ptr(i) + c, out.feats.row_ptr(row));
    }
    detail::normalize_rows(out.feats, p);
    return out;
}

// Same math for voxel tensors (sp / nonzero only; there is no dense 3D path).
inline SparseVoxelTensor normalize(const SparseVoxelTensor& t, const NormParams& p) {
    p.validate();
    if (p.variant == NormVariant::kNormal) {
        throw ConfigError("normal BN is not defined for 3D voxel tensors");
    }
    if (p.channels() != t.channels()) throw ShapeError("norm channel mismatch");
    SparseVoxelTensor out = t;
    detail::normalize_rows(out.feats, p);
    return out;
}

namespace detail {

struct StatsAcc {
    std::vector<double> sum;
    std::vector<double> sum_sq;
    std::int64_t count = 0;

    explicit StatsAcc(std::int64_t channels) : sum(channels, 0.0), sum_sq(channels, 0.0) {}

    void add_rows(const Matrix& m) {
        for (std::int64_t i = 0; i < m.rows(); ++i) {
            const double* row = m.row_ptr(i);
            for (std::int64_t c = 0; c < m.cols(); ++c) {
                sum[c] += row[c];
                sum_sq[c] += row[c] * row[c];
            }
        }
        count += m.rows();
    }

    void add_zeros(std::int64_t n) { count += n; }

    NormParams finish(NormVariant variant, double epsilon) const {
        NormParams p;
        const std::int64_t c = static_cast<std::int64_t>(sum.size());
        p.variance.resize(c);
        p.mean.resize(c);
        p.gamma.assign(c, 1.0);
        p.beta_affine.assign(c, 0.0);
        p.epsilon = epsilon;
        p.variant = variant;
        for (std::int64_t ch = 0; ch < c; ++ch) {
            const double mu = sum[ch] / static_cast<double>(count);
            // population variance
            const double var = sum_sq[ch] / static_cast<double>(count) - mu * mu;
            p.mean[ch] = mu;
            p.variance[ch] = var < 0.0 ? 0.0 : var;
        }
        return p;
    }
};

}  // namespace detail

// Per-channel mean/variance over a batch: stored elements only for the
// nonzero and sp variants, or all W*H positions with absent = 0 for normal.
// Population variance; gamma = 1 and beta = 0 initialized.
inline NormParams fit_stats(const std::vector<SparseBEVTensor>& batch, NormVariant variant,
                            double epsilon = 1e-5) {
    if (batch.empty()) throw EmptyBatch("fit_stats needs a non-empty batch");
    const std::int64_t c = batch.front().channels();
    detail::StatsAcc acc(c);
    for (const SparseBEVTensor& t : batch) {
        if (t.channels() != c) throw ShapeError("batch channel mismatch");
        acc.add_rows(t.feats);
        if (variant == NormVariant::kNormal) acc.add_zeros(t.extent.cells() - t.size());
    }
    if (acc.count == 0) throw EmptyBatch("fit_stats saw no elements");
    return acc.finish(variant, epsilon);
}

inline NormParams fit_stats(const std::vector<SparseVoxelTensor>& batch, NormVariant variant,
                            double epsilon = 1e-5) {
    if (batch.empty()) throw EmptyBatch("fit_stats needs a non-empty batch");
    if (variant == NormVariant::kNormal) {
        throw ConfigError("normal BN is not defined for 3D voxel tensors");
    }
    const std::int64_t c = batch.front().channels();
    detail::StatsAcc acc(c);
    for (const SparseVoxelTensor& t : batch) {
        if (t.channels() != c) throw ShapeError("batch channel mismatch");
        acc.add_rows(t.feats);
    }
    if (acc.count == 0) throw EmptyBatch("fit_stats saw no elements");
    return acc.finish(variant, epsilon);
}

}  // namespace svox
