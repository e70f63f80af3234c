#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "svox/core.hpp"
#include "svox/error.hpp"
#include "svox/ledger.hpp"
#include "svox/rng.hpp"

namespace svox {

enum class ConvKind { kSubmanifold, kGenerative };

inline ConvKind conv_kind_from_string(const std::string& s) {
    if (s == "submanifold") return ConvKind::kSubmanifold;
    if (s == "generative") return ConvKind::kGenerative;
    throw ConfigError("unknown conv_kind: " + s);
}

inline const char* conv_kind_name(ConvKind k) {
    return k == ConvKind::kSubmanifold ? "submanifold" : "generative";
}

// Kernel weights for a D-dimensional sparse convolution: one C_in x C_out
// matrix per kernel offset. Offsets enumerate the K^D neighborhood in
// row-major order over (-K/2 .. K/2) per axis, last axis fastest; only odd K
// is representable in this convention.
struct KernelWeights {
    int dim = 3;  // 2 or 3
    int kernel_size = 3;
    int stride = 1;
    ConvKind kind = ConvKind::kSubmanifold;
    int c_in = 1;
    int c_out = 1;
    std::vector<Matrix> weights;  // K^dim matrices of shape c_in x c_out

    int offset_count() const {
        int n = 1;
        for (int a = 0; a < dim; ++a) n *= kernel_size;
        return n;
    }

    // Offset for flat index i; unused axes are zero.
    std::array<std::int32_t, 3> offset(int i) const {
        const int k = kernel_size;
        const int h = k / 2;
        std::array<std::int32_t, 3> d = {0, 0, 0};
        for (int a = dim - 1; a >= 0; --a) {
            d[a] = i % k - h;
            i /= k;
        }
        return d;
    }

    void validate() const {
        if (dim != 2 && dim != 3) throw ConfigError("kernel dim must be 2 or 3");
        if (kernel_size < 1 || kernel_size % 2 == 0) {
            throw ConfigError("kernel_size must be odd and >= 1");
        }
        if (stride < 1) throw ConfigError("stride must be >= 1");
        if (kind == ConvKind::kSubmanifold && stride != 1) {
            throw ConfigError("submanifold convolution is stride-1 by definition");
        }
        if (static_cast<int>(weights.size()) != offset_count()) {
            throw ConfigError("kernel weight count does not match K^D");
        }
        for (const Matrix& w : weights) {
            if (w.rows() != c_in || w.cols() != c_out) {
                throw ConfigError("kernel weight matrix shape mismatch");
            }
        }
    }

    static KernelWeights zeros(int dim, int kernel_size, int stride, ConvKind kind, int c_in,
                               int c_out) {
        KernelWeights k;
        k.dim = dim;
        k.kernel_size = kernel_size;
        k.stride = stride;
        k.kind = kind;
        k.c_in = c_in;
        k.c_out = c_out;
        k.weights.assign(k.offset_count(), Matrix(c_in, c_out));
        k.validate();
        return k;
    }

    // Identity 1x1 kernel (requires c_in == c_out).
    static KernelWeights identity(int dim, int channels, ConvKind kind = ConvKind::kSubmanifold) {
        KernelWeights k = zeros(dim, 1, 1, kind, channels, channels);
        for (int c = 0; c < channels; ++c) k.weights[0](c, c) = 1.0;
        return k;
    }

    // Seeded uniform init in +-sqrt(1 / fan_in), fan_in = c_in * K^D.
    static KernelWeights random(int dim, int kernel_size, int stride, ConvKind kind, int c_in,
                                int c_out, std::uint64_t seed) {
        KernelWeights k = zeros(dim, kernel_size, stride, kind, c_in, c_out);
        Rng rng(seed);
        const double bound = std::sqrt(1.0 / (static_cast<double>(c_in) * k.offset_count()));
        for (Matrix& w : k.weights) {
            for (double& v : w.data()) v = rng.uniform(-bound, bound);
        }
        return k;
    }
};

// The input-output mapping: per kernel offset, the list of (input_row,
// output_row) pairs, plus the output coordinate list.
template <typename CoordT>
struct RulebookT {
    struct Pair {
        std::int64_t in;
        std::int64_t out;
    };
    std::vector<std::vector<Pair>> pairs;  // indexed by kernel offset
    std::vector<CoordT> out_coords;

    std::uint64_t total_pairs() const {
        std::uint64_t n = 0;
        for (const auto& p : pairs) n += p.size();
        return n;
    }

    // Approximate mapping footprint: two 4-byte row indices per pair plus the
    // output coordinates. Reported separately from activations.
    std::uint64_t bytes() const {
        return total_pairs() * 8 + out_coords.size() * sizeof(CoordT);
    }
};

using Rulebook3 = RulebookT<Coord3>;
using Rulebook2 = RulebookT<Coord2>;

namespace detail {

inline std::array<std::int32_t, 3> coord_array(const Coord3& c) { return {c.x, c.y, c.z}; }
inline std::array<std::int32_t, 3> coord_array(const Coord2& c) { return {c.u, c.v, 0}; }
inline void coord_assign(Coord3& c, const std::array<std::int32_t, 3>& a) {
    c = Coord3{a[0], a[1], a[2]};
}
inline void coord_assign(Coord2& c, const std::array<std::int32_t, 3>& a) {
    c = Coord2{a[0], a[1]};
}

template <typename CoordT>
bool in_bound(const std::array<std::int32_t, 3>& a, const std::array<std::int32_t, 3>& bound,
              int dim) {
    for (int ax = 0; ax < dim; ++ax) {
        if (a[ax] < 0 || a[ax] >= bound[ax]) return false;
    }
    return true;
}

}  // namespace detail

// Builds the input-output mapping for one layer. For submanifold kernels the
// output coordinates equal the input coordinates; for generative kernels the
// output set is every coordinate q with s*q = p - delta for some input p and
// offset delta (exact divisibility per axis), sorted canonically. When
// `bound` is given, generative outputs are clipped to [0, bound) per axis
// (zero-padding "same" semantics on a finite grid).
template <typename CoordT>
RulebookT<CoordT> build_rulebook(const std::vector<CoordT>& coords_in, const KernelWeights& kernel,
                                 const CoordIndexT<CoordT>& index,
                                 const std::array<std::int32_t, 3>* bound = nullptr) {
    kernel.validate();
    const int n_off = kernel.offset_count();
    const int s = kernel.stride;

    RulebookT<CoordT> rb;
    rb.pairs.resize(n_off);

    if (kernel.kind == ConvKind::kSubmanifold) {
        rb.out_coords = coords_in;
    } else {
        std::vector<CoordT> candidates;
        candidates.reserve(coords_in.size() * n_off);
        for (const CoordT& p : coords_in) {
            const auto pa = detail::coord_array(p);
            for (int o = 0; o < n_off; ++o) {
                const auto d = kernel.offset(o);
                std::array<std::int32_t, 3> q = {0, 0, 0};
                bool ok = true;
                for (int ax = 0; ax < kernel.dim; ++ax) {
                    const std::int32_t num = pa[ax] - d[ax];
                    if (num % s != 0) {
                        ok = false;
                        break;
                    }
                    q[ax] = num / s;
                }
                if (!ok) continue;
                if (bound != nullptr && !detail::in_bound<CoordT>(q, *bound, kernel.dim)) continue;
                CoordT qc;
                detail::coord_assign(qc, q);
                candidates.push_back(qc);
            }
        }
        std::sort(candidates.begin(), candidates.end());
        candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
        rb.out_coords = std::move(candidates);
    }

    // Pair search: input coordinate for output q under offset delta is
    // s*q + delta; presence is checked against the input hash index.
    for (int o = 0; o < n_off; ++o) {
        const auto d = kernel.offset(o);
        auto& pr = rb.pairs[o];
        for (std::int64_t j = 0; j < static_cast<std::int64_t>(rb.out_coords.size()); ++j) {
            const auto qa = detail::coord_array(rb.out_coords[j]);
            std::array<std::int32_t, 3> pa = {0, 0, 0};
            for (int ax = 0; ax < kernel.dim; ++ax) pa[ax] = s * qa[ax] + d[ax];
            CoordT pc;
            detail::coord_assign(pc, pa);
            const std::int64_t i = index.lookup(pc);
            if (i != CoordIndexT<CoordT>::kNotFound) pr.push_back({i, j});
        }
    }
    return rb;
}

struct ConvStats {
    std::uint64_t pairs = 0;
    std::uint64_t flops = 0;
    std::uint64_t activation_bytes = 0;
    std::uint64_t rulebook_bytes = 0;
};

namespace detail {

// Gather-GEMM-scatter execution over a prebuilt rulebook. Offsets are
// processed in enumeration order and pairs in recorded order, so per-output
// accumulation order is fixed and results are bit-reproducible.
template <typename CoordT>
Matrix execute_rulebook(const Matrix& in_feats, const RulebookT<CoordT>& rb,
                        const KernelWeights& kernel) {
    const std::int64_t c_in = kernel.c_in;
    const std::int64_t c_out = kernel.c_out;
    Matrix out(static_cast<std::int64_t>(rb.out_coords.size()), c_out);

    Matrix gathered;
    Matrix product;
    for (std::size_t o = 0; o < rb.pairs.size(); ++o) {
        const auto& pr = rb.pairs[o];
        if (pr.empty()) continue;
        const std::int64_t n = static_cast<std::int64_t>(pr.size());

        gathered = Matrix(n, c_in);
        for (std::int64_t t = 0; t < n; ++t) {
            std::copy(in_feats.row_ptr(pr[t].in), in_feats.row_ptr(pr[t].in) + c_in,
                      gathered.row_ptr(t));
        }

        // one matrix-matrix multiply per offset
        const Matrix& w = kernel.weights[o];
        product = Matrix(n, c_out);
        for (std::int64_t i = 0; i < n; ++i) {
            const double* g = gathered.row_ptr(i);
            double* p = product.row_ptr(i);
            for (std::int64_t k = 0; k < c_in; ++k) {
                const double a = g[k];
                const double* wrow = w.row_ptr(k);
                for (std::int64_t j = 0; j < c_out; ++j) p[j] += a * wrow[j];
            }
        }

        for (std::int64_t t = 0; t < n; ++t) {
            const double* p = product.row_ptr(t);
            double* dst = out.row_ptr(pr[t].out);
            for (std::int64_t j = 0; j < c_out; ++j) dst[j] += p[j];
        }
    }
    return out;
}

}  // namespace detail

struct Conv3Result {
    SparseVoxelTensor out;
    Rulebook3 rulebook;
    ConvStats stats;
};

struct Conv2Result {
    SparseBEVTensor out;
    Rulebook2 rulebook;
    ConvStats stats;
};

namespace detail {

inline ConvStats conv_stats(std::uint64_t pairs, std::uint64_t n_out, const KernelWeights& k,
                            std::uint64_t rulebook_bytes) {
    ConvStats s;
    s.pairs = pairs;
    s.flops = 2ull * k.c_in * k.c_out * pairs;
    s.activation_bytes = n_out * static_cast<std::uint64_t>(k.c_out) * 4ull;
    s.rulebook_bytes = rulebook_bytes;
    return s;
}

}  // namespace detail

// 3D sparse convolution. `bound` optionally clips generative outputs to a
// finite grid; without it the coordinate set grows freely.
inline Conv3Result conv3_run(const SparseVoxelTensor& t, const KernelWeights& kernel,
                             const std::array<std::int32_t, 3>* bound = nullptr) {
    if (kernel.dim != 3) throw ConfigError("3D tensor requires a 3D kernel");
    if (t.channels() != kernel.c_in) {
        throw ShapeError("channel mismatch: tensor has " + std::to_string(t.channels()) +
                         ", kernel expects " + std::to_string(kernel.c_in));
    }
    Conv3Result r;
    const CoordIndex index(t.coords);
    r.rulebook = build_rulebook(t.coords, kernel, index, bound);
    r.out.coords = r.rulebook.out_coords;
    r.out.feats = detail::execute_rulebook(t.feats, r.rulebook, kernel);
    r.stats = detail::conv_stats(r.rulebook.total_pairs(), r.out.coords.size(), kernel,
                                 r.rulebook.bytes());
    return r;
}

// 2D sparse convolution on a BEV tensor. Outputs are always clipped to the
// grid extent; stride shrinks the extent to ceil(extent / stride).
inline Conv2Result conv2_run(const SparseBEVTensor& t, const KernelWeights& kernel) {
    if (kernel.dim != 2) throw ConfigError("BEV tensor requires a 2D kernel");
    if (t.channels() != kernel.c_in) {
        throw ShapeError("channel mismatch: tensor has " + std::to_string(t.channels()) +
                         ", kernel expects " + std::to_string(kernel.c_in));
    }
    const Extent2 out_extent{(t.extent.w + kernel.stride - 1) / kernel.stride,
                             (t.extent.h + kernel.stride - 1) / kernel.stride};
    const std::array<std::int32_t, 3> bound = {out_extent.w, out_extent.h, 1};

    Conv2Result r;
    const CoordIndex2 index(t.coords);
    r.rulebook = build_rulebook(t.coords, kernel, index, &bound);
    r.out.coords = r.rulebook.out_coords;
    r.out.feats = detail::execute_rulebook(t.feats, r.rulebook, kernel);
    r.out.extent = out_extent;
    r.stats = detail::conv_stats(r.rulebook.total_pairs(), r.out.coords.size(), kernel,
                                 r.rulebook.bytes());
    return r;
}

// Spec-shaped wrappers: run the convolution and log cost into the ledger.
inline SparseVoxelTensor sparse_conv(const SparseVoxelTensor& t, const KernelWeights& kernel,
                                     CostLedger& ledger, const std::string& name = "conv3d") {
    Conv3Result r = conv3_run(t, kernel);
    ledger.log(LayerCost{name, Domain::kThreeD, r.stats.flops, r.stats.activation_bytes,
                         r.stats.pairs, r.stats.rulebook_bytes, 0.0, 0.0});
    return std::move(r.out);
}

inline SparseBEVTensor sparse_conv(const SparseBEVTensor& t, const KernelWeights& kernel,
                                   CostLedger& ledger, const std::string& name = "conv2d") {
    Conv2Result r = conv2_run(t, kernel);
    const double rate = r.out.dense_rate();
    ledger.log(LayerCost{name, Domain::kTwoD, r.stats.flops, r.stats.activation_bytes,
                         r.stats.pairs, r.stats.rulebook_bytes, rate, rate});
    return std::move(r.out);
}

// Dense D-dimensional array, channel-major: data[((c*X + x)*Y + y)*Z + z].
// Unused trailing axes have extent 1.
struct DenseGrid {
    int dim = 3;
    int channels = 1;
    std::array<std::int32_t, 3> extent = {1, 1, 1};
    std::vector<double> data;

    DenseGrid() = default;
    DenseGrid(int dim, int channels, std::array<std::int32_t, 3> ext)
        : dim(dim), channels(channels), extent(ext) {
        for (int a = dim; a < 3; ++a) extent[a] = 1;
        data.assign(static_cast<std::size_t>(channels) * extent[0] * extent[1] * extent[2], 0.0);
    }

    double& at(int c, int x, int y, int z = 0) {
        return data[((static_cast<std::size_t>(c) * extent[0] + x) * extent[1] + y) * extent[2] + z];
    }
    double at(int c, int x, int y, int z = 0) const {
        return data[((static_cast<std::size_t>(c) * extent[0] + x) * extent[1] + y) * extent[2] + z];
    }

    bool inside(int x, int y, int z) const {
        return x >= 0 && y >= 0 && z >= 0 && x < extent[0] && y < extent[1] && z < extent[2];
    }
};

inline DenseGrid densify(const SparseVoxelTensor& t, std::array<std::int32_t, 3> extent) {
    DenseGrid g(3, static_cast<int>(t.channels()), extent);
    for (std::int64_t i = 0; i < t.size(); ++i) {
        const Coord3& c = t.coords[i];
        if (!g.inside(c.x, c.y, c.z)) throw ShapeError("voxel outside densification extent");
        for (std::int64_t ch = 0; ch < t.channels(); ++ch) {
            g.at(static_cast<int>(ch), c.x, c.y, c.z) = t.feats(i, ch);
        }
    }
    return g;
}

inline DenseGrid densify(const SparseBEVTensor& t) {
    DenseGrid g(2, static_cast<int>(t.channels()), {t.extent.w, t.extent.h, 1});
    for (std::int64_t i = 0; i < t.size(); ++i) {
        const Coord2& c = t.coords[i];
        for (std::int64_t ch = 0; ch < t.channels(); ++ch) {
            g.at(static_cast<int>(ch), c.u, c.v) = t.feats(i, ch);
        }
    }
    return g;
}

// Reference direct convolution: cross-correlation with zero padding and the
// same spatial extent, stride 1. Small extents only; this is the equivalence
// oracle for the sparse path, not a production kernel.
inline DenseGrid dense_conv_oracle(const DenseGrid& in, const KernelWeights& kernel) {
    kernel.validate();
    if (kernel.dim != in.dim) throw ConfigError("oracle: kernel/grid dimensionality mismatch");
    if (in.channels != kernel.c_in) throw ShapeError("oracle: channel mismatch");
    if (kernel.stride != 1) throw OracleLimit("oracle supports stride 1 only");
    for (int a = 0; a < in.dim; ++a) {
        if (in.extent[a] > 32) throw OracleLimit("oracle extent limited to 32 per axis");
    }

    DenseGrid out(in.dim, kernel.c_out, in.extent);
    const int n_off = kernel.offset_count();
    for (int x = 0; x < in.extent[0]; ++x) {
        for (int y = 0; y < in.extent[1]; ++y) {
            for (int z = 0; z < in.extent[2]; ++z) {
                for (int o = 0; o < n_off; ++o) {
                    const auto d = kernel.offset(o);
                    const int sx = x + d[0], sy = y + d[1], sz = z + d[2];
                    if (!in.inside(sx, sy, sz)) continue;
                    const Matrix& w = kernel.weights[o];
                    for (int co = 0; co < kernel.c_out; ++co) {
                        double acc = 0.0;
                        for (int ci = 0; ci < kernel.c_in; ++ci) {
                            acc += w(ci, co) * in.at(ci, sx, sy, sz);
                        }
                        out.at(co, x, y, z) += acc;
                    }
                }
            }
        }
    }
    return out;
}

}  // namespace svox
