#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "svox/error.hpp"

namespace svox {

// Integer 3D grid cell index.
struct Coord3 {
    std::int32_t x = 0;
    std::int32_t y = 0;
    std::int32_t z = 0;

    friend auto operator<=>(const Coord3&, const Coord3&) = default;
};

// Integer BEV pixel index.
struct Coord2 {
    std::int32_t u = 0;
    std::int32_t v = 0;

    friend auto operator<=>(const Coord2&, const Coord2&) = default;
};

// BEV grid size in cells.
struct Extent2 {
    std::int32_t w = 0;
    std::int32_t h = 0;

    friend bool operator==(const Extent2&, const Extent2&) = default;
    std::int64_t cells() const { return static_cast<std::int64_t>(w) * h; }
    bool contains(const Coord2& c) const {
        return c.u >= 0 && c.v >= 0 && c.u < w && c.v < h;
    }
};

// Dense row-major matrix of N rows x C feature channels.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::int64_t rows, std::int64_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows * cols), fill) {}

    std::int64_t rows() const { return rows_; }
    std::int64_t cols() const { return cols_; }

    double& operator()(std::int64_t r, std::int64_t c) { return data_[r * cols_ + c]; }
    double operator()(std::int64_t r, std::int64_t c) const { return data_[r * cols_ + c]; }

    double* row_ptr(std::int64_t r) { return data_.data() + r * cols_; }
    const double* row_ptr(std::int64_t r) const { return data_.data() + r * cols_; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::int64_t rows_ = 0;
    std::int64_t cols_ = 0;
    std::vector<double> data_;
};

namespace detail {

// Coordinates are flattened into one 64-bit key, 21 bits per axis for 3D and
// 31 bits per axis for 2D. Collision-free within the supported range.
constexpr std::int32_t kCoordBound3 = 1 << 20;
constexpr std::int32_t kCoordBound2 = 1 << 30;

inline std::uint64_t flatten(const Coord3& c) {
    if (c.x <= -kCoordBound3 || c.x >= kCoordBound3 || c.y <= -kCoordBound3 ||
        c.y >= kCoordBound3 || c.z <= -kCoordBound3 || c.z >= kCoordBound3) {
        throw InvalidInput("coordinate out of indexable range (+-2^20 per axis)");
    }
    const std::uint64_t ux = static_cast<std::uint64_t>(c.x + kCoordBound3);
    const std::uint64_t uy = static_cast<std::uint64_t>(c.y + kCoordBound3);
    const std::uint64_t uz = static_cast<std::uint64_t>(c.z + kCoordBound3);
    return (ux << 42) | (uy << 21) | uz;
}

inline std::uint64_t flatten(const Coord2& c) {
    if (c.u <= -kCoordBound2 || c.u >= kCoordBound2 || c.v <= -kCoordBound2 ||
        c.v >= kCoordBound2) {
        throw InvalidInput("coordinate out of indexable range (+-2^30 per axis)");
    }
    const std::uint64_t uu = static_cast<std::uint64_t>(static_cast<std::int64_t>(c.u) + kCoordBound2);
    const std::uint64_t uv = static_cast<std::uint64_t>(static_cast<std::int64_t>(c.v) + kCoordBound2);
    return (uu << 31) | uv;
}

}  // namespace detail

// Hash table from flattened coordinate key to row index. Lookup of an absent
// coordinate returns kNotFound.
template <typename CoordT>
class CoordIndexT {
public:
    static constexpr std::int64_t kNotFound = -1;

    CoordIndexT() = default;

    explicit CoordIndexT(const std::vector<CoordT>& coords) {
        map_.reserve(coords.size() * 2);
        for (std::size_t i = 0; i < coords.size(); ++i) {
            map_.emplace(detail::flatten(coords[i]), static_cast<std::int64_t>(i));
        }
    }

    std::int64_t lookup(const CoordT& c) const {
        auto it = map_.find(detail::flatten(c));
        return it == map_.end() ? kNotFound : it->second;
    }

    bool contains(const CoordT& c) const { return lookup(c) != kNotFound; }
    std::size_t size() const { return map_.size(); }

private:
    std::unordered_map<std::uint64_t, std::int64_t> map_;
};

using CoordIndex = CoordIndexT<Coord3>;
using CoordIndex2 = CoordIndexT<Coord2>;

namespace detail {

template <typename CoordT>
void canonicalize_rows(std::vector<CoordT>& coords, Matrix& feats, bool reject_duplicates) {
    const std::int64_t n = static_cast<std::int64_t>(coords.size());
    if (feats.rows() != n) {
        throw ShapeError("coordinate count does not match feature row count");
    }
    std::vector<std::int64_t> order(n);
    for (std::int64_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
        return coords[a] < coords[b];
    });
    std::vector<CoordT> sorted_coords(n);
    Matrix sorted_feats(n, feats.cols());
    for (std::int64_t i = 0; i < n; ++i) {
        sorted_coords[i] = coords[order[i]];
        std::copy(feats.row_ptr(order[i]), feats.row_ptr(order[i]) + feats.cols(),
                  sorted_feats.row_ptr(i));
    }
    for (std::int64_t i = 1; i < n; ++i) {
        if (sorted_coords[i] == sorted_coords[i - 1] && reject_duplicates) {
            throw InvalidInput("duplicate coordinate in sparse tensor");
        }
    }
    coords = std::move(sorted_coords);
    feats = std::move(sorted_feats);
}

}  // namespace detail

// Set of 3D cells paired with feature vectors. Canonical form: coordinates
// unique and sorted lexicographically by (x, y, z), so equality is structural.
struct SparseVoxelTensor {
    std::vector<Coord3> coords;
    Matrix feats;

    SparseVoxelTensor() = default;

    // Sorts rows into canonical order; rejects duplicate coordinates.
    static SparseVoxelTensor canonical(std::vector<Coord3> coords, Matrix feats) {
        detail::canonicalize_rows(coords, feats, true);
        SparseVoxelTensor t;
        t.coords = std::move(coords);
        t.feats = std::move(feats);
        return t;
    }

    std::int64_t size() const { return static_cast<std::int64_t>(coords.size()); }
    std::int64_t channels() const { return feats.cols(); }
    bool empty() const { return coords.empty(); }

    friend bool operator==(const SparseVoxelTensor&, const SparseVoxelTensor&) = default;
};

// Set of BEV pixels paired with feature vectors, plus the owning grid extent.
struct SparseBEVTensor {
    std::vector<Coord2> coords;
    Matrix feats;
    Extent2 extent;

    SparseBEVTensor() = default;

    static SparseBEVTensor canonical(std::vector<Coord2> coords, Matrix feats, Extent2 extent) {
        detail::canonicalize_rows(coords, feats, true);
        for (const Coord2& c : coords) {
            if (!extent.contains(c)) {
                throw ShapeError("BEV coordinate outside grid extent");
            }
        }
        SparseBEVTensor t;
        t.coords = std::move(coords);
        t.feats = std::move(feats);
        t.extent = extent;
        return t;
    }

    std::int64_t size() const { return static_cast<std::int64_t>(coords.size()); }
    std::int64_t channels() const { return feats.cols(); }
    bool empty() const { return coords.empty(); }

    // Fraction of grid cells holding a stored feature.
    double dense_rate() const {
        return extent.cells() == 0 ? 0.0
                                   : static_cast<double>(size()) / static_cast<double>(extent.cells());
    }

    friend bool operator==(const SparseBEVTensor&, const SparseBEVTensor&) = default;
};

inline CoordIndex build_index(const SparseVoxelTensor& t) { return CoordIndex(t.coords); }
inline CoordIndex2 build_index(const SparseBEVTensor& t) { return CoordIndex2(t.coords); }

// Physical voxelization grid: world origin, cell size in meters, cell counts.
struct VoxelGridSpec {
    double origin[3] = {0.0, 0.0, 0.0};
    double voxel_size[3] = {1.0, 1.0, 1.0};
    std::int32_t extent[3] = {1, 1, 1};

    void validate() const {
        for (int a = 0; a < 3; ++a) {
            if (!(voxel_size[a] > 0.0)) throw ConfigError("voxel_size must be strictly positive");
            if (extent[a] <= 0) throw ConfigError("grid extent must be strictly positive");
        }
    }

    Extent2 bev_extent() const { return Extent2{extent[0], extent[1]}; }
};

}  // namespace svox
