#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "svox/box.hpp"
#include "svox/core.hpp"
#include "svox/error.hpp"
#include "svox/rng.hpp"
#include "svox/voxelize.hpp"

namespace svox {

// One object box in scene (meter) coordinates, with the number of cloud
// points to generate inside it.
struct SceneBoxSpec {
    double center_x = 0.0;
    double center_y = 0.0;
    double half_x = 1.0;
    double half_y = 2.0;
    double yaw = 0.0;
    double height = 1.6;
    int points = 400;
};

// Desk-scale synthetic stand-in for a Lidar scene: a noisy ground plane,
// radially thinning clutter (points per unit BEV area fall off as
// 1 / r^exponent), and dense clusters inside the ground-truth boxes. The
// sensor sits at the BEV origin; the scene spans +-extent/2 in x and y.
struct SceneSpec {
    double extent_m[3] = {51.2, 51.2, 4.0};
    int ground_points = 20000;
    int clutter_points = 5000;
    double radial_exponent = 2.0;
    std::uint64_t seed = 0;
    std::vector<SceneBoxSpec> boxes;
    // When > 0, this many extra boxes are placed at seeded random positions.
    int random_boxes = 0;

    void validate() const {
        if (extent_m[0] <= 0 || extent_m[1] <= 0 || extent_m[2] <= 0) {
            throw ConfigError("scene extent must be positive");
        }
        if (ground_points < 0 || clutter_points < 0 || random_boxes < 0) {
            throw ConfigError("scene point counts must be non-negative");
        }
        for (const SceneBoxSpec& b : boxes) {
            if (b.half_x <= 0 || b.half_y <= 0 || b.points < 0) {
                throw ConfigError("box half extents must be positive and points non-negative");
            }
            const double reach = std::hypot(b.half_x, b.half_y);
            if (std::abs(b.center_x) + reach > extent_m[0] / 2 ||
                std::abs(b.center_y) + reach > extent_m[1] / 2) {
                throw ConfigError("ground-truth box extends outside the scene");
            }
        }
    }
};

enum class PointLabel : std::uint8_t { kGround = 0, kClutter = 1, kBox = 2 };

struct Scene {
    std::vector<PointXYZR> points;
    std::vector<PointLabel> labels;
    std::vector<SceneBoxSpec> boxes;  // explicit boxes plus any randomized ones
};

namespace detail {

// Radius sample for area density ~ r^-e over [r0, r1]: marginal pdf ~ r^(1-e).
inline double sample_radius(Rng& rng, double r0, double r1, double e) {
    const double u = rng.uniform();
    if (std::abs(e - 2.0) < 1e-12) {
        return r0 * std::pow(r1 / r0, u);
    }
    const double t = 2.0 - e;
    return std::pow(u * (std::pow(r1, t) - std::pow(r0, t)) + std::pow(r0, t), 1.0 / t);
}

}  // namespace detail

inline Scene generate_scene(const SceneSpec& spec) {
    spec.validate();
    Scene scene;
    scene.boxes = spec.boxes;
    Rng rng(spec.seed);

    const double hx = spec.extent_m[0] / 2.0;
    const double hy = spec.extent_m[1] / 2.0;

    if (spec.random_boxes > 0) {
        const double r_lo = 4.0;
        const double r_hi = 0.9 * std::min(hx, hy);
        for (int i = 0; i < spec.random_boxes; ++i) {
            SceneBoxSpec b;
            // retry until the box fits inside the scene bounds
            for (int attempt = 0; attempt < 64; ++attempt) {
                const double rad = rng.uniform(r_lo, r_hi);
                const double theta = rng.uniform(0.0, 2.0 * M_PI);
                b.center_x = rad * std::cos(theta);
                b.center_y = rad * std::sin(theta);
                b.half_x = rng.uniform(0.8, 1.4);
                b.half_y = rng.uniform(1.4, 2.4);
                b.yaw = rng.uniform(0.0, 2.0 * M_PI);
                // return count falls off with range like the rest of the cloud
                const double area = 4.0 * b.half_x * b.half_y;
                const double expected = 700.0 * area / (rad * rad);
                b.points = static_cast<int>(std::clamp(expected, 20.0, 700.0));
                const double reach = std::hypot(b.half_x, b.half_y);
                if (std::abs(b.center_x) + reach <= hx && std::abs(b.center_y) + reach <= hy) {
                    break;
                }
            }
            scene.boxes.push_back(b);
        }
    }

    const std::size_t total = static_cast<std::size_t>(spec.ground_points) + spec.clutter_points;
    scene.points.reserve(total);
    scene.labels.reserve(total);

    // ground returns thin out with range like real Lidar rings; radii beyond
    // the square bounds are rejected so the corners still receive coverage
    const double r_corner = std::hypot(hx, hy);
    for (int i = 0; i < spec.ground_points; ++i) {
        PointXYZR p;
        do {
            const double rad = detail::sample_radius(rng, 1.0, r_corner, spec.radial_exponent);
            const double theta = rng.uniform(0.0, 2.0 * M_PI);
            p.x = rad * std::cos(theta);
            p.y = rad * std::sin(theta);
        } while (p.x < -hx || p.x > hx || p.y < -hy || p.y > hy);
        p.z = rng.normal(0.0, 0.02);
        p.r = rng.uniform();
        scene.points.push_back(p);
        scene.labels.push_back(PointLabel::kGround);
    }

    const double z_top = std::min(2.5, spec.extent_m[2] * 0.75);
    const double r_max = std::min(hx, hy);  // keeps every sample inside the bounds
    for (int i = 0; i < spec.clutter_points; ++i) {
        const double rad = detail::sample_radius(rng, 1.0, r_max, spec.radial_exponent);
        const double theta = rng.uniform(0.0, 2.0 * M_PI);
        PointXYZR p;
        p.x = rad * std::cos(theta);
        p.y = rad * std::sin(theta);
        p.z = rng.uniform(0.05, z_top);
        p.r = rng.uniform();
        scene.points.push_back(p);
        scene.labels.push_back(PointLabel::kClutter);
    }

    for (const SceneBoxSpec& b : scene.boxes) {
        const double c = std::cos(b.yaw);
        const double s = std::sin(b.yaw);
        for (int i = 0; i < b.points; ++i) {
            const double lu = rng.uniform(-b.half_x, b.half_x);
            const double lv = rng.uniform(-b.half_y, b.half_y);
            PointXYZR p;
            p.x = b.center_x + c * lu - s * lv;
            p.y = b.center_y + s * lu + c * lv;
            p.z = rng.uniform(0.05, b.height);
            p.r = rng.uniform();
            scene.points.push_back(p);
            scene.labels.push_back(PointLabel::kBox);
        }
    }
    return scene;
}

// Meter-space box -> BEV cell units of the given grid, optionally at a
// coarser (downsampled) resolution. Yawed boxes assume square xy voxels.
inline GroundTruthBox box_to_cells(const SceneBoxSpec& b, const VoxelGridSpec& grid,
                                   double downsample = 1.0) {
    GroundTruthBox out;
    out.center_u = (b.center_x - grid.origin[0]) / grid.voxel_size[0] / downsample;
    out.center_v = (b.center_y - grid.origin[1]) / grid.voxel_size[1] / downsample;
    out.half_u = b.half_x / grid.voxel_size[0] / downsample;
    out.half_v = b.half_y / grid.voxel_size[1] / downsample;
    out.yaw = b.yaw;
    return out;
}

inline std::vector<GroundTruthBox> boxes_to_cells(const std::vector<SceneBoxSpec>& boxes,
                                                  const VoxelGridSpec& grid,
                                                  double downsample = 1.0) {
    std::vector<GroundTruthBox> out;
    out.reserve(boxes.size());
    for (const SceneBoxSpec& b : boxes) out.push_back(box_to_cells(b, grid, downsample));
    return out;
}

}  // namespace svox
