// Copyright Contributors to the splatc project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "splatc/core.hpp"
#include "splatc/image.hpp"
#include "splatc/parallel.hpp"
#include "splatc/splat_io.hpp"

namespace splatc {

struct PatchGridConfig {
    int patch_size = 32;
    /// Patches holding fewer keypoints than this are densified.
    int min_keypoints_per_patch = 2;
    int samples_per_patch = 4;
    std::uint64_t rng_seed = 0;

    void validate() const {
        if (patch_size < 4 || samples_per_patch < 1 || min_keypoints_per_patch < 0) {
            throw InvalidArgument("invalid patch grid configuration");
        }
    }
};

/// Half-open pixel rectangle [x0, x0 + width) x [y0, y0 + height).
struct PatchRect {
    int x0 = 0;
    int y0 = 0;
    int width = 0;
    int height = 0;

    bool contains(double u, double v) const {
        return u >= x0 && u < x0 + width && v >= y0 && v < y0 + height;
    }
};

struct PatchGrid {
    int image_width = 0;
    int image_height = 0;
    int patch_size = 0;
    int cols = 0;
    int rows = 0;
    /// Row-major.
    std::vector<PatchRect> patches;

    /// Patch holding pixel coordinate (u, v), or -1 outside the image.
    long patch_of(double u, double v) const {
        if (!(u >= 0.0 && v >= 0.0 && u < image_width && v < image_height)) {
            return -1;
        }
        const int c = static_cast<int>(u) / patch_size;
        const int r = static_cast<int>(v) / patch_size;
        return static_cast<long>(r) * cols + c;
    }
};

inline PatchGrid partition_patches(int width, int height, const PatchGridConfig &cfg) {
    cfg.validate();
    if (width <= 0 || height <= 0) {
        throw InvalidArgument("image dimensions must be positive");
    }
    PatchGrid grid;
    grid.image_width = width;
    grid.image_height = height;
    grid.patch_size = cfg.patch_size;
    grid.cols = (width + cfg.patch_size - 1) / cfg.patch_size;
    grid.rows = (height + cfg.patch_size - 1) / cfg.patch_size;
    grid.patches.reserve(static_cast<std::size_t>(grid.cols) * static_cast<std::size_t>(grid.rows));
    for (int r = 0; r < grid.rows; ++r) {
        for (int c = 0; c < grid.cols; ++c) {
            const int x0 = c * cfg.patch_size;
            const int y0 = r * cfg.patch_size;
            grid.patches.push_back({x0, y0, std::min(cfg.patch_size, width - x0),
                                    std::min(cfg.patch_size, height - y0)});
        }
    }
    return grid;
}

enum class PointSource { keypoint, pg_sample };

struct SampledPoint {
    double u = 0.0;
    double v = 0.0;
    /// Meters; NaN until assigned.
    double depth = std::numeric_limits<double>::quiet_NaN();
    PointSource source = PointSource::keypoint;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Uniform double in [0, 1) from the top 53 bits.
inline double unit_uniform(std::mt19937_64 &rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Stratified jittered samples inside one patch: the patch is cut into a
/// ceil(sqrt(n)) square grid, n cells are picked in seeded random order and
/// one uniform point is drawn per cell.
inline void stratified_samples(const PatchRect &patch, int n, std::uint64_t seed,
                               std::vector<SampledPoint> &out) {
    std::mt19937_64 rng(seed);
    const int g = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
    std::vector<int> cells(static_cast<std::size_t>(g * g));
    for (int k = 0; k < g * g; ++k) {
        cells[static_cast<std::size_t>(k)] = k;
    }
    // Fisher-Yates with the portable uniform above.
    for (int k = g * g - 1; k > 0; --k) {
        const int pick = std::min(k, static_cast<int>(unit_uniform(rng) * (k + 1)));
        std::swap(cells[static_cast<std::size_t>(k)], cells[static_cast<std::size_t>(pick)]);
    }
    const double cw = static_cast<double>(patch.width) / g;
    const double ch = static_cast<double>(patch.height) / g;
    const double u_max = std::nextafter(static_cast<double>(patch.x0 + patch.width), 0.0);
    const double v_max = std::nextafter(static_cast<double>(patch.y0 + patch.height), 0.0);
    for (int k = 0; k < n; ++k) {
        const int cell = cells[static_cast<std::size_t>(k)];
        const int cx = cell % g;
        const int cy = cell / g;
        SampledPoint p;
        p.u = std::min(u_max, patch.x0 + (cx + unit_uniform(rng)) * cw);
        p.v = std::min(v_max, patch.y0 + (cy + unit_uniform(rng)) * ch);
        p.source = PointSource::pg_sample;
        out.push_back(p);
    }
}

} // namespace detail

struct SamplingResult {
    /// Keypoints first (input order), then samples in patch row-major order.
    std::vector<SampledPoint> points;
    std::size_t sparse_patches = 0;
    std::size_t samples_added = 0;
};

/// Densifies patches whose keypoint count is below the threshold.
inline SamplingResult sample_sparse_patches(std::span<const KeypointRecord> keypoints,
                                            const PatchGrid &grid, const PatchGridConfig &cfg) {
    cfg.validate();
    std::vector<int> counts(grid.patches.size(), 0);
    SamplingResult res;
    res.points.reserve(keypoints.size());
    for (const auto &kp : keypoints) {
        const long p = grid.patch_of(kp.u, kp.v);
        if (p >= 0) {
            ++counts[static_cast<std::size_t>(p)];
        }
        res.points.push_back({kp.u, kp.v, kp.has_depth() ? kp.depth
                                                         : std::numeric_limits<double>::quiet_NaN(),
                              PointSource::keypoint});
    }

    std::vector<std::vector<SampledPoint>> per_patch(grid.patches.size());
    parallel_for(grid.patches.size(), [&](std::size_t p) {
        if (counts[p] < cfg.min_keypoints_per_patch) {
            const std::uint64_t seed = detail::splitmix64(cfg.rng_seed ^ detail::splitmix64(p));
            detail::stratified_samples(grid.patches[p], cfg.samples_per_patch, seed, per_patch[p]);
        }
    });
    for (const auto &samples : per_patch) {
        if (!samples.empty()) {
            ++res.sparse_patches;
        }
        res.samples_added += samples.size();
        res.points.insert(res.points.end(), samples.begin(), samples.end());
    }
    return res;
}

/// Keypoints that carry a usable depth, with their original indices.
struct DepthAnchors {
    std::vector<double> u;
    std::vector<double> v;
    std::vector<double> depth;

    explicit DepthAnchors(std::span<const KeypointRecord> keypoints) {
        for (const auto &kp : keypoints) {
            if (kp.has_depth()) {
                u.push_back(kp.u);
                v.push_back(kp.v);
                depth.push_back(kp.depth);
            }
        }
    }

    bool empty() const noexcept { return depth.empty(); }

    /// Depth of the nearest anchor in pixel space; ties go to the lowest index.
    std::optional<double> nearest(double pu, double pv) const {
        std::optional<double> best;
        double best_d2 = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < depth.size(); ++k) {
            const double du = u[k] - pu;
            const double dv = v[k] - pv;
            const double d2 = du * du + dv * dv;
            if (d2 < best_d2) {
                best_d2 = d2;
                best = depth[k];
            }
        }
        return best;
    }
};

/// Sensor depth at the rounded pixel when valid, else nearest keypoint depth.
/// Returns nullopt when neither source exists.
inline std::optional<SampledPoint> assign_depth(const SampledPoint &point, const Image *depth_image,
                                                const DepthAnchors &anchors) {
    SampledPoint out = point;
    if (depth_image != nullptr && !depth_image->empty()) {
        const int x = std::clamp(static_cast<int>(std::lround(point.u)), 0, depth_image->width - 1);
        const int y = std::clamp(static_cast<int>(std::lround(point.v)), 0, depth_image->height - 1);
        const double d = depth_image->at(x, y);
        if (std::isfinite(d) && d > 0.0) {
            out.depth = d;
            return out;
        }
    }
    if (const auto d = anchors.nearest(point.u, point.v)) {
        out.depth = *d;
        return out;
    }
    return std::nullopt;
}

struct DepthAssignment {
    std::vector<SampledPoint> points;
    std::size_t skipped = 0;
};

inline DepthAssignment assign_depths(std::span<const SampledPoint> points, const Image *depth_image,
                                     std::span<const KeypointRecord> keypoints) {
    const DepthAnchors anchors(keypoints);
    std::vector<std::optional<SampledPoint>> assigned(points.size());
    parallel_for(points.size(), [&](std::size_t k) {
        assigned[k] = assign_depth(points[k], depth_image, anchors);
    });
    DepthAssignment res;
    res.points.reserve(points.size());
    for (auto &p : assigned) {
        if (p) {
            res.points.push_back(*p);
        } else {
            ++res.skipped;
        }
    }
    return res;
}

struct InitializationResult {
    std::vector<GaussianPrimitive> primitives;
    std::size_t skipped = 0;
};

/// Upper clamp of the initial isotropic scale (meters).
inline constexpr double kMaxInitialScale = 0.5;

/// Back-projects depth-assigned points into world-frame primitives.
///
/// Scale is the mean distance to the three nearest other points of the batch,
/// clamped to [kScaleEpsilon, kMaxInitialScale]; colors are read from `rgb`
/// at the rounded pixel (mid-gray when rgb is empty).
inline InitializationResult initialize_primitives(std::span<const SampledPoint> points,
                                                  const CameraPose &pose,
                                                  const PinholeIntrinsics &intr, const Image &rgb,
                                                  std::uint64_t first_insertion_index = 0,
                                                  std::uint32_t keyframe_index = 0) {
    intr.validate();
    if (!rgb.empty() && rgb.channels != 3) {
        throw InvalidArgument("rgb image must have three channels");
    }
    InitializationResult res;
    std::vector<const SampledPoint *> valid;
    valid.reserve(points.size());
    for (const auto &p : points) {
        if (std::isfinite(p.depth) && p.depth > 0.0) {
            valid.push_back(&p);
        } else {
            ++res.skipped;
        }
    }
    std::vector<Vec3> world(valid.size());
    for (std::size_t k = 0; k < valid.size(); ++k) {
        world[k] = pose.to_world(intr.back_project(valid[k]->u, valid[k]->v, valid[k]->depth));
    }

    std::vector<double> scale(valid.size(), kMaxInitialScale);
    parallel_for(valid.size(), [&](std::size_t k) {
        std::array<double, 3> nearest{};
        nearest.fill(std::numeric_limits<double>::infinity());
        for (std::size_t o = 0; o < world.size(); ++o) {
            if (o == k) {
                continue;
            }
            const double d = (world[o] - world[k]).norm();
            if (d < nearest[2]) {
                nearest[2] = d;
                std::sort(nearest.begin(), nearest.end());
            }
        }
        double sum = 0.0;
        int n = 0;
        for (double d : nearest) {
            if (std::isfinite(d)) {
                sum += d;
                ++n;
            }
        }
        scale[k] = n == 0 ? kMaxInitialScale
                          : std::clamp(sum / n, kScaleEpsilon, kMaxInitialScale);
    });

    res.primitives.reserve(valid.size());
    for (std::size_t k = 0; k < valid.size(); ++k) {
        GaussianPrimitive g;
        g.mean = world[k];
        g.rotation = Quat::Identity();
        g.scale = Vec3::Constant(scale[k]);
        g.opacity = 0.5;
        Vec3 color = Vec3::Constant(0.5);
        if (!rgb.empty()) {
            const int x = std::clamp(static_cast<int>(std::lround(valid[k]->u)), 0, rgb.width - 1);
            const int y = std::clamp(static_cast<int>(std::lround(valid[k]->v)), 0, rgb.height - 1);
            color = {rgb.at(x, y, 0), rgb.at(x, y, 1), rgb.at(x, y, 2)};
        }
        g.color = color_to_sh(color);
        g.grad_stat = 0.0;
        g.insertion_index = first_insertion_index + k;
        g.keyframe_index = keyframe_index;
        res.primitives.push_back(enforce_invariants(g));
    }
    return res;
}

} // namespace splatc
