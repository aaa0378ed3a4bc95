// Copyright Contributors to the splatc project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

#include "splatc/core.hpp"
#include "splatc/image.hpp"
#include "splatc/parallel.hpp"

namespace splatc {

/// Knobs of the forward splatting renderer. Defaults follow the usual 3DGS
/// stabilizers (screen-space dilation, alpha clamp, 3-sigma support).
struct RenderOptions {
    int tile_size = 16;
    double near = 0.01;
    /// Added to the diagonal of every screen covariance (pixels^2).
    double dilation = 0.3;
    double alpha_max = 0.99;
    /// Compositing stops once transmittance drops below this.
    double min_transmittance = 1e-4;
    /// Splats contribute only inside this many standard deviations.
    double cutoff_sigma = 3.0;
};

struct ProjectedSplat {
    Vec2 mean = Vec2::Zero();
    Mat2 cov = Mat2::Identity();
    /// Inverse of cov.
    Mat2 conic = Mat2::Identity();
    double depth = 0.0;
    double opacity = 0.0;
    Vec3 color = Vec3::Zero();
    /// Half extents of the support ellipse's bounding box.
    double half_width = 0.0;
    double half_height = 0.0;
};

/// Perspective projection of a primitive with the local affine (EWA)
/// approximation J W Sigma W^T J^T of its covariance. Returns nullopt when the
/// primitive is at or behind the near plane.
inline std::optional<ProjectedSplat> project(const GaussianPrimitive &g, const CameraPose &pose,
                                             const PinholeIntrinsics &intr,
                                             const RenderOptions &opt = {}) {
    const Vec3 pc = pose.to_camera(g.mean);
    if (!(pc.z() > opt.near)) {
        return std::nullopt;
    }
    const double z = pc.z();
    Eigen::Matrix<double, 2, 3> jac;
    jac << intr.fx / z, 0.0, -intr.fx * pc.x() / (z * z),
           0.0, intr.fy / z, -intr.fy * pc.y() / (z * z);
    const Mat3 &w = pose.rotation();
    const Mat3 cov3 = g.covariance().matrix();
    Mat2 cov2 = jac * w * cov3 * w.transpose() * jac.transpose();
    cov2 = 0.5 * (cov2 + cov2.transpose());
    cov2.diagonal().array() += opt.dilation;

    ProjectedSplat s;
    s.mean = intr.project(pc);
    s.cov = cov2;
    const double det = cov2.determinant();
    if (!(det > 0.0) || !std::isfinite(det)) {
        return std::nullopt;
    }
    s.conic << cov2(1, 1) / det, -cov2(0, 1) / det, -cov2(1, 0) / det, cov2(0, 0) / det;
    s.depth = z;
    s.opacity = g.opacity;
    s.color = sh_to_color(g.color);
    s.half_width = opt.cutoff_sigma * std::sqrt(cov2(0, 0));
    s.half_height = opt.cutoff_sigma * std::sqrt(cov2(1, 1));
    return s;
}

struct RenderedFrame {
    Image color;
    Image depth;
    Image transmittance;

    RenderedFrame() = default;
    RenderedFrame(int w, int h)
        : color(w, h, 3, 0.0), depth(w, h, 1, 0.0), transmittance(w, h, 1, 1.0) {}
};

/// Projects every primitive and returns the visible ones sorted front to back
/// (ties keep map order).
inline std::vector<ProjectedSplat> project_sorted(const SplatMap &map, const CameraPose &pose,
                                                  const PinholeIntrinsics &intr,
                                                  const RenderOptions &opt = {}) {
    std::vector<std::optional<ProjectedSplat>> all(map.size());
    parallel_for(map.size(), [&](std::size_t k) { all[k] = project(map[k], pose, intr, opt); });
    std::vector<ProjectedSplat> visible;
    visible.reserve(map.size());
    for (auto &s : all) {
        if (s) {
            visible.push_back(*s);
        }
    }
    std::stable_sort(visible.begin(), visible.end(),
                     [](const ProjectedSplat &a, const ProjectedSplat &b) { return a.depth < b.depth; });
    return visible;
}

/// Composites the front-to-back ordered `splats` into pixel (x, y).
/// Shared by the tiled path and exposed for per-pixel inspection.
template <typename SplatRange>
inline void composite_pixel(const SplatRange &splats, double x, double y,
                            const RenderOptions &opt, Vec3 &color, double &depth,
                            double &transmittance) {
    const double cutoff = opt.cutoff_sigma * opt.cutoff_sigma;
    color.setZero();
    depth = 0.0;
    transmittance = 1.0;
    for (const ProjectedSplat &s : splats) {
        const Vec2 delta(x - s.mean.x(), y - s.mean.y());
        const double power = delta.dot(s.conic * delta);
        if (power > cutoff) {
            continue;
        }
        const double alpha = std::min(opt.alpha_max, s.opacity * std::exp(-0.5 * power));
        if (!(alpha > 0.0)) {
            continue;
        }
        const double weight = alpha * transmittance;
        color += weight * s.color;
        depth += weight * s.depth;
        transmittance *= 1.0 - alpha;
        if (transmittance < opt.min_transmittance) {
            break;
        }
    }
}

namespace detail {

template <typename T>
struct RefRange {
    const std::vector<T> *items;
    const std::vector<std::size_t> *ids;

    struct iterator {
        const RefRange *r;
        std::size_t k;
        const T &operator*() const { return (*r->items)[(*r->ids)[k]]; }
        iterator &operator++() {
            ++k;
            return *this;
        }
        bool operator!=(const iterator &o) const { return k != o.k; }
    };
    iterator begin() const { return {this, 0}; }
    iterator end() const { return {this, ids->size()}; }
};

} // namespace detail

/// Tile-based forward rendering. Pixel (x, y) samples the image plane at
/// integer coordinates; background is black with depth 0.
inline RenderedFrame rasterize(const SplatMap &map, const CameraPose &pose,
                               const PinholeIntrinsics &intr, const RenderOptions &opt = {}) {
    intr.validate();
    if (opt.tile_size < 1) {
        throw InvalidArgument("tile size must be positive");
    }
    const int w = intr.width;
    const int h = intr.height;
    RenderedFrame frame(w, h);
    const auto splats = project_sorted(map, pose, intr, opt);

    const int tiles_x = (w + opt.tile_size - 1) / opt.tile_size;
    const int tiles_y = (h + opt.tile_size - 1) / opt.tile_size;
    std::vector<std::vector<std::size_t>> bins(static_cast<std::size_t>(tiles_x * tiles_y));
    for (std::size_t k = 0; k < splats.size(); ++k) {
        const auto &s = splats[k];
        const double x_lo = s.mean.x() - s.half_width;
        const double x_hi = s.mean.x() + s.half_width;
        const double y_lo = s.mean.y() - s.half_height;
        const double y_hi = s.mean.y() + s.half_height;
        if (x_hi < 0.0 || y_hi < 0.0 || x_lo > w - 1 || y_lo > h - 1) {
            continue;
        }
        const int tx0 = std::clamp(static_cast<int>(std::floor(std::max(x_lo, 0.0) / opt.tile_size)), 0, tiles_x - 1);
        const int tx1 = std::clamp(static_cast<int>(std::floor(std::min(x_hi, w - 1.0) / opt.tile_size)), 0, tiles_x - 1);
        const int ty0 = std::clamp(static_cast<int>(std::floor(std::max(y_lo, 0.0) / opt.tile_size)), 0, tiles_y - 1);
        const int ty1 = std::clamp(static_cast<int>(std::floor(std::min(y_hi, h - 1.0) / opt.tile_size)), 0, tiles_y - 1);
        for (int ty = ty0; ty <= ty1; ++ty) {
            for (int tx = tx0; tx <= tx1; ++tx) {
                bins[static_cast<std::size_t>(ty * tiles_x + tx)].push_back(k);
            }
        }
    }

    parallel_for(bins.size(), [&](std::size_t t) {
        const int tx = static_cast<int>(t) % tiles_x;
        const int ty = static_cast<int>(t) / tiles_x;
        const detail::RefRange<ProjectedSplat> range{&splats, &bins[t]};
        const int x_end = std::min(w, (tx + 1) * opt.tile_size);
        const int y_end = std::min(h, (ty + 1) * opt.tile_size);
        for (int y = ty * opt.tile_size; y < y_end; ++y) {
            for (int x = tx * opt.tile_size; x < x_end; ++x) {
                Vec3 c;
                double d = 0.0;
                double trans = 1.0;
                composite_pixel(range, x, y, opt, c, d, trans);
                for (int ch = 0; ch < 3; ++ch) {
                    frame.color.at(x, y, ch) = c(ch);
                }
                frame.depth.at(x, y) = d;
                frame.transmittance.at(x, y) = trans;
            }
        }
    });
    return frame;
}

} // namespace splatc
