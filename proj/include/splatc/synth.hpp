// Copyright Contributors to the splatc project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "splatc/core.hpp"

namespace splatc {

/// Portable random source: mt19937_64 plus distribution code that does not
/// depend on the standard library's (implementation-defined) distributions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal through Box-Muller.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) {
            u1 = uniform();
        }
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * M_PI * u2);
        has_spare_ = true;
        return r * std::cos(2.0 * M_PI * u2);
    }

    /// Uniformly distributed rotation.
    Quat rotation() {
        Eigen::Vector4d v;
        do {
            v = {normal(), normal(), normal(), normal()};
        } while (v.norm() < 1e-9);
        v.normalize();
        return Quat(v(0), v(1), v(2), v(3));
    }

    std::size_t index(std::size_t n) {
        return std::min(n - 1, static_cast<std::size_t>(uniform() * static_cast<double>(n)));
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

struct SynthSceneConfig {
    int base_count = 500;
    /// Share of base primitives that receive a jittered duplicate.
    double dup_fraction = 0.5;
    double jitter_sigma = 0.005;
    /// Half-width of the cube holding the means (meters).
    double extent = 1.0;
    std::uint64_t seed = 0;
    /// grad_stat is drawn uniformly in [0, 2 * grad_tau).
    double grad_tau = 0.001;
    int orbit_poses = 12;

    void validate() const {
        if (base_count < 1 || !(dup_fraction >= 0.0 && dup_fraction <= 1.0) ||
            !(jitter_sigma >= 0.0) || !(extent > 0.0) || orbit_poses < 0 || !(grad_tau >= 0.0)) {
            throw InvalidArgument("invalid synthetic scene configuration");
        }
    }
};

struct SynthScene {
    SplatMap map;
    std::vector<CameraPose> poses;
    /// Insertion indices of (original, duplicate) pairs.
    std::vector<std::pair<std::uint64_t, std::uint64_t>> duplicates;
};

/// Cameras on a circle of the given radius in the z = 0 plane, looking at the origin.
inline std::vector<CameraPose> orbit_poses(int count, double radius) {
    std::vector<CameraPose> poses;
    poses.reserve(static_cast<std::size_t>(count));
    for (int k = 0; k < count; ++k) {
        const double a = 2.0 * M_PI * k / count;
        const Vec3 eye(radius * std::cos(a), radius * std::sin(a), 0.0);
        poses.push_back(CameraPose::look_at(eye, Vec3::Zero(), Vec3::UnitZ()));
    }
    return poses;
}

/// Random splat scene with a share of near-duplicate primitives.
inline SynthScene synth(const SynthSceneConfig &cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    SynthScene scene;
    const double log_lo = std::log(0.005);
    const double log_hi = std::log(0.05);
    std::vector<GaussianPrimitive> base;
    base.reserve(static_cast<std::size_t>(cfg.base_count));
    for (int k = 0; k < cfg.base_count; ++k) {
        GaussianPrimitive g;
        g.mean = {rng.uniform(-cfg.extent, cfg.extent), rng.uniform(-cfg.extent, cfg.extent),
                  rng.uniform(-cfg.extent, cfg.extent)};
        g.rotation = rng.rotation();
        g.scale = {std::exp(rng.uniform(log_lo, log_hi)), std::exp(rng.uniform(log_lo, log_hi)),
                   std::exp(rng.uniform(log_lo, log_hi))};
        g.color = color_to_sh(Vec3(rng.uniform(), rng.uniform(), rng.uniform()));
        g.opacity = rng.uniform(0.5, 0.99);
        g.grad_stat = rng.uniform(0.0, 2.0 * cfg.grad_tau);
        scene.map.insert(g);
        base.push_back(scene.map[scene.map.size() - 1]);
    }

    const auto dup_count = static_cast<std::size_t>(std::llround(cfg.dup_fraction * cfg.base_count));
    std::vector<std::size_t> order(base.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t k = order.size(); k-- > 1;) {
        std::swap(order[k], order[rng.index(k + 1)]);
    }
    for (std::size_t k = 0; k < dup_count; ++k) {
        GaussianPrimitive g = base[order[k]];
        g.mean += cfg.jitter_sigma * Vec3(rng.normal(), rng.normal(), rng.normal());
        const auto idx = scene.map.insert(g);
        scene.duplicates.emplace_back(base[order[k]].insertion_index, idx);
    }
    scene.poses = orbit_poses(cfg.orbit_poses, 2.0 * cfg.extent);
    return scene;
}

/// Bytes per primitive of the full 3DGS layout: 59 float32 attributes.
inline constexpr std::size_t kDefaultBytesPerPrimitive = 236;

inline std::size_t estimate_bytes(const SplatMap &map,
                                  std::size_t per_primitive_bytes = kDefaultBytesPerPrimitive) {
    if (per_primitive_bytes == 0) {
        throw InvalidArgument("bytes per primitive must be positive");
    }
    return map.size() * per_primitive_bytes;
}

} // namespace splatc
