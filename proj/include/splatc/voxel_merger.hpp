// Copyright Contributors to the splatc project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <compare>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <tuple>
#include <vector>

#include <Eigen/Cholesky>

#include "splatc/core.hpp"
#include "splatc/optimizer.hpp"
#include "splatc/parallel.hpp"
#include "splatc/wasserstein.hpp"

namespace splatc {

/// 95% critical value of the chi-square distribution with 3 degrees of freedom.
inline constexpr double kChi2Critical3Dof95 = 7.815;

struct MergeConfig {
    double voxel_size = 0.05;
    /// Primitives with grad_stat strictly below this are considered stable.
    double grad_tau = 0.001;
    double chi2_threshold = kChi2Critical3Dof95;
    /// Interpolation weight of the rotation initialization.
    double slerp_t = 0.5;
    /// Added to the averaged scales before the covariance solve.
    Vec3 evd_offsets{0.001, 0.002, 0.003};
    /// Inclusive keyframe window of mergeable primitives.
    std::int64_t kf_min = 0;
    std::int64_t kf_max = std::numeric_limits<std::uint32_t>::max();
    /// Gate on min(d2 under Sigma_i, d2 under Sigma_j) instead of Sigma_i alone.
    bool symmetric_gate = false;
    MinimizerConfig minimizer{};

    void validate() const {
        if (!(voxel_size > 0.0) || !(slerp_t > 0.0 && slerp_t < 1.0) ||
            !(chi2_threshold > 0.0) || kf_min > kf_max || !std::isfinite(grad_tau) ||
            !detail::all_finite(evd_offsets)) {
            throw InvalidArgument("invalid merge configuration");
        }
        minimizer.validate();
    }
};

struct VoxelIndex {
    std::int64_t ix = 0;
    std::int64_t iy = 0;
    std::int64_t iz = 0;

    static VoxelIndex of(const Vec3 &p, double voxel_size) {
        return {static_cast<std::int64_t>(std::floor(p.x() / voxel_size)),
                static_cast<std::int64_t>(std::floor(p.y() / voxel_size)),
                static_cast<std::int64_t>(std::floor(p.z() / voxel_size))};
    }

    auto operator<=>(const VoxelIndex &) const = default;
};

/// Gated pair inside one voxel; i is the earlier insertion.
struct MergeCandidate {
    std::uint64_t index_i = 0;
    std::uint64_t index_j = 0;
    double d2 = 0.0;
    /// Positions of the two primitives in the source map.
    std::size_t slot_i = 0;
    std::size_t slot_j = 0;
};

struct MergeRecord {
    std::uint64_t index_i = 0;
    std::uint64_t index_j = 0;
    std::uint64_t index_k = 0;
    double d2 = 0.0;
};

struct MergeReport {
    std::size_t primitives_before = 0;
    std::size_t primitives_after = 0;
    std::size_t primitives_masked = 0;
    std::size_t voxels_occupied = 0;
    std::size_t pairs_examined = 0;
    std::size_t pairs_gated_out = 0;
    std::size_t merges_performed = 0;
    std::size_t merges_skipped = 0;
    std::size_t optimizer_fallbacks = 0;
    /// Largest d2 among performed merges; negative when nothing merged.
    double max_merged_d2 = -1.0;
    /// Mean and max distance between the fused mean and the older parent.
    double mean_shift_avg = 0.0;
    double mean_shift_max = 0.0;
    /// Mean W2 objective over merged pairs, at initialization and at return.
    double w2_objective_init_avg = 0.0;
    double w2_objective_final_avg = 0.0;
    double wall_time_seconds = 0.0;
    std::vector<MergeRecord> merges;
};

/// Stable: low average gradient and inside the keyframe window.
inline std::vector<bool> stability_mask(const SplatMap &map, const MergeConfig &cfg) {
    std::vector<bool> mask(map.size());
    for (std::size_t k = 0; k < map.size(); ++k) {
        const auto &g = map[k];
        const auto kf = static_cast<std::int64_t>(g.keyframe_index);
        mask[k] = g.grad_stat < cfg.grad_tau && cfg.kf_min <= kf && kf <= cfg.kf_max;
    }
    return mask;
}

using VoxelBins = std::map<VoxelIndex, std::vector<std::size_t>>;

/// Groups masked primitives (by position in the map) per voxel; each list is
/// ordered by insertion index.
inline VoxelBins bin_voxels(const SplatMap &map, const std::vector<bool> &mask,
                            double voxel_size) {
    if (!(voxel_size > 0.0)) {
        throw InvalidArgument("voxel size must be positive");
    }
    if (mask.size() != map.size()) {
        throw InvalidArgument("mask size does not match map size");
    }
    VoxelBins bins;
    for (std::size_t k = 0; k < map.size(); ++k) {
        if (mask[k]) {
            bins[VoxelIndex::of(map[k].mean, voxel_size)].push_back(k);
        }
    }
    for (auto &[key, members] : bins) {
        std::stable_sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
            return map[a].insertion_index < map[b].insertion_index;
        });
    }
    return bins;
}

/// (mu_j - mu_i)^T Sigma_i^{-1} (mu_j - mu_i) through a Cholesky solve.
inline double mahalanobis_sq(const Vec3 &mu_j, const Vec3 &mu_i, const CovarianceMatrix &cov_i) {
    const Eigen::LLT<Mat3> llt(cov_i.matrix());
    if (llt.info() != Eigen::Success) {
        throw DegenerateCovariance("Cholesky factorization of covariance failed");
    }
    const Vec3 delta = mu_j - mu_i;
    const Vec3 whitened = llt.matrixL().solve(delta);
    return whitened.squaredNorm();
}

/// All unordered pairs of one voxel's members with their squared distances.
inline std::vector<MergeCandidate> enumerate_candidates(const SplatMap &map,
                                                        std::span<const std::size_t> members,
                                                        bool symmetric_gate = false) {
    std::vector<MergeCandidate> out;
    if (members.size() < 2) {
        return out;
    }
    std::vector<CovarianceMatrix> covs;
    covs.reserve(members.size());
    for (auto slot : members) {
        covs.push_back(map[slot].covariance());
    }
    out.reserve(members.size() * (members.size() - 1) / 2);
    for (std::size_t a = 0; a < members.size(); ++a) {
        for (std::size_t b = a + 1; b < members.size(); ++b) {
            std::size_t ia = a;
            std::size_t ib = b;
            if (map[members[ib]].insertion_index < map[members[ia]].insertion_index) {
                std::swap(ia, ib);
            }
            const auto &gi = map[members[ia]];
            const auto &gj = map[members[ib]];
            double d2 = mahalanobis_sq(gj.mean, gi.mean, covs[ia]);
            if (symmetric_gate) {
                d2 = std::min(d2, mahalanobis_sq(gi.mean, gj.mean, covs[ib]));
            }
            out.push_back({gi.insertion_index, gj.insertion_index, d2, members[ia], members[ib]});
        }
    }
    return out;
}

inline bool gate(const MergeCandidate &c, double chi2_threshold) { return c.d2 < chi2_threshold; }

/// Maximizer of log N(mu; mu_i, Sigma_i) + log N(mu; mu_j, Sigma_j).
///
/// Evaluated as mu_i + Sigma_i (Sigma_i + Sigma_j)^{-1} (mu_j - mu_i), which
/// equals the precision-weighted mean and needs one PD solve.
inline Vec3 merge_mean(const Vec3 &mu_i, const CovarianceMatrix &cov_i, const Vec3 &mu_j,
                       const CovarianceMatrix &cov_j) {
    const Eigen::LLT<Mat3> llt(cov_i.matrix() + cov_j.matrix());
    if (llt.info() != Eigen::Success) {
        throw DegenerateCovariance("covariance sum is not positive definite");
    }
    return mu_i + cov_i.matrix() * llt.solve(mu_j - mu_i);
}

struct MergedCovariance {
    Quat rotation = Quat::Identity();
    Vec3 scale = Vec3::Ones();
    CovarianceMatrix covariance;
    double objective_init = 0.0;
    double objective_final = 0.0;
    int iterations = 0;
    bool converged = false;
    /// The minimizer failed numerically; the initialization was returned.
    bool fell_back = false;
};

/// W2 barycenter of two covariances, solved with L-BFGS from a slerp /
/// averaged-scale initialization.
inline MergedCovariance merge_covariance(const CovarianceMatrix &cov_i,
                                         const CovarianceMatrix &cov_j, const Quat &q_i,
                                         const Vec3 &s_i, const Quat &q_j, const Vec3 &s_j,
                                         const MergeConfig &cfg) {
    if (!(cfg.slerp_t > 0.0 && cfg.slerp_t < 1.0)) {
        throw InvalidArgument("slerp_t must lie in (0, 1)");
    }
    const Quat q0 = slerp(q_i, q_j, cfg.slerp_t);
    const Vec3 s0 = (0.5 * (s_i + s_j) + cfg.evd_offsets).cwiseAbs().cwiseMax(kScaleEpsilon);

    const double unit = std::sqrt(std::max(
        (cov_i.matrix().trace() + cov_j.matrix().trace()) / 6.0, kPdEpsilon));
    const CovarianceMergeObjective objective(cov_i.matrix(), cov_j.matrix(), unit);

    MergedCovariance out;
    out.rotation = q0;
    out.scale = s0;
    out.covariance = covariance_from_qs(q0, s0);
    out.objective_init = w2_sq(out.covariance, cov_i) + w2_sq(out.covariance, cov_j);
    out.objective_final = out.objective_init;

    Eigen::VectorXd x0(7);
    x0 << q0.w(), q0.x(), q0.y(), q0.z(), s0 / unit;
    try {
        const MinimizeResult res = minimize(objective, x0, cfg.minimizer);
        out.iterations = res.iterations;
        out.converged = res.converged;
        const Eigen::Vector4d qv = res.x.head<4>() / res.x.head<4>().norm();
        const Quat q(qv(0), qv(1), qv(2), qv(3));
        const Vec3 s = (res.x.tail<3>() * unit).cwiseAbs().cwiseMax(kScaleEpsilon);
        const CovarianceMatrix cov = covariance_from_qs(q, s);
        const double value = w2_sq(cov, cov_i) + w2_sq(cov, cov_j);
        if (value <= out.objective_init) {
            out.rotation = q;
            out.scale = s;
            out.covariance = cov;
            out.objective_final = value;
        }
    } catch (const NumericalFailure &) {
        out.fell_back = true;
    } catch (const DegenerateCovariance &) {
        out.fell_back = true;
    }
    return out;
}

struct MergedAttributes {
    Vec3 color = Vec3::Zero();
    std::vector<float> sh_rest;
    double opacity = 0.0;
    double grad_stat = 0.0;
    std::uint32_t keyframe_index = 0;
};

/// Appearance of the merged primitive: color and opacity of the older parent.
inline MergedAttributes merge_attributes(const GaussianPrimitive &g_i,
                                         const GaussianPrimitive &g_j) {
    if (!(g_i.insertion_index < g_j.insertion_index)) {
        throw InvalidArgument("merge_attributes: g_i must be the earlier insertion");
    }
    return {g_i.color, g_i.sh_rest, g_i.opacity, std::max(g_i.grad_stat, g_j.grad_stat),
            std::min(g_i.keyframe_index, g_j.keyframe_index)};
}

/// Fuses one gated pair into a new primitive (insertion index left unset).
inline GaussianPrimitive merge_pair(const GaussianPrimitive &g_i, const GaussianPrimitive &g_j,
                                    const MergeConfig &cfg, MergedCovariance *diag = nullptr) {
    const CovarianceMatrix cov_i = g_i.covariance();
    const CovarianceMatrix cov_j = g_j.covariance();
    const MergedAttributes attrs = merge_attributes(g_i, g_j);
    MergedCovariance shape =
        merge_covariance(cov_i, cov_j, g_i.rotation, g_i.scale, g_j.rotation, g_j.scale, cfg);

    GaussianPrimitive g;
    g.mean = merge_mean(g_i.mean, cov_i, g_j.mean, cov_j);
    g.rotation = shape.rotation;
    g.scale = shape.scale;
    g.color = attrs.color;
    g.sh_rest = attrs.sh_rest;
    g.opacity = attrs.opacity;
    g.grad_stat = attrs.grad_stat;
    g.keyframe_index = attrs.keyframe_index;
    enforce_invariants(g);
    if (diag != nullptr) {
        *diag = std::move(shape);
    }
    return g;
}

namespace detail {

struct VoxelMergeResult {
    struct Fused {
        GaussianPrimitive primitive;
        MergeRecord record;
        MergedCovariance shape;
        double mean_shift = 0.0;
    };
    std::vector<Fused> fused;
    std::vector<std::size_t> consumed;
    std::size_t pairs_examined = 0;
    std::size_t pairs_gated_out = 0;
    std::size_t skipped = 0;
};

inline VoxelMergeResult merge_voxel(const SplatMap &map, std::span<const std::size_t> members,
                                    const MergeConfig &cfg) {
    VoxelMergeResult out;
    auto candidates = enumerate_candidates(map, members, cfg.symmetric_gate);
    out.pairs_examined = candidates.size();
    std::sort(candidates.begin(), candidates.end(), [](const auto &a, const auto &b) {
        if (a.d2 != b.d2) {
            return a.d2 < b.d2;
        }
        return std::tie(a.index_i, a.index_j) < std::tie(b.index_i, b.index_j);
    });
    std::map<std::size_t, bool> consumed;
    for (const auto &c : candidates) {
        if (!gate(c, cfg.chi2_threshold)) {
            ++out.pairs_gated_out;
            continue;
        }
        if (consumed[c.slot_i] || consumed[c.slot_j]) {
            continue;
        }
        const auto &g_i = map[c.slot_i];
        const auto &g_j = map[c.slot_j];
        try {
            VoxelMergeResult::Fused f;
            f.primitive = merge_pair(g_i, g_j, cfg, &f.shape);
            f.record = {c.index_i, c.index_j, 0, c.d2};
            f.mean_shift = (f.primitive.mean - g_i.mean).norm();
            out.fused.push_back(std::move(f));
            consumed[c.slot_i] = true;
            consumed[c.slot_j] = true;
            out.consumed.push_back(c.slot_i);
            out.consumed.push_back(c.slot_j);
        } catch (const DegenerateCovariance &) {
            ++out.skipped;
        }
    }
    return out;
}

} // namespace detail

/// One merge pass over the whole map.
///
/// Per voxel, gated pairs are fused greedily in order of increasing d2 and
/// each primitive takes part in at most one merge. Output order: untouched
/// primitives in their original order, then fused primitives in creation
/// order (voxel key order, then greedy order) under fresh insertion indices.
inline std::pair<SplatMap, MergeReport> merge_pass(const SplatMap &map, const MergeConfig &cfg) {
    cfg.validate();
    const auto start = std::chrono::steady_clock::now();
    MergeReport report;
    report.primitives_before = map.size();

    const auto mask = stability_mask(map, cfg);
    report.primitives_masked = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
    const VoxelBins bins = bin_voxels(map, mask, cfg.voxel_size);
    report.voxels_occupied = bins.size();

    std::vector<const std::vector<std::size_t> *> voxel_lists;
    voxel_lists.reserve(bins.size());
    for (const auto &[key, members] : bins) {
        voxel_lists.push_back(&members);
    }
    std::vector<detail::VoxelMergeResult> results(voxel_lists.size());
    parallel_for(voxel_lists.size(), [&](std::size_t v) {
        results[v] = detail::merge_voxel(map, *voxel_lists[v], cfg);
    });

    std::vector<bool> consumed(map.size(), false);
    for (const auto &r : results) {
        for (auto slot : r.consumed) {
            consumed[slot] = true;
        }
    }

    SplatMap out;
    for (std::size_t k = 0; k < map.size(); ++k) {
        if (!consumed[k]) {
            out.adopt(map[k]);
        }
    }
    out.reserve_indices_below(map.next_insertion_index());

    double init_sum = 0.0;
    double final_sum = 0.0;
    double shift_sum = 0.0;
    for (auto &r : results) {
        report.pairs_examined += r.pairs_examined;
        report.pairs_gated_out += r.pairs_gated_out;
        report.merges_skipped += r.skipped;
        for (auto &f : r.fused) {
            f.record.index_k = out.insert(std::move(f.primitive));
            report.merges.push_back(f.record);
            report.max_merged_d2 = std::max(report.max_merged_d2, f.record.d2);
            report.optimizer_fallbacks += f.shape.fell_back ? 1 : 0;
            init_sum += f.shape.objective_init;
            final_sum += f.shape.objective_final;
            shift_sum += f.mean_shift;
            report.mean_shift_max = std::max(report.mean_shift_max, f.mean_shift);
        }
    }
    report.merges_performed = report.merges.size();
    if (report.merges_performed > 0) {
        const auto n = static_cast<double>(report.merges_performed);
        report.mean_shift_avg = shift_sum / n;
        report.w2_objective_init_avg = init_sum / n;
        report.w2_objective_final_avg = final_sum / n;
    }
    report.primitives_after = out.size();
    report.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {std::move(out), std::move(report)};
}

} // namespace splatc
