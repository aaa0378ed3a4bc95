// Copyright Contributors to the splatc project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include <json.hpp>

#include "splatc/config.hpp"
#include "splatc/metrics.hpp"
#include "splatc/voxel_merger.hpp"

namespace splatc {

/// Desk-scale quality/memory comparison of two maps.
struct EvalReport {
    double psnr = 0.0;
    double ssim = 0.0;
    std::vector<double> psnr_per_view;
    std::size_t primitives_before = 0;
    std::size_t primitives_after = 0;
    std::size_t bytes_before = 0;
    std::size_t bytes_after = 0;
    std::vector<double> merge_pass_seconds;
};

inline void to_json(nlohmann::json &j, const MergeRecord &r) {
    j = nlohmann::json{{"index_i", r.index_i}, {"index_j", r.index_j}, {"index_k", r.index_k},
                       {"d2", r.d2}};
}

inline void to_json(nlohmann::json &j, const MergeReport &r) {
    j = nlohmann::json{
        {"primitives_before", r.primitives_before},
        {"primitives_after", r.primitives_after},
        {"primitives_masked", r.primitives_masked},
        {"voxels_occupied", r.voxels_occupied},
        {"pairs_examined", r.pairs_examined},
        {"pairs_gated_out", r.pairs_gated_out},
        {"merges_performed", r.merges_performed},
        {"merges_skipped", r.merges_skipped},
        {"optimizer_fallbacks", r.optimizer_fallbacks},
        {"max_merged_d2", r.merges_performed > 0 ? nlohmann::json(r.max_merged_d2) : nlohmann::json()},
        {"mean_shift_avg", r.mean_shift_avg},
        {"mean_shift_max", r.mean_shift_max},
        {"w2_objective_init_avg", r.w2_objective_init_avg},
        {"w2_objective_final_avg", r.w2_objective_final_avg},
        {"wall_time_seconds", r.wall_time_seconds},
        {"merges", r.merges},
    };
}

inline void to_json(nlohmann::json &j, const LossTerms &t) {
    j = nlohmann::json{{"total", t.total}, {"l1", t.l1}, {"ssim", t.ssim}, {"iso", t.iso}};
}

inline void to_json(nlohmann::json &j, const EvalReport &r) {
    j = nlohmann::json{
        {"psnr", r.psnr},
        {"ssim", r.ssim},
        {"psnr_per_view", r.psnr_per_view},
        {"primitives_before", r.primitives_before},
        {"primitives_after", r.primitives_after},
        {"bytes_before", r.bytes_before},
        {"bytes_after", r.bytes_after},
        {"merge_pass_seconds", r.merge_pass_seconds},
    };
}

/// Effective settings, keyed like the config file.
inline nlohmann::json settings_json(const Settings &s) {
    return nlohmann::json{
        {"merge",
         {{"voxel_size", s.merge.voxel_size},
          {"grad_tau", s.merge.grad_tau},
          {"chi2", s.merge.chi2_threshold},
          {"slerp_t", s.merge.slerp_t},
          {"evd_offsets", {s.merge.evd_offsets.x(), s.merge.evd_offsets.y(), s.merge.evd_offsets.z()}},
          {"kf_min", s.merge.kf_min},
          {"kf_max", s.merge.kf_max},
          {"symmetric_gate", s.merge.symmetric_gate},
          {"passes", s.passes}}},
        {"minimizer",
         {{"memory_pairs", s.merge.minimizer.memory_pairs},
          {"grad_tolerance", s.merge.minimizer.grad_tolerance},
          {"max_iterations", s.merge.minimizer.max_iterations},
          {"sufficient_decrease", s.merge.minimizer.sufficient_decrease},
          {"contraction", s.merge.minimizer.contraction}}},
        {"sampler",
         {{"patch", s.sampler.patch_size},
          {"min_kp", s.sampler.min_keypoints_per_patch},
          {"samples_per_patch", s.sampler.samples_per_patch},
          {"seed", s.sampler.rng_seed}}},
        {"render",
         {{"lambda", s.lambda},
          {"lambda_iso", s.lambda_iso},
          {"depth_scale", s.depth_scale},
          {"width", s.render_width},
          {"height", s.render_height},
          {"fov", s.render_fov}}},
        {"report", {{"bytes_per_primitive", s.bytes_per_primitive}}},
    };
}

} // namespace splatc
