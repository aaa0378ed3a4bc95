// Copyright Contributors to the splatc project
// SPDX-License-Identifier: Apache-2.0

// splatc: command-line front end for splat map compaction, Patch-Grid
// initialization, rendering and evaluation.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "splatc/splatc.hpp"

using nlohmann::json;

namespace {

/// Flags that may override config-file values. Unset flags leave the
/// config (or built-in default) in place.
struct Overrides {
    std::string config_path;
    std::optional<double> voxel_size;
    std::optional<double> grad_tau;
    std::optional<double> chi2;
    std::optional<double> slerp_t;
    std::optional<int> passes;
    std::optional<std::int64_t> kf_min;
    std::optional<std::int64_t> kf_max;
    bool symmetric_gate = false;
    std::optional<int> patch;
    std::optional<int> min_kp;
    std::optional<int> samples_per_patch;
    std::optional<std::uint64_t> seed;
    std::optional<double> depth_scale;
    std::optional<double> lambda;
    std::optional<double> lambda_iso;
    std::optional<int> width;
    std::optional<int> height;
    std::optional<double> fov;

    splatc::Settings resolve() const {
        splatc::Settings s;
        if (!config_path.empty()) {
            splatc::apply_config(splatc::read_config(config_path), s);
        }
        if (voxel_size) s.merge.voxel_size = *voxel_size;
        if (grad_tau) s.merge.grad_tau = *grad_tau;
        if (chi2) s.merge.chi2_threshold = *chi2;
        if (slerp_t) s.merge.slerp_t = *slerp_t;
        if (passes) s.passes = *passes;
        if (kf_min) s.merge.kf_min = *kf_min;
        if (kf_max) s.merge.kf_max = *kf_max;
        if (symmetric_gate) s.merge.symmetric_gate = true;
        if (patch) s.sampler.patch_size = *patch;
        if (min_kp) s.sampler.min_keypoints_per_patch = *min_kp;
        if (samples_per_patch) s.sampler.samples_per_patch = *samples_per_patch;
        if (seed) s.sampler.rng_seed = *seed;
        if (depth_scale) s.depth_scale = *depth_scale;
        if (lambda) s.lambda = *lambda;
        if (lambda_iso) s.lambda_iso = *lambda_iso;
        if (width) s.render_width = *width;
        if (height) s.render_height = *height;
        if (fov) s.render_fov = *fov;
        return s;
    }
};

void add_config_flag(CLI::App *cmd, Overrides &o) {
    cmd->add_option("--config", o.config_path, "TOML config file (flags take precedence)");
}

void add_merge_flags(CLI::App *cmd, Overrides &o) {
    cmd->add_option("--voxel-size", o.voxel_size, "Voxel edge length in meters");
    cmd->add_option("--grad-tau", o.grad_tau, "Stability gradient threshold");
    cmd->add_option("--chi2", o.chi2, "Squared Mahalanobis gate");
    cmd->add_option("--slerp-t", o.slerp_t, "Rotation interpolation weight in (0,1)");
    cmd->add_option("--passes", o.passes, "Number of merge passes");
    cmd->add_option("--kf-min", o.kf_min, "First keyframe index eligible for merging");
    cmd->add_option("--kf-max", o.kf_max, "Last keyframe index eligible for merging");
    cmd->add_flag("--symmetric-gate", o.symmetric_gate, "Gate on both covariances");
}

void add_sampler_flags(CLI::App *cmd, Overrides &o) {
    cmd->add_option("--patch", o.patch, "Patch size in pixels");
    cmd->add_option("--min-kp", o.min_kp, "Keypoint count below which a patch is densified");
    cmd->add_option("--samples-per-patch", o.samples_per_patch, "Samples per sparse patch");
    cmd->add_option("--seed", o.seed, "Random seed");
}

void add_view_flags(CLI::App *cmd, Overrides &o, std::string &intrinsics_path) {
    cmd->add_option("--intrinsics", intrinsics_path, "Intrinsics file: fx fy cx cy width height");
    cmd->add_option("--width", o.width, "Image width when no intrinsics file is given");
    cmd->add_option("--height", o.height, "Image height when no intrinsics file is given");
    cmd->add_option("--fov", o.fov, "Horizontal field of view in degrees");
}

splatc::PinholeIntrinsics view_intrinsics(const std::string &path, const splatc::Settings &s) {
    if (!path.empty()) {
        return splatc::read_intrinsics(path);
    }
    return splatc::PinholeIntrinsics::from_fov(s.render_width, s.render_height, s.render_fov);
}

std::vector<splatc::CameraPose> load_poses(const std::string &path) {
    if (path.empty()) {
        return {splatc::CameraPose{}};
    }
    auto poses = splatc::read_poses(path);
    if (poses.empty()) {
        throw splatc::FormatError(path + " contains no poses");
    }
    return poses;
}

void emit_json(const json &j, const std::string &path) {
    const std::string text = j.dump(2) + "\n";
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out || !(out << text)) {
        throw splatc::IoError("cannot write " + path);
    }
}

// --- synth -----------------------------------------------------------------

struct SynthArgs {
    splatc::SynthSceneConfig cfg;
    std::string out;
    std::string poses_out;
    std::string intrinsics_out;
};

int run_synth(const SynthArgs &a, const Overrides &o) {
    const auto settings = o.resolve();
    auto cfg = a.cfg;
    cfg.seed = o.seed.value_or(cfg.seed);
    cfg.grad_tau = settings.merge.grad_tau;
    const auto scene = splatc::synth(cfg);
    splatc::write_splat_ply(scene.map, a.out);
    if (!a.poses_out.empty()) {
        splatc::write_poses(scene.poses, a.poses_out);
    }
    if (!a.intrinsics_out.empty()) {
        splatc::write_intrinsics(splatc::PinholeIntrinsics::from_fov(
                                     settings.render_width, settings.render_height,
                                     settings.render_fov),
                                 a.intrinsics_out);
    }
    std::cout << "synth: " << scene.map.size() << " primitives (" << scene.duplicates.size()
              << " duplicates), " << scene.poses.size() << " poses\n";
    return 0;
}

// --- sample ----------------------------------------------------------------

struct SampleArgs {
    std::string image;
    std::string keypoints;
    std::string depth;
    std::string intrinsics;
    std::string pose;
    std::size_t pose_index = 0;
    std::uint32_t keyframe = 0;
    std::string out;
};

int run_sample(const SampleArgs &a, const Overrides &o) {
    const auto s = o.resolve();
    const splatc::Image rgb = splatc::read_color_png(a.image);
    const auto keypoints = splatc::read_keypoints_csv(a.keypoints);
    const auto intr = splatc::read_intrinsics(a.intrinsics);
    if (intr.width != rgb.width || intr.height != rgb.height) {
        throw splatc::InvalidArgument("intrinsics size does not match " + a.image);
    }
    const auto poses = load_poses(a.pose);
    if (a.pose_index >= poses.size()) {
        throw splatc::InvalidArgument("pose index out of range");
    }
    std::optional<splatc::Image> depth;
    if (!a.depth.empty()) {
        depth = splatc::read_depth_png(a.depth, s.depth_scale);
        if (depth->width != rgb.width || depth->height != rgb.height) {
            throw splatc::InvalidArgument("depth image size does not match " + a.image);
        }
    }
    const bool any_keypoint_depth = std::any_of(keypoints.begin(), keypoints.end(),
                                                [](const auto &k) { return k.has_depth(); });
    if (!depth && !any_keypoint_depth) {
        std::cerr << "error: no depth available\n";
        return 1;
    }

    const auto grid = splatc::partition_patches(rgb.width, rgb.height, s.sampler);
    const auto sampled = splatc::sample_sparse_patches(keypoints, grid, s.sampler);
    const auto assigned =
        splatc::assign_depths(sampled.points, depth ? &*depth : nullptr, keypoints);
    const auto init = splatc::initialize_primitives(assigned.points, poses[a.pose_index], intr,
                                                    rgb, 0, a.keyframe);
    splatc::SplatMap map;
    for (const auto &g : init.primitives) {
        map.insert(g);
    }
    splatc::write_splat_ply(map, a.out);
    std::cout << "patches: " << grid.patches.size() << " sparse_patches: " << sampled.sparse_patches
              << " keypoints: " << keypoints.size() << " samples: " << sampled.samples_added
              << " skipped: " << assigned.skipped + init.skipped
              << " primitives: " << map.size() << "\n";
    return 0;
}

// --- compact ---------------------------------------------------------------

struct CompactArgs {
    std::string in;
    std::string out;
    std::string report;
};

int run_compact(const CompactArgs &a, const Overrides &o) {
    const auto s = o.resolve();
    if (s.passes < 0) {
        throw splatc::InvalidArgument("--passes must be non-negative");
    }
    s.merge.validate();
    splatc::SplatMap map = splatc::read_splat_ply(a.in);
    const std::size_t before = map.size();
    json passes = json::array();
    for (int p = 0; p < s.passes; ++p) {
        auto [next, report] = splatc::merge_pass(map, s.merge);
        map = std::move(next);
        passes.push_back(report);
    }
    splatc::write_splat_ply(map, a.out);
    json j{{"input", a.in},
           {"output", a.out},
           {"primitives_before", before},
           {"primitives_after", map.size()},
           {"bytes_before", before * s.bytes_per_primitive},
           {"bytes_after", map.size() * s.bytes_per_primitive},
           {"passes", passes},
           {"settings", splatc::settings_json(s)}};
    emit_json(j, a.report);
    return 0;
}

// --- render ----------------------------------------------------------------

struct RenderArgs {
    std::string in;
    std::string poses;
    std::size_t pose_index = 0;
    std::string intrinsics;
    std::string out;
    std::string depth_out;
};

int run_render(const RenderArgs &a, const Overrides &o) {
    const auto s = o.resolve();
    const auto map = splatc::read_splat_ply(a.in);
    const auto poses = load_poses(a.poses);
    if (a.pose_index >= poses.size()) {
        throw splatc::InvalidArgument("pose index out of range");
    }
    const auto intr = view_intrinsics(a.intrinsics, s);
    const auto frame = splatc::rasterize(map, poses[a.pose_index], intr);
    splatc::write_color_png(frame.color, a.out);
    if (!a.depth_out.empty()) {
        splatc::write_depth_png(frame.depth, a.depth_out, s.depth_scale);
    }
    return 0;
}

// --- eval ------------------------------------------------------------------

struct EvalArgs {
    std::string rendered;
    std::string gt;
    std::string map;
    std::string reference;
    std::string in;
    std::string poses;
    std::string intrinsics;
    std::string out;
};

int run_eval(const EvalArgs &a, const Overrides &o) {
    const auto s = o.resolve();
    json j;
    if (!a.rendered.empty() || !a.gt.empty()) {
        if (a.rendered.empty() || a.gt.empty()) {
            throw splatc::InvalidArgument("--rendered and --gt must be given together");
        }
        const auto r = splatc::read_color_png(a.rendered);
        const auto g = splatc::read_color_png(a.gt);
        j["psnr"] = splatc::psnr(r, g);
        j["ssim"] = splatc::ssim(r, g);
        if (!a.map.empty()) {
            const auto map = splatc::read_splat_ply(a.map);
            j["loss"] = splatc::loss(r, g, map, s.lambda, s.lambda_iso);
            j["lambda"] = s.lambda;
            j["lambda_iso"] = s.lambda_iso;
        }
    } else if (!a.reference.empty() && !a.in.empty()) {
        const auto ref = splatc::read_splat_ply(a.reference);
        const auto cand = splatc::read_splat_ply(a.in);
        const auto poses = load_poses(a.poses);
        const auto intr = view_intrinsics(a.intrinsics, s);
        splatc::EvalReport rep;
        double psnr_sum = 0.0;
        double ssim_sum = 0.0;
        for (const auto &pose : poses) {
            const auto fr = splatc::rasterize(ref, pose, intr);
            const auto fc = splatc::rasterize(cand, pose, intr);
            const double p = splatc::psnr(fc.color, fr.color);
            rep.psnr_per_view.push_back(p);
            psnr_sum += p;
            ssim_sum += splatc::ssim(fc.color, fr.color);
        }
        rep.psnr = psnr_sum / static_cast<double>(poses.size());
        rep.ssim = ssim_sum / static_cast<double>(poses.size());
        rep.primitives_before = ref.size();
        rep.primitives_after = cand.size();
        rep.bytes_before = splatc::estimate_bytes(ref, s.bytes_per_primitive);
        rep.bytes_after = splatc::estimate_bytes(cand, s.bytes_per_primitive);
        j = rep;
    } else {
        throw splatc::InvalidArgument("eval needs --rendered/--gt or --reference/--in");
    }
    emit_json(j, a.out);
    return 0;
}

// --- report ----------------------------------------------------------------

struct ReportArgs {
    bool show_config = false;
    std::string in;
};

int run_report(const ReportArgs &a, const Overrides &o) {
    const auto s = o.resolve();
    json j;
    if (a.show_config) {
        j["config"] = splatc::settings_json(s);
    }
    if (!a.in.empty()) {
        const auto map = splatc::read_splat_ply(a.in);
        const auto mask = splatc::stability_mask(map, s.merge);
        const auto bins = splatc::bin_voxels(map, mask, s.merge.voxel_size);
        std::size_t largest = 0;
        std::size_t pairs = 0;
        for (const auto &[key, members] : bins) {
            largest = std::max(largest, members.size());
            pairs += members.size() * (members.size() - 1) / 2;
        }
        j["map"] = {{"path", a.in},
                    {"primitives", map.size()},
                    {"estimated_bytes", splatc::estimate_bytes(map, s.bytes_per_primitive)},
                    {"stable_primitives", std::count(mask.begin(), mask.end(), true)},
                    {"occupied_voxels", bins.size()},
                    {"largest_voxel", largest},
                    {"candidate_pairs", pairs}};
    }
    if (j.is_null()) {
        throw splatc::InvalidArgument("report needs --show-config and/or --in");
    }
    emit_json(j, "");
    return 0;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"splatc: voxel-space compaction of Gaussian splat maps"};
    app.require_subcommand(1);
    Overrides o;

    SynthArgs synth_args;
    auto *synth = app.add_subcommand("synth", "Generate a synthetic splat scene with duplicates");
    synth->add_option("--base", synth_args.cfg.base_count, "Number of base primitives");
    synth->add_option("--dup-fraction", synth_args.cfg.dup_fraction, "Share of duplicated primitives");
    synth->add_option("--jitter", synth_args.cfg.jitter_sigma, "Duplicate mean jitter sigma (m)");
    synth->add_option("--extent", synth_args.cfg.extent, "Half-width of the scene cube (m)");
    synth->add_option("--orbit", synth_args.cfg.orbit_poses, "Number of orbit poses");
    synth->add_option("--out", synth_args.out, "Output PLY")->required();
    synth->add_option("--poses-out", synth_args.poses_out, "Output orbit poses");
    synth->add_option("--intrinsics-out", synth_args.intrinsics_out, "Output intrinsics file");
    synth->add_option("--seed", o.seed, "Random seed");
    synth->add_option("--grad-tau", o.grad_tau, "Stability gradient threshold");
    synth->add_option("--width", o.width, "Intrinsics width");
    synth->add_option("--height", o.height, "Intrinsics height");
    synth->add_option("--fov", o.fov, "Horizontal field of view in degrees");
    add_config_flag(synth, o);

    SampleArgs sample_args;
    auto *sample = app.add_subcommand("sample", "Patch-Grid initialization from one keyframe");
    sample->add_option("--image", sample_args.image, "8-bit RGB PNG")->required();
    sample->add_option("--keypoints", sample_args.keypoints, "Keypoints CSV")->required();
    sample->add_option("--depth", sample_args.depth, "16-bit depth PNG (RGB-D mode)");
    sample->add_option("--depth-scale", o.depth_scale, "Raw depth units per meter");
    sample->add_option("--intrinsics", sample_args.intrinsics, "Intrinsics file")->required();
    sample->add_option("--pose", sample_args.pose, "Pose file (T_CW per line)");
    sample->add_option("--pose-index", sample_args.pose_index, "Line of the pose file to use");
    sample->add_option("--keyframe", sample_args.keyframe, "Keyframe index for new primitives");
    sample->add_option("--out", sample_args.out, "Output PLY")->required();
    add_sampler_flags(sample, o);
    add_config_flag(sample, o);

    CompactArgs compact_args;
    auto *compact = app.add_subcommand("compact", "Merge similar primitives in voxel space");
    compact->add_option("--in", compact_args.in, "Input PLY")->required();
    compact->add_option("--out", compact_args.out, "Output PLY")->required();
    compact->add_option("--report", compact_args.report, "JSON report path (stdout if omitted)");
    add_merge_flags(compact, o);
    add_config_flag(compact, o);

    RenderArgs render_args;
    auto *render = app.add_subcommand("render", "Render a splat map to PNG");
    render->add_option("--in", render_args.in, "Input PLY")->required();
    render->add_option("--poses", render_args.poses, "Pose file (identity if omitted)");
    render->add_option("--pose-index", render_args.pose_index, "Line of the pose file to use");
    render->add_option("--out", render_args.out, "Output color PNG")->required();
    render->add_option("--depth-out", render_args.depth_out, "Output 16-bit depth PNG");
    render->add_option("--depth-scale", o.depth_scale, "Raw depth units per meter");
    add_view_flags(render, o, render_args.intrinsics);
    add_config_flag(render, o);

    EvalArgs eval_args;
    auto *eval = app.add_subcommand("eval", "Image metrics, or map-vs-map orbit evaluation");
    eval->add_option("--rendered", eval_args.rendered, "Rendered color PNG");
    eval->add_option("--gt", eval_args.gt, "Ground-truth color PNG");
    eval->add_option("--map", eval_args.map, "Splat map for the isotropic loss term");
    eval->add_option("--lambda", o.lambda, "SSIM weight");
    eval->add_option("--lambda-iso", o.lambda_iso, "Isotropic term weight");
    eval->add_option("--reference", eval_args.reference, "Reference PLY (map mode)");
    eval->add_option("--in", eval_args.in, "Candidate PLY (map mode)");
    eval->add_option("--poses", eval_args.poses, "Pose file (map mode)");
    eval->add_option("--out", eval_args.out, "JSON output path (stdout if omitted)");
    add_view_flags(eval, o, eval_args.intrinsics);
    add_config_flag(eval, o);

    ReportArgs report_args;
    auto *report = app.add_subcommand("report", "Show effective configuration or map statistics");
    report->add_flag("--show-config", report_args.show_config, "Print effective configuration");
    report->add_option("--in", report_args.in, "PLY to summarize");
    add_merge_flags(report, o);
    add_sampler_flags(report, o);
    add_config_flag(report, o);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp &e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        std::cerr << "error: " << e.what() << "\n";
        std::cerr << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
        return 2;
    }

    try {
        if (synth->parsed()) return run_synth(synth_args, o);
        if (sample->parsed()) return run_sample(sample_args, o);
        if (compact->parsed()) return run_compact(compact_args, o);
        if (render->parsed()) return run_render(render_args, o);
        if (eval->parsed()) return run_eval(eval_args, o);
        if (report->parsed()) return run_report(report_args, o);
    } catch (const splatc::InvalidArgument &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
