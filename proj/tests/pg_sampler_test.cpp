// Copyright Contributors to the splatc project
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "oracles/nearest_keypoint_oracle.hpp"
#include "support.hpp"

using namespace splatc;

namespace {

PatchGridConfig grid_cfg(int patch = 32, int min_kp = 2, int samples = 4, std::uint64_t seed = 0) {
    PatchGridConfig cfg;
    cfg.patch_size = patch;
    cfg.min_keypoints_per_patch = min_kp;
    cfg.samples_per_patch = samples;
    cfg.rng_seed = seed;
    return cfg;
}

std::vector<KeypointRecord> random_keypoints(Rng &rng, int n, double w, double h, bool depth) {
    std::vector<KeypointRecord> kps;
    for (int k = 0; k < n; ++k) {
        KeypointRecord r;
        r.u = rng.uniform(0, w);
        r.v = rng.uniform(0, h);
        r.depth = depth ? rng.uniform(0.5, 4.0) : NAN;
        r.active = rng.uniform() < 0.3;
        kps.push_back(r);
    }
    return kps;
}

} // namespace

TEST(PartitionPatches, VgaGivesThreeHundred) {
    const auto grid = partition_patches(640, 480, grid_cfg());
    EXPECT_EQ(grid.cols, 20);
    EXPECT_EQ(grid.rows, 15);
    EXPECT_EQ(grid.patches.size(), 300u);
}

TEST(PartitionPatches, EdgePatchesAreNarrow) {
    const auto grid = partition_patches(100, 100, grid_cfg());
    ASSERT_EQ(grid.patches.size(), 16u);
    EXPECT_EQ(grid.patches[3].width, 4);
    EXPECT_EQ(grid.patches[15].height, 4);
    EXPECT_EQ(grid.patches[15].width, 4);
}

TEST(PartitionPatches, SinglePatch) { EXPECT_EQ(partition_patches(32, 32, grid_cfg()).patches.size(), 1u); }

TEST(PartitionPatches, TilesExactlyWithoutOverlap) {
    for (auto [w, h, p] : {std::tuple{100, 37, 8}, std::tuple{5, 5, 4}, std::tuple{640, 480, 30}}) {
        const auto grid = partition_patches(w, h, grid_cfg(p));
        std::vector<int> hits(static_cast<std::size_t>(w * h), 0);
        for (const auto &r : grid.patches) {
            for (int y = r.y0; y < r.y0 + r.height; ++y) {
                for (int x = r.x0; x < r.x0 + r.width; ++x) {
                    ++hits[static_cast<std::size_t>(y * w + x)];
                }
            }
        }
        EXPECT_TRUE(std::all_of(hits.begin(), hits.end(), [](int c) { return c == 1; }));
    }
}

TEST(PartitionPatches, RejectsZeroDimensions) {
    EXPECT_THROW(partition_patches(0, 10, grid_cfg()), InvalidArgument);
    EXPECT_THROW(partition_patches(10, 10, grid_cfg(2)), InvalidArgument);
}

TEST(SampleSparsePatches, DensePatchEmitsNothing) {
    const auto grid = partition_patches(32, 32, grid_cfg());
    std::vector<KeypointRecord> kps(5, KeypointRecord{10, 10, 1.0, true});
    const auto res = sample_sparse_patches(kps, grid, grid_cfg());
    EXPECT_EQ(res.samples_added, 0u);
    EXPECT_EQ(res.points.size(), 5u);
}

TEST(SampleSparsePatches, EmptyPatchGetsExactlyNInside) {
    const auto grid = partition_patches(64, 32, grid_cfg());
    std::vector<KeypointRecord> kps(3, KeypointRecord{5, 5, 1.0, true});
    const auto res = sample_sparse_patches(kps, grid, grid_cfg());
    EXPECT_EQ(res.samples_added, 4u);
    EXPECT_EQ(res.sparse_patches, 1u);
    for (std::size_t k = 3; k < res.points.size(); ++k) {
        EXPECT_EQ(res.points[k].source, PointSource::pg_sample);
        EXPECT_TRUE(grid.patches[1].contains(res.points[k].u, res.points[k].v));
    }
}

TEST(SampleSparsePatches, KeypointsPassThroughUnchanged) {
    Rng rng(3);
    const auto kps = random_keypoints(rng, 40, 200, 100, true);
    const auto grid = partition_patches(200, 100, grid_cfg());
    const auto res = sample_sparse_patches(kps, grid, grid_cfg());
    for (std::size_t k = 0; k < kps.size(); ++k) {
        EXPECT_EQ(res.points[k].u, kps[k].u);
        EXPECT_EQ(res.points[k].v, kps[k].v);
        EXPECT_EQ(res.points[k].depth, kps[k].depth);
        EXPECT_EQ(res.points[k].source, PointSource::keypoint);
    }
}

TEST(SampleSparsePatches, DeterministicUnderSeedAndSensitiveToIt) {
    Rng rng(4);
    const auto kps = random_keypoints(rng, 30, 320, 240, true);
    const auto grid = partition_patches(320, 240, grid_cfg());
    const auto a = sample_sparse_patches(kps, grid, grid_cfg(32, 2, 5, 11));
    const auto b = sample_sparse_patches(kps, grid, grid_cfg(32, 2, 5, 11));
    const auto c = sample_sparse_patches(kps, grid, grid_cfg(32, 2, 5, 12));
    ASSERT_EQ(a.points.size(), b.points.size());
    bool differs = false;
    for (std::size_t k = 0; k < a.points.size(); ++k) {
        EXPECT_EQ(a.points[k].u, b.points[k].u);
        EXPECT_EQ(a.points[k].v, b.points[k].v);
        differs |= a.points[k].u != c.points[k].u;
    }
    EXPECT_TRUE(differs);
}

TEST(SampleSparsePatches, CoverageAndContainmentProperty) {
    Rng rng(5);
    for (int trial = 0; trial < 30; ++trial) {
        const int w = 16 + static_cast<int>(rng.index(300));
        const int h = 16 + static_cast<int>(rng.index(200));
        const auto cfg = grid_cfg(4 + static_cast<int>(rng.index(40)), static_cast<int>(rng.index(5)),
                                  1 + static_cast<int>(rng.index(9)), trial);
        const auto kps = random_keypoints(rng, static_cast<int>(rng.index(80)), w, h, true);
        const auto grid = partition_patches(w, h, cfg);
        const auto res = sample_sparse_patches(kps, grid, cfg);
        std::vector<int> counts(grid.patches.size(), 0);
        for (const auto &p : res.points) {
            const long idx = grid.patch_of(p.u, p.v);
            ASSERT_GE(idx, 0);
            ++counts[static_cast<std::size_t>(idx)];
        }
        const int floor = std::min(cfg.min_keypoints_per_patch, cfg.samples_per_patch);
        for (int c : counts) {
            EXPECT_GE(c, floor);
        }
    }
}

TEST(AssignDepth, SensorDepthPreferred) {
    Image depth(4, 4, 1, 1.5);
    const std::vector<KeypointRecord> kps = {{0, 0, 9.0, true}};
    const DepthAnchors anchors(kps);
    const auto p = assign_depth({1.2, 2.4}, &depth, anchors);
    ASSERT_TRUE(p);
    EXPECT_DOUBLE_EQ(p->depth, 1.5);
}

TEST(AssignDepth, InvalidSensorPixelFallsBackToKeypoint) {
    Image depth(4, 4, 1, NAN);
    const std::vector<KeypointRecord> kps = {{3, 0, 2.0, true}, {100, 100, 7.0, true}};
    const auto p = assign_depth({0, 0}, &depth, DepthAnchors(kps));
    ASSERT_TRUE(p);
    EXPECT_DOUBLE_EQ(p->depth, 2.0);
}

TEST(AssignDepth, TieGoesToLowestIndex) {
    std::vector<KeypointRecord> kps(8, KeypointRecord{500, 500, 9.0, true});
    kps[3] = {10, 0, 1.0, true};
    kps[7] = {0, 10, 2.0, true};
    const auto p = assign_depth({0, 0}, nullptr, DepthAnchors(kps));
    ASSERT_TRUE(p);
    EXPECT_DOUBLE_EQ(p->depth, 1.0);
}

TEST(AssignDepth, NoSourceIsDropped) {
    const std::vector<KeypointRecord> kps = {{1, 1, NAN, false}};
    EXPECT_FALSE(assign_depth({0, 0}, nullptr, DepthAnchors(kps)));
    const std::vector<SampledPoint> pts = {{0, 0}, {1, 1}};
    const auto res = assign_depths(pts, nullptr, kps);
    EXPECT_EQ(res.skipped, 2u);
    EXPECT_TRUE(res.points.empty());
}

TEST(AssignDepth, MonocularMatchesBruteForceOracle) {
    Rng rng(6);
    const auto kps = random_keypoints(rng, 60, 640, 480, true);
    std::vector<SampledPoint> pts;
    for (int k = 0; k < 500; ++k) {
        pts.push_back({rng.uniform(0, 640), rng.uniform(0, 480)});
    }
    const auto res = assign_depths(pts, nullptr, kps);
    ASSERT_EQ(res.points.size(), pts.size());
    for (std::size_t k = 0; k < pts.size(); ++k) {
        EXPECT_EQ(res.points[k].depth, *oracle::nearest_keypoint_depth(kps, pts[k].u, pts[k].v));
    }
}

TEST(InitializePrimitives, PrincipalPointBackProjects) {
    PinholeIntrinsics k{100, 100, 0, 0, 10, 10};
    const std::vector<SampledPoint> pts = {{0, 0, 2.0}};
    const auto res = initialize_primitives(pts, CameraPose{}, k, Image{});
    ASSERT_EQ(res.primitives.size(), 1u);
    EXPECT_TRUE(res.primitives[0].mean.isApprox(Vec3(0, 0, 2)));
    // Single point: no neighbors, scale clamps to the ceiling.
    EXPECT_TRUE(res.primitives[0].scale.isApprox(Vec3::Constant(kMaxInitialScale)));
}

TEST(InitializePrimitives, TranslatedPoseBackProjectsToWorld) {
    // T_CW with t = (0,0,-1): camera point (0,0,2) maps to world (0,0,3).
    const CameraPose pose(Mat3::Identity(), Vec3(0, 0, -1));
    PinholeIntrinsics k{100, 100, 5, 5, 10, 10};
    const std::vector<SampledPoint> pts = {{5, 5, 2.0}};
    const auto res = initialize_primitives(pts, pose, k, Image{});
    EXPECT_TRUE(res.primitives[0].mean.isApprox(Vec3(0, 0, 3)));
}

TEST(InitializePrimitives, AttributesAndSkips) {
    PinholeIntrinsics k = PinholeIntrinsics::from_fov(8, 8, 60);
    Image rgb(8, 8, 3, 0.25);
    const std::vector<SampledPoint> pts = {{1, 1, 1.0}, {2, 1, 1.0}, {3, 1, -1.0}, {4, 1, 1.0},
                                           {1, 2, 1.0}};
    const auto res = initialize_primitives(pts, CameraPose{}, k, rgb, 10, 3);
    EXPECT_EQ(res.skipped, 1u);
    ASSERT_EQ(res.primitives.size(), 4u);
    for (std::size_t n = 0; n < res.primitives.size(); ++n) {
        const auto &g = res.primitives[n];
        EXPECT_EQ(g.insertion_index, 10 + n);
        EXPECT_EQ(g.keyframe_index, 3u);
        EXPECT_DOUBLE_EQ(g.opacity, 0.5);
        EXPECT_DOUBLE_EQ(g.grad_stat, 0.0);
        EXPECT_TRUE(g.rotation.coeffs().isApprox(Quat::Identity().coeffs()));
        EXPECT_TRUE(sh_to_color(g.color).isApprox(Vec3::Constant(0.25), 1e-12));
        EXPECT_EQ(g.scale(0), g.scale(1));
        EXPECT_GE(g.scale(0), kScaleEpsilon);
        EXPECT_LE(g.scale(0), kMaxInitialScale);
    }
}

TEST(InitializePrimitives, ScaleIsMeanOfThreeNearest) {
    PinholeIntrinsics k{1, 1, 0, 0, 100, 100};
    // Camera-frame points on the z = 1 plane at x = 0, 0.1, 0.3, 0.6, 1.0.
    std::vector<SampledPoint> pts;
    for (double x : {0.0, 0.1, 0.3, 0.6, 1.0}) {
        pts.push_back({x, 0, 1.0});
    }
    const auto res = initialize_primitives(pts, CameraPose{}, k, Image{});
    EXPECT_NEAR(res.primitives[0].scale(0), (0.1 + 0.3 + 0.6) / 3, 1e-12);
    EXPECT_NEAR(res.primitives[2].scale(0), (0.2 + 0.3 + 0.3) / 3, 1e-12);
}

TEST(InitializePrimitives, ProjectionConsistencyProperty) {
    Rng rng(8);
    const auto k = PinholeIntrinsics::from_fov(320, 240, 75);
    for (int trial = 0; trial < 20; ++trial) {
        const CameraPose pose = CameraPose::look_at(
            Vec3(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)), Vec3::Zero(),
            Vec3::UnitZ());
        std::vector<SampledPoint> pts;
        for (int n = 0; n < 20; ++n) {
            pts.push_back({rng.uniform(0, 319), rng.uniform(0, 239), rng.uniform(0.2, 5)});
        }
        const auto res = initialize_primitives(pts, pose, k, Image{});
        for (std::size_t n = 0; n < pts.size(); ++n) {
            const Vec2 uv = k.project(pose.to_camera(res.primitives[n].mean));
            EXPECT_LT((uv - Vec2(pts[n].u, pts[n].v)).norm(), 0.5);
        }
    }
}
