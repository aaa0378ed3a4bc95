// Copyright Contributors to the splatc project
// SPDX-License-Identifier: Apache-2.0

#include <sstream>

#include <gtest/gtest.h>

#include "support.hpp"

using namespace splatc;
using splatc::testing::TempDir;
using splatc::testing::slurp;
using splatc::testing::spit;

namespace {

SplatMap random_map(std::uint64_t seed, int n, int sh_rest = 0) {
    Rng rng(seed);
    SplatMap map;
    for (int k = 0; k < n; ++k) {
        auto g = splatc::testing::random_primitive(rng, 1.0);
        for (int r = 0; r < sh_rest; ++r) {
            g.sh_rest.push_back(static_cast<float>(rng.uniform(-1, 1)));
        }
        map.insert(g);
    }
    return map;
}

/// Header of a minimal splat PLY listing `props` as float properties.
std::string header_with(const std::vector<std::string> &props, std::size_t count) {
    std::string h = "ply\nformat binary_little_endian 1.0\nelement vertex " +
                    std::to_string(count) + "\n";
    for (const auto &p : props) {
        h += "property float " + p + "\n";
    }
    return h + "end_header\n";
}

} // namespace

TEST(SplatPly, WriteReadWriteIsByteIdentical) {
    TempDir dir;
    const SplatMap map = random_map(1, 200, 9);
    write_splat_ply(map, dir.file("a.ply"));
    const SplatMap back = read_splat_ply(dir.file("a.ply"));
    write_splat_ply(back, dir.file("b.ply"));
    EXPECT_EQ(slurp(dir.file("a.ply")), slurp(dir.file("b.ply")));
}

TEST(SplatPly, ReadBackMatchesFloatRoundedValues) {
    TempDir dir;
    const SplatMap map = random_map(2, 50, 3);
    write_splat_ply(map, dir.file("a.ply"));
    const SplatMap back = read_splat_ply(dir.file("a.ply"));
    ASSERT_EQ(back.size(), map.size());
    auto f = [](double v) { return static_cast<double>(static_cast<float>(v)); };
    for (std::size_t k = 0; k < map.size(); ++k) {
        const auto &a = map[k];
        const auto &b = back[k];
        for (int c = 0; c < 3; ++c) {
            EXPECT_EQ(b.mean(c), f(a.mean(c)));
            EXPECT_EQ(b.scale(c), f(a.scale(c)));
            EXPECT_EQ(b.color(c), f(a.color(c)));
        }
        EXPECT_EQ(b.opacity, f(a.opacity));
        EXPECT_EQ(b.grad_stat, f(a.grad_stat));
        EXPECT_EQ(b.keyframe_index, a.keyframe_index);
        EXPECT_EQ(b.sh_rest, a.sh_rest);
        EXPECT_EQ(b.insertion_index, k);
        EXPECT_NEAR(std::abs(b.rotation.dot(a.rotation)), 1.0, 1e-6);
        EXPECT_NEAR(b.rotation.norm(), 1.0, 1e-12);
    }
}

TEST(SplatPly, EmptyMapRoundTrips) {
    TempDir dir;
    write_splat_ply(SplatMap{}, dir.file("e.ply"));
    EXPECT_NE(slurp(dir.file("e.ply")).find("element vertex 0\n"), std::string::npos);
    EXPECT_TRUE(read_splat_ply(dir.file("e.ply")).empty());
}

TEST(SplatPly, PayloadSizeIsCountTimesPropertiesTimesFour) {
    const SplatMap map = random_map(3, 2);
    const std::string bytes = encode_splat_ply(map);
    const auto header_end = bytes.find("end_header\n") + std::string("end_header\n").size();
    const auto props = splat_ply_property_names(0).size();
    EXPECT_EQ(bytes.size() - header_end, 2 * props * 4);
    EXPECT_NE(bytes.find("element vertex 2\n"), std::string::npos);
}

TEST(SplatPly, EncodingIsDeterministic) {
    EXPECT_EQ(encode_splat_ply(random_map(4, 30)), encode_splat_ply(random_map(4, 30)));
}

TEST(SplatPly, MissingMandatoryPropertyIsNamed) {
    TempDir dir;
    std::vector<std::string> props = {"x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity",
                                      "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2"};
    spit(dir.file("m.ply"), header_with(props, 0));
    try {
        read_splat_ply(dir.file("m.ply"));
        FAIL() << "expected FormatError";
    } catch (const FormatError &e) {
        EXPECT_STREQ(e.what(), "missing property rot_3");
    }
}

TEST(SplatPly, RejectsIntegerMandatoryProperty) {
    TempDir dir;
    std::string h = header_with({"x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0",
                                 "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"},
                                0);
    h.replace(h.find("property float opacity"), 22, "property uchar opacity");
    spit(dir.file("i.ply"), h);
    EXPECT_THROW(read_splat_ply(dir.file("i.ply")), FormatError);
}

TEST(SplatPly, TruncatedPayloadReportsByteOffset) {
    TempDir dir;
    const std::string bytes = encode_splat_ply(random_map(5, 3));
    const std::size_t cut = bytes.size() - 10;
    spit(dir.file("t.ply"), bytes.substr(0, cut));
    try {
        read_splat_ply(dir.file("t.ply"));
        FAIL() << "expected IoError";
    } catch (const IoError &e) {
        EXPECT_EQ(e.byte_offset(), static_cast<std::int64_t>(cut));
    }
}

TEST(SplatPly, LogitAndLogFlagsAreActivated) {
    TempDir dir;
    std::string h = header_with({"x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0",
                                 "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3", "nx"},
                                1);
    h.insert(h.find("element"), "comment opacity_space logit\ncomment scale_space log\n");
    std::string payload;
    for (float v : {0.f, 0.f, 0.f, 0.f, 0.f, 0.f, 0.f, std::log(0.5f), 0.f, 0.f, 2.f, 0.f, 0.f,
                    0.f, 9.f}) {
        detail::store_le(payload, v);
    }
    spit(dir.file("l.ply"), h + payload);
    const SplatMap map = read_splat_ply(dir.file("l.ply"));
    ASSERT_EQ(map.size(), 1u);
    EXPECT_NEAR(map[0].opacity, 0.5, 1e-12);
    EXPECT_NEAR(map[0].scale(0), 0.5, 1e-7);
    EXPECT_NEAR(map[0].scale(1), 1.0, 1e-12);
    EXPECT_NEAR(map[0].rotation.w(), 1.0, 1e-12);
    EXPECT_DOUBLE_EQ(map[0].grad_stat, 0.0);
}

TEST(SplatPly, MissingFileIsIoError) { EXPECT_THROW(read_splat_ply("/nonexistent/x.ply"), IoError); }

TEST(SplatPly, UnwritablePathIsIoError) {
    EXPECT_THROW(write_splat_ply(SplatMap{}, "/nonexistent/dir/x.ply"), IoError);
}

TEST(KeypointsCsv, ParsesRows) {
    std::istringstream in("u,v,depth,active\n10.5,20.0,1.25,1\n10.5,20.0,,0\n");
    const auto kps = parse_keypoints_csv(in);
    ASSERT_EQ(kps.size(), 2u);
    EXPECT_DOUBLE_EQ(kps[0].u, 10.5);
    EXPECT_DOUBLE_EQ(kps[0].v, 20.0);
    EXPECT_DOUBLE_EQ(kps[0].depth, 1.25);
    EXPECT_TRUE(kps[0].active);
    EXPECT_FALSE(kps[1].has_depth());
    EXPECT_FALSE(kps[1].active);
}

TEST(KeypointsCsv, MalformedRowReportsLineNumber) {
    std::istringstream in("u,v,depth,active\na,b,c,d\n");
    try {
        parse_keypoints_csv(in);
        FAIL() << "expected ParseError";
    } catch (const ParseError &e) {
        EXPECT_EQ(e.line(), 2u);
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    }
}

TEST(KeypointsCsv, RejectsWrongHeader) {
    std::istringstream in("x,y\n1,2\n");
    EXPECT_THROW(parse_keypoints_csv(in), ParseError);
}

TEST(KeypointsCsv, WriteReadRoundTrip) {
    TempDir dir;
    const std::vector<KeypointRecord> kps = {{1.25, 2.5, 3.0, true}, {4.0, 5.0, NAN, false}};
    write_keypoints_csv(kps, dir.file("k.csv"));
    const auto back = read_keypoints_csv(dir.file("k.csv"));
    ASSERT_EQ(back.size(), 2u);
    EXPECT_DOUBLE_EQ(back[0].depth, 3.0);
    EXPECT_TRUE(std::isnan(back[1].depth));
}

TEST(Poses, WriteReadRoundTrip) {
    TempDir dir;
    const auto poses = orbit_poses(5, 2.0);
    write_poses(poses, dir.file("p.txt"));
    const auto back = read_poses(dir.file("p.txt"));
    ASSERT_EQ(back.size(), poses.size());
    for (std::size_t k = 0; k < poses.size(); ++k) {
        EXPECT_LT((back[k].matrix() - poses[k].matrix()).cwiseAbs().maxCoeff(), 1e-15);
    }
}

TEST(Poses, RejectsShortLine) {
    TempDir dir;
    spit(dir.file("p.txt"), "1 0 0 0 0 1 0 0 0 0 1 0 0 0 0\n");
    EXPECT_THROW(read_poses(dir.file("p.txt")), ParseError);
}

TEST(Intrinsics, WriteReadRoundTrip) {
    TempDir dir;
    const auto k = PinholeIntrinsics::from_fov(640, 480, 70);
    write_intrinsics(k, dir.file("k.txt"));
    const auto b = read_intrinsics(dir.file("k.txt"));
    EXPECT_EQ(b.fx, k.fx);
    EXPECT_EQ(b.cy, k.cy);
    EXPECT_EQ(b.width, 640);
    EXPECT_EQ(b.height, 480);
}

TEST(DepthPng, ScalesRawUnitsAndMapsZeroToNan) {
    TempDir dir;
    Image raw(3, 1, 1);
    raw.at(0, 0) = 1.0;
    raw.at(1, 0) = NAN;
    raw.at(2, 0) = 2.5;
    write_depth_png(raw, dir.file("d.png"), 5000.0);
    const Image d = read_depth_png(dir.file("d.png"), 5000.0);
    EXPECT_DOUBLE_EQ(d.at(0, 0), 1.0);
    EXPECT_TRUE(std::isnan(d.at(1, 0)));
    EXPECT_DOUBLE_EQ(d.at(2, 0), 2.5);
}

TEST(DepthPng, RejectsEightBitImage) {
    TempDir dir;
    write_color_png(Image(2, 2, 3, 0.5), dir.file("c.png"));
    EXPECT_THROW(read_depth_png(dir.file("c.png")), FormatError);
}

TEST(ColorPng, RoundTripsEightBitValues) {
    TempDir dir;
    Image img(4, 3, 3);
    for (std::size_t k = 0; k < img.data.size(); ++k) {
        img.data[k] = static_cast<double>((k * 37) % 256) / 255.0;
    }
    write_color_png(img, dir.file("c.png"));
    const Image back = read_color_png(dir.file("c.png"));
    ASSERT_TRUE(back.same_shape(img));
    for (std::size_t k = 0; k < img.data.size(); ++k) {
        EXPECT_NEAR(back.data[k], img.data[k], 1e-12);
    }
}

TEST(ColorPng, GarbageIsFormatError) {
    TempDir dir;
    spit(dir.file("g.png"), "not a png at all");
    EXPECT_THROW(read_color_png(dir.file("g.png")), FormatError);
}

TEST(PlyQuaternion, SnappedQuaternionIsStableUnderReread) {
    Rng rng(17);
    for (int trial = 0; trial < 100000; ++trial) {
        Quat q = rng.rotation();
        if (trial % 3 == 0) {
            q.x() *= 1e-3; // small components drift most under renormalization
        }
        const auto f = detail::stable_float_quaternion(q);
        ASSERT_TRUE(detail::is_float_quaternion_fixed_point(f));
        GaussianPrimitive g;
        g.rotation = Quat(f[0], f[1], f[2], f[3]);
        enforce_invariants(g);
        ASSERT_EQ(detail::stable_float_quaternion(g.rotation), f);
    }
}
