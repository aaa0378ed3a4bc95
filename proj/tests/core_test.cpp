// Copyright Contributors to the splatc project
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "support.hpp"

using namespace splatc;
using splatc::testing::random_spd;

namespace {

double rel_frobenius(const Mat3 &a, const Mat3 &b) { return (a - b).norm() / b.norm(); }

Mat3 rotation_z_90() {
    Mat3 r;
    r << 0, -1, 0, 1, 0, 0, 0, 0, 1;
    return r;
}

} // namespace

TEST(CovarianceFromQs, IdentityRotationUnitScale) {
    EXPECT_TRUE(covariance_from_qs(Quat::Identity(), Vec3::Ones()).matrix().isApprox(Mat3::Identity()));
}

TEST(CovarianceFromQs, DiagonalSquaresScales) {
    const Mat3 expected = Vec3(4, 1, 1).asDiagonal();
    EXPECT_LT((covariance_from_qs(Quat::Identity(), Vec3(2, 1, 1)).matrix() - expected).norm(), 1e-15);
}

TEST(CovarianceFromQs, QuarterTurnAboutZSwapsAxes) {
    // Oracle: hand-written rotation matrix, not the quaternion path.
    const Mat3 r = rotation_z_90();
    const Mat3 s = Vec3(2, 1, 1).asDiagonal();
    const Mat3 oracle = r * s * s.transpose() * r.transpose();
    const Quat q(Eigen::AngleAxisd(M_PI / 2, Vec3::UnitZ()));
    const Mat3 got = covariance_from_qs(q, Vec3(2, 1, 1)).matrix();
    EXPECT_LT((got - oracle).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(got(0, 0), 1.0, 1e-12);
    EXPECT_NEAR(got(1, 1), 4.0, 1e-12);
    EXPECT_NEAR(got(2, 2), 1.0, 1e-12);
}

TEST(CovarianceFromQs, RenormalizesQuaternion) {
    const Quat q(2.0, 0.0, 0.0, 0.0);
    EXPECT_TRUE(covariance_from_qs(q, Vec3(2, 1, 1)).matrix().isApprox(Mat3(Vec3(4, 1, 1).asDiagonal())));
}

TEST(CovarianceFromQs, RejectsNonFinite) {
    EXPECT_THROW(covariance_from_qs(Quat::Identity(), Vec3(NAN, 1, 1)), InvalidArgument);
    EXPECT_THROW(covariance_from_qs(Quat(INFINITY, 0, 0, 0), Vec3::Ones()), InvalidArgument);
    EXPECT_THROW(covariance_from_qs(Quat(0, 0, 0, 0), Vec3::Ones()), InvalidArgument);
}

TEST(CovarianceMatrix, SymmetrizesAndClampsEigenvalues) {
    Mat3 m = Mat3::Zero();
    m(0, 1) = 1e-13;
    const CovarianceMatrix cov(m);
    EXPECT_LT(std::abs(cov(0, 1) - cov(1, 0)), 1e-12);
    Eigen::SelfAdjointEigenSolver<Mat3> evd(cov.matrix());
    EXPECT_GE(evd.eigenvalues().minCoeff(), kPdEpsilon * (1 - 1e-9));
}

TEST(QsFromCovariance, IdentityGivesUnitScale) {
    const auto rs = qs_from_covariance(CovarianceMatrix(Mat3::Identity()));
    EXPECT_TRUE(rs.scale.isApprox(Vec3::Ones()));
    EXPECT_TRUE(covariance_from_qs(rs.rotation, rs.scale).matrix().isApprox(Mat3::Identity()));
}

TEST(QsFromCovariance, DiagonalKeepsXAxis) {
    const auto rs = qs_from_covariance(CovarianceMatrix(Mat3(Vec3(4, 1, 1).asDiagonal())));
    EXPECT_NEAR(rs.scale(0), 2.0, 1e-12);
    EXPECT_NEAR(rs.scale(1), 1.0, 1e-12);
    EXPECT_NEAR(rs.scale(2), 1.0, 1e-12);
    const Vec3 x = rs.rotation.toRotationMatrix().col(0);
    EXPECT_NEAR(std::abs(x.x()), 1.0, 1e-12);
}

TEST(QsFromCovariance, EigenvaluesDescendingAndRightHanded) {
    Rng rng(7);
    for (int k = 0; k < 100; ++k) {
        const auto rs = qs_from_covariance(CovarianceMatrix(random_spd(rng, 1e-4, 1.0)));
        EXPECT_GE(rs.scale(0), rs.scale(1));
        EXPECT_GE(rs.scale(1), rs.scale(2));
        EXPECT_NEAR(rs.rotation.norm(), 1.0, 1e-12);
        EXPECT_NEAR(rs.rotation.toRotationMatrix().determinant(), 1.0, 1e-9);
    }
}

TEST(QsFromCovariance, RoundTripPropertyOver1000Samples) {
    Rng rng(2024);
    double worst = 0.0;
    for (int k = 0; k < 1000; ++k) {
        const Quat q = rng.rotation();
        const Vec3 s(splatc::testing::log_uniform(rng, 1e-3, 1.0),
                     splatc::testing::log_uniform(rng, 1e-3, 1.0),
                     splatc::testing::log_uniform(rng, 1e-3, 1.0));
        const CovarianceMatrix cov = covariance_from_qs(q, s);
        Eigen::SelfAdjointEigenSolver<Mat3> evd(cov.matrix());
        ASSERT_GT(evd.eigenvalues().minCoeff(), 0.0);
        ASSERT_LT((cov.matrix() - cov.matrix().transpose()).cwiseAbs().maxCoeff(), 1e-12);
        const auto rs = qs_from_covariance(cov);
        worst = std::max(worst, rel_frobenius(covariance_from_qs(rs.rotation, rs.scale).matrix(),
                                              cov.matrix()));
    }
    EXPECT_LT(worst, 1e-8);
}

TEST(QsFromCovariance, ScaleFloor) {
    const auto rs = qs_from_covariance(CovarianceMatrix(Mat3::Zero()));
    EXPECT_GE(rs.scale.minCoeff(), kScaleEpsilon);
}

TEST(ShToColor, ZeroIsMidGray) { EXPECT_TRUE(sh_to_color(Vec3::Zero()).isApprox(Vec3::Constant(0.5))); }

TEST(ShToColor, SaturatesRedChannel) {
    // 0.5 + C0 * 1.7754 = 1.000831..., clamped to 1.
    const Vec3 c = sh_to_color(Vec3(1.7754, 0, 0));
    EXPECT_DOUBLE_EQ(c(0), 1.0);
    EXPECT_DOUBLE_EQ(c(1), 0.5);
    EXPECT_DOUBLE_EQ(c(2), 0.5);
    EXPECT_NEAR(0.5 + kShC0 * 1.7754, 1.000831, 1e-6);
}

TEST(ShToColor, ClampsFloor) { EXPECT_TRUE(sh_to_color(Vec3::Constant(-10)).isZero()); }

TEST(ShToColor, InvertsColorToSh) {
    const Vec3 rgb(0.1, 0.6, 0.9);
    EXPECT_TRUE(sh_to_color(color_to_sh(rgb)).isApprox(rgb, 1e-14));
}

TEST(GaussianPrimitive, InvariantsEnforced) {
    GaussianPrimitive g;
    g.rotation = Quat(3, 0, 4, 0);
    g.scale = Vec3(-0.5, 0.0, 1e-9);
    g.opacity = 1.5;
    g.grad_stat = -1;
    enforce_invariants(g);
    EXPECT_NEAR(g.rotation.norm(), 1.0, 1e-9);
    EXPECT_GE(g.scale.minCoeff(), kScaleEpsilon);
    EXPECT_DOUBLE_EQ(g.scale(0), 0.5);
    EXPECT_DOUBLE_EQ(g.opacity, 1.0);
    EXPECT_DOUBLE_EQ(g.grad_stat, 0.0);
    g.mean.x() = NAN;
    EXPECT_THROW(enforce_invariants(g), InvalidArgument);
}

TEST(CameraPose, RejectsImproperRotation) {
    EXPECT_THROW(CameraPose(Mat3(Vec3(1, 1, -1).asDiagonal()), Vec3::Zero()), InvalidArgument);
    EXPECT_THROW(CameraPose(2 * Mat3::Identity(), Vec3::Zero()), InvalidArgument);
    EXPECT_NO_THROW(CameraPose(rotation_z_90(), Vec3(1, 2, 3)));
}

TEST(CameraPose, RoundTripsPoints) {
    const CameraPose pose = CameraPose::look_at(Vec3(2, 0, 0), Vec3::Zero(), Vec3::UnitZ());
    const Vec3 p(0.3, -0.2, 0.7);
    EXPECT_TRUE(pose.to_world(pose.to_camera(p)).isApprox(p, 1e-14));
    // Target lies on the optical axis in front of the camera.
    const Vec3 c = pose.to_camera(Vec3::Zero());
    EXPECT_NEAR(c.x(), 0.0, 1e-14);
    EXPECT_NEAR(c.y(), 0.0, 1e-14);
    EXPECT_NEAR(c.z(), 2.0, 1e-14);
}

TEST(CameraPose, FromMatrixProjectsRoundedRotation) {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rotation_z_90();
    m(0, 1) = -0.99999999;
    const CameraPose pose = CameraPose::from_matrix(m);
    EXPECT_LT((pose.rotation().transpose() * pose.rotation() - Mat3::Identity()).norm(), 1e-12);
    m(0, 1) = -0.5;
    EXPECT_THROW(CameraPose::from_matrix(m), InvalidArgument);
}

TEST(PinholeIntrinsics, ProjectBackProject) {
    const auto k = PinholeIntrinsics::from_fov(64, 48, 60);
    const Vec3 p = k.back_project(10.5, 7.25, 2.0);
    const Vec2 uv = k.project(p);
    EXPECT_NEAR(uv.x(), 10.5, 1e-12);
    EXPECT_NEAR(uv.y(), 7.25, 1e-12);
    PinholeIntrinsics bad = k;
    bad.fx = 0;
    EXPECT_THROW(bad.validate(), InvalidArgument);
}

TEST(SplatMap, InsertionIndicesAreUniqueAndMonotone) {
    SplatMap map;
    EXPECT_EQ(map.insert(GaussianPrimitive{}), 0u);
    EXPECT_EQ(map.insert(GaussianPrimitive{}), 1u);
    GaussianPrimitive g;
    g.insertion_index = 10;
    map.adopt(g);
    EXPECT_EQ(map.next_insertion_index(), 11u);
    EXPECT_THROW(map.adopt(g), InvalidArgument);
    EXPECT_EQ(map.insert(GaussianPrimitive{}), 11u);
    for (const auto &p : map) {
        EXPECT_LT(p.insertion_index, map.next_insertion_index());
    }
}
