// Copyright Contributors to the splatc project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>

#include "splatc/error.hpp"

namespace splatc {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

/// Smallest scale component a primitive may carry (meters).
inline constexpr double kScaleEpsilon = 1e-7;
/// Smallest eigenvalue a covariance may carry (meters^2).
inline constexpr double kPdEpsilon = 1e-12;
/// Degree-0 real spherical harmonic basis constant, 1 / (2 sqrt(pi)).
inline constexpr double kShC0 = 0.28209479177387814;

namespace detail {

inline bool all_finite(const auto &m) { return m.array().isFinite().all(); }

inline Mat3 symmetrize(const Mat3 &m) { return 0.5 * (m + m.transpose()); }

} // namespace detail

/// Symmetric positive definite 3x3 covariance, in meters^2.
///
/// Construction symmetrizes the input and lifts any eigenvalue below
/// kPdEpsilon up to it, so every instance is safe to invert.
class CovarianceMatrix {
public:
    CovarianceMatrix() : m_(Mat3::Identity()) {}

    explicit CovarianceMatrix(const Mat3 &m) {
        if (!detail::all_finite(m)) {
            throw InvalidArgument("covariance has non-finite entries");
        }
        m_ = detail::symmetrize(m);
        Eigen::SelfAdjointEigenSolver<Mat3> evd(m_);
        if (evd.info() != Eigen::Success || !detail::all_finite(evd.eigenvalues())) {
            throw DegenerateCovariance("eigen decomposition of covariance failed");
        }
        if (evd.eigenvalues().minCoeff() < kPdEpsilon) {
            const Vec3 clamped = evd.eigenvalues().cwiseMax(kPdEpsilon);
            m_ = detail::symmetrize(evd.eigenvectors() * clamped.asDiagonal() *
                                    evd.eigenvectors().transpose());
        }
    }

    const Mat3 &matrix() const noexcept { return m_; }
    double operator()(int r, int c) const { return m_(r, c); }

private:
    Mat3 m_;
};

/// Rotation and per-axis scale (standard deviations) of a covariance.
struct RotationScale {
    Quat rotation = Quat::Identity();
    Vec3 scale = Vec3::Ones();
};

/// Sigma = R S S^T R^T with S = diag(scale). The quaternion is renormalized.
inline CovarianceMatrix covariance_from_qs(const Quat &rotation, const Vec3 &scale) {
    if (!detail::all_finite(rotation.coeffs()) || !detail::all_finite(scale)) {
        throw InvalidArgument("covariance_from_qs: non-finite input");
    }
    const double norm = rotation.norm();
    if (norm == 0.0) {
        throw InvalidArgument("covariance_from_qs: zero quaternion");
    }
    const Mat3 r = Quat(rotation.coeffs() / norm).toRotationMatrix();
    const Vec3 variances = scale.cwiseProduct(scale);
    return CovarianceMatrix(r * variances.asDiagonal() * r.transpose());
}

/// Inverse of covariance_from_qs through an eigen decomposition.
///
/// Eigenvalues come out in descending order and the eigenvector basis is made
/// right-handed by negating its first column when needed.
inline RotationScale qs_from_covariance(const CovarianceMatrix &cov) {
    Eigen::SelfAdjointEigenSolver<Mat3> evd(cov.matrix());
    if (evd.info() != Eigen::Success || !detail::all_finite(evd.eigenvalues()) ||
        evd.eigenvalues().minCoeff() <= 0.0) {
        throw DegenerateCovariance("qs_from_covariance: covariance is not positive definite");
    }
    // Eigen sorts ascending; reverse to descending.
    Mat3 basis;
    Vec3 values;
    for (int k = 0; k < 3; ++k) {
        basis.col(k) = evd.eigenvectors().col(2 - k);
        values(k) = evd.eigenvalues()(2 - k);
    }
    if (basis.determinant() < 0.0) {
        basis.col(0) = -basis.col(0);
    }
    RotationScale out;
    out.rotation = Quat(basis).normalized();
    out.scale = values.cwiseSqrt().cwiseMax(kScaleEpsilon);
    return out;
}

/// View-independent RGB of degree-0 SH coefficients, clamped to [0, 1].
inline Vec3 sh_to_color(const Vec3 &coeffs) {
    return (Vec3::Constant(0.5) + kShC0 * coeffs).cwiseMax(0.0).cwiseMin(1.0);
}

/// Coefficients whose sh_to_color is `rgb` (for rgb inside [0, 1]).
inline Vec3 color_to_sh(const Vec3 &rgb) { return (rgb - Vec3::Constant(0.5)) / kShC0; }

struct GaussianPrimitive {
    Vec3 mean = Vec3::Zero();
    Quat rotation = Quat::Identity();
    Vec3 scale = Vec3::Constant(0.01);
    double opacity = 0.5;
    /// Degree-0 SH coefficients.
    Vec3 color = Vec3::Zero();
    /// Higher SH bands, carried opaquely through I/O and merging.
    std::vector<float> sh_rest;
    double grad_stat = 0.0;
    std::uint64_t insertion_index = 0;
    std::uint32_t keyframe_index = 0;

    CovarianceMatrix covariance() const { return covariance_from_qs(rotation, scale); }
};

/// Normalizes the rotation and clamps scale, opacity and grad_stat into
/// their legal ranges. Throws InvalidArgument on non-finite fields.
inline GaussianPrimitive &enforce_invariants(GaussianPrimitive &g) {
    if (!detail::all_finite(g.mean) || !detail::all_finite(g.rotation.coeffs()) ||
        !detail::all_finite(g.scale) || !std::isfinite(g.opacity) ||
        !detail::all_finite(g.color) || !std::isfinite(g.grad_stat)) {
        throw InvalidArgument("primitive " + std::to_string(g.insertion_index) +
                              " has non-finite attributes");
    }
    const double norm = g.rotation.norm();
    if (norm == 0.0) {
        throw InvalidArgument("primitive " + std::to_string(g.insertion_index) +
                              " has a zero rotation quaternion");
    }
    g.rotation.coeffs() /= norm;
    g.scale = g.scale.cwiseAbs().cwiseMax(kScaleEpsilon);
    g.opacity = std::clamp(g.opacity, 0.0, 1.0);
    g.grad_stat = std::max(g.grad_stat, 0.0);
    return g;
}

/// Rigid world-to-camera transform T_CW.
class CameraPose {
public:
    CameraPose() = default;

    CameraPose(const Mat3 &rotation, const Vec3 &translation)
        : rotation_(rotation), translation_(translation) {
        if (!detail::all_finite(rotation) || !detail::all_finite(translation)) {
            throw InvalidArgument("camera pose has non-finite entries");
        }
        if ((rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9 ||
            std::abs(rotation.determinant() - 1.0) > 1e-9) {
            throw InvalidArgument("camera pose rotation is not a proper rotation");
        }
    }

    /// Builds a pose from a 4x4 matrix, projecting the rotation block onto
    /// SO(3) when it is within `tolerance` of a rotation (text files lose digits).
    static CameraPose from_matrix(const Eigen::Matrix4d &t_cw, double tolerance = 1e-4) {
        Mat3 r = t_cw.topLeftCorner<3, 3>();
        if (!detail::all_finite(t_cw)) {
            throw InvalidArgument("camera pose has non-finite entries");
        }
        if ((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() > tolerance ||
            std::abs(r.determinant() - 1.0) > tolerance) {
            throw InvalidArgument("camera pose rotation is not a proper rotation");
        }
        Eigen::JacobiSVD<Mat3> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
        r = svd.matrixU() * svd.matrixV().transpose();
        return CameraPose(r, t_cw.block<3, 1>(0, 3));
    }

    /// Camera at `eye` looking at `target`; camera y points away from `up`.
    static CameraPose look_at(const Vec3 &eye, const Vec3 &target, const Vec3 &up) {
        const Vec3 forward = (target - eye).normalized();
        const Vec3 right = forward.cross(up).normalized();
        const Vec3 down = forward.cross(right);
        Mat3 r_wc;
        r_wc.col(0) = right;
        r_wc.col(1) = down;
        r_wc.col(2) = forward;
        const Mat3 r_cw = r_wc.transpose();
        return CameraPose(r_cw, -r_cw * eye);
    }

    const Mat3 &rotation() const noexcept { return rotation_; }
    const Vec3 &translation() const noexcept { return translation_; }

    Eigen::Matrix4d matrix() const {
        Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
        m.topLeftCorner<3, 3>() = rotation_;
        m.block<3, 1>(0, 3) = translation_;
        return m;
    }

    Vec3 to_camera(const Vec3 &world) const { return rotation_ * world + translation_; }
    Vec3 to_world(const Vec3 &camera) const {
        return rotation_.transpose() * (camera - translation_);
    }

private:
    Mat3 rotation_ = Mat3::Identity();
    Vec3 translation_ = Vec3::Zero();
};

struct PinholeIntrinsics {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 1;
    int height = 1;

    void validate() const {
        if (!(fx > 0.0) || !(fy > 0.0) || !std::isfinite(cx) || !std::isfinite(cy) ||
            width < 1 || height < 1) {
            throw InvalidArgument("invalid pinhole intrinsics");
        }
    }

    /// Centered principal point and a horizontal field of view in degrees.
    static PinholeIntrinsics from_fov(int width, int height, double fov_x_deg) {
        PinholeIntrinsics k;
        k.width = width;
        k.height = height;
        k.fx = 0.5 * width / std::tan(0.5 * fov_x_deg * M_PI / 180.0);
        k.fy = k.fx;
        k.cx = 0.5 * (width - 1);
        k.cy = 0.5 * (height - 1);
        k.validate();
        return k;
    }

    Vec2 project(const Vec3 &camera) const {
        return {fx * camera.x() / camera.z() + cx, fy * camera.y() / camera.z() + cy};
    }

    Vec3 back_project(double u, double v, double depth) const {
        return {(u - cx) / fx * depth, (v - cy) / fy * depth, depth};
    }
};

/// Ordered collection of primitives with unique insertion indices.
class SplatMap {
public:
    SplatMap() = default;

    /// Appends `g` under a fresh insertion index and returns that index.
    std::uint64_t insert(GaussianPrimitive g) {
        g.insertion_index = next_insertion_index_;
        enforce_invariants(g);
        used_.insert(g.insertion_index);
        primitives_.push_back(std::move(g));
        return next_insertion_index_++;
    }

    /// Appends `g` keeping its insertion index, which must not be in use.
    void adopt(GaussianPrimitive g) {
        if (!used_.insert(g.insertion_index).second) {
            throw InvalidArgument("duplicate insertion index " +
                                  std::to_string(g.insertion_index));
        }
        enforce_invariants(g);
        next_insertion_index_ = std::max(next_insertion_index_, g.insertion_index + 1);
        primitives_.push_back(std::move(g));
    }

    /// Raises the next fresh index; never lowers it.
    void reserve_indices_below(std::uint64_t next) {
        next_insertion_index_ = std::max(next_insertion_index_, next);
    }

    std::size_t size() const noexcept { return primitives_.size(); }
    bool empty() const noexcept { return primitives_.empty(); }
    std::uint64_t next_insertion_index() const noexcept { return next_insertion_index_; }

    const GaussianPrimitive &operator[](std::size_t k) const { return primitives_[k]; }
    std::span<const GaussianPrimitive> primitives() const noexcept { return primitives_; }
    auto begin() const noexcept { return primitives_.begin(); }
    auto end() const noexcept { return primitives_.end(); }

private:
    std::vector<GaussianPrimitive> primitives_;
    std::unordered_set<std::uint64_t> used_;
    std::uint64_t next_insertion_index_ = 0;
};

} // namespace splatc
