// Copyright Contributors to the splatc project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "splatc/core.hpp"
#include "splatc/optimizer.hpp"

namespace splatc {

namespace detail {

struct SymmetricRoots {
    Mat3 sqrt;
    Mat3 inv_sqrt;
};

inline Eigen::SelfAdjointEigenSolver<Mat3> checked_evd(const Mat3 &m) {
    Eigen::SelfAdjointEigenSolver<Mat3> evd(symmetrize(m));
    if (evd.info() != Eigen::Success || !all_finite(evd.eigenvalues())) {
        throw DegenerateCovariance("eigen decomposition failed");
    }
    return evd;
}

/// Principal square root with eigenvalues floored at zero.
inline Mat3 psd_sqrt(const Mat3 &m) {
    const auto evd = checked_evd(m);
    const Vec3 roots = evd.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return evd.eigenvectors() * roots.asDiagonal() * evd.eigenvectors().transpose();
}

inline SymmetricRoots psd_roots(const Mat3 &m) {
    const auto evd = checked_evd(m);
    const Vec3 roots = evd.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const Vec3 inv = roots.unaryExpr([](double r) { return r > 0.0 ? 1.0 / r : 0.0; });
    return {evd.eigenvectors() * roots.asDiagonal() * evd.eigenvectors().transpose(),
            evd.eigenvectors() * inv.asDiagonal() * evd.eigenvectors().transpose()};
}

/// Squared 2-Wasserstein distance between N(0, a) and N(0, b), unclamped.
inline double w2_sq_raw(const Mat3 &a, const Mat3 &b) {
    const Mat3 root_a = psd_sqrt(a);
    const auto inner = checked_evd(root_a * b * root_a);
    const double cross = inner.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
    return a.trace() + b.trace() - 2.0 * cross;
}

/// Value and symmetric gradient of w2_sq_raw(a, b) with respect to a.
///
/// The gradient is I - T where T = a^{-1/2} (a^{1/2} b a^{1/2})^{1/2} a^{-1/2}
/// is the transport map from N(0, a) to N(0, b).
inline double w2_sq_grad(const Mat3 &a, const Mat3 &b, Mat3 &grad_a) {
    const SymmetricRoots roots = psd_roots(a);
    const auto inner = checked_evd(roots.sqrt * b * roots.sqrt);
    const Vec3 inner_roots = inner.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const Mat3 inner_sqrt =
        inner.eigenvectors() * inner_roots.asDiagonal() * inner.eigenvectors().transpose();
    const Mat3 transport = roots.inv_sqrt * inner_sqrt * roots.inv_sqrt;
    grad_a = Mat3::Identity() - symmetrize(transport);
    return a.trace() + b.trace() - 2.0 * inner_roots.sum();
}

/// Rotation matrix of a unit quaternion (w, x, y, z) and its partials.
inline Mat3 rotation_of(const Eigen::Vector4d &q) {
    const double w = q(0), x = q(1), y = q(2), z = q(3);
    Mat3 r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

inline std::array<Mat3, 4> rotation_partials(const Eigen::Vector4d &q) {
    const double w = q(0), x = q(1), y = q(2), z = q(3);
    std::array<Mat3, 4> d;
    d[0] << 0, -z, y, z, 0, -x, -y, x, 0;
    d[1] << 0, y, z, y, -2 * x, -w, z, w, -2 * x;
    d[2] << -2 * y, x, w, x, 0, z, -w, z, -2 * y;
    d[3] << -2 * z, -w, x, w, -2 * z, y, x, y, 0;
    for (auto &m : d) {
        m *= 2.0;
    }
    return d;
}

} // namespace detail

/// tr(A + B - 2 (A^{1/2} B A^{1/2})^{1/2}), clamped at zero.
inline double w2_sq(const CovarianceMatrix &a, const CovarianceMatrix &b) {
    return std::max(0.0, detail::w2_sq_raw(a.matrix(), b.matrix()));
}

/// Sum of squared W2 distances from R(q) diag(s^2) R(q)^T to two targets,
/// over the 7 parameters (q_w, q_x, q_y, q_z, s_0, s_1, s_2).
///
/// Targets are divided by `unit`^2 so the solve runs on order-one numbers;
/// the parameters passed in are then in units of `unit` meters.
class CovarianceMergeObjective {
public:
    CovarianceMergeObjective(const Mat3 &target_i, const Mat3 &target_j, double unit = 1.0)
        : target_i_(target_i / (unit * unit)), target_j_(target_j / (unit * unit)) {}

    static Mat3 covariance_of(const Eigen::VectorXd &x) {
        const Eigen::Vector4d q = x.head<4>() / x.head<4>().norm();
        const Mat3 r = detail::rotation_of(q);
        const Vec3 s = x.tail<3>();
        return r * s.cwiseProduct(s).asDiagonal() * r.transpose();
    }

    double operator()(const Eigen::VectorXd &x, Eigen::VectorXd &grad) const {
        grad.resize(7);
        const double qnorm = x.head<4>().norm();
        const Eigen::Vector4d q = x.head<4>() / qnorm;
        const Mat3 r = detail::rotation_of(q);
        const Vec3 s = x.tail<3>();
        const Vec3 s2 = s.cwiseProduct(s);
        const Mat3 sigma = r * s2.asDiagonal() * r.transpose();

        Mat3 grad_i;
        Mat3 grad_j;
        const double value = detail::w2_sq_grad(sigma, target_i_, grad_i) +
                             detail::w2_sq_grad(sigma, target_j_, grad_j);
        const Mat3 g = grad_i + grad_j;

        for (int a = 0; a < 3; ++a) {
            grad(4 + a) = 2.0 * s(a) * r.col(a).dot(g * r.col(a));
        }
        const Mat3 d_r = 2.0 * g * r * s2.asDiagonal();
        const auto partials = detail::rotation_partials(q);
        Eigen::Vector4d d_qhat;
        for (int k = 0; k < 4; ++k) {
            d_qhat(k) = d_r.cwiseProduct(partials[static_cast<std::size_t>(k)]).sum();
        }
        grad.head<4>() = (d_qhat - q * q.dot(d_qhat)) / qnorm;
        return value;
    }

private:
    Mat3 target_i_;
    Mat3 target_j_;
};

} // namespace splatc
