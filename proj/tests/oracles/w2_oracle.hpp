// Copyright Contributors to the splatc project
// SPDX-License-Identifier: Apache-2.0

// Closed forms of the squared 2-Wasserstein distance for commuting
// covariances, and a grid search for their barycenter.

#pragma once

#include <cmath>

#include <Eigen/Dense>

namespace splatc::oracle {

/// N(0, a^2 I) vs N(0, b^2 I) in three dimensions.
inline double w2_sq_isotropic(double a, double b) { return 3.0 * (a - b) * (a - b); }

/// Covariances sharing an eigenbasis, given by their eigenvalues.
inline double w2_sq_diagonal(const Eigen::Vector3d &lambda, const Eigen::Vector3d &mu) {
    return (lambda.cwiseSqrt() - mu.cwiseSqrt()).squaredNorm();
}

/// Minimizes W2^2(K, A) + W2^2(K, B) over diagonal K for diagonal A, B by a
/// refined 1-D grid per axis. Returns the diagonal of K.
inline Eigen::Vector3d diagonal_barycenter_grid(const Eigen::Vector3d &a,
                                                const Eigen::Vector3d &b) {
    Eigen::Vector3d out;
    for (int k = 0; k < 3; ++k) {
        const double ra = std::sqrt(a(k));
        const double rb = std::sqrt(b(k));
        auto cost = [&](double r) { return (r - ra) * (r - ra) + (r - rb) * (r - rb); };
        double lo = 0.0;
        double hi = 2.0 * std::max(ra, rb);
        double best = lo;
        for (int level = 0; level < 12; ++level) {
            const int n = 200;
            double best_cost = INFINITY;
            for (int s = 0; s <= n; ++s) {
                const double r = lo + (hi - lo) * s / n;
                if (cost(r) < best_cost) {
                    best_cost = cost(r);
                    best = r;
                }
            }
            const double span = (hi - lo) / n;
            lo = std::max(0.0, best - span);
            hi = best + span;
        }
        out(k) = best * best;
    }
    return out;
}

} // namespace splatc::oracle
