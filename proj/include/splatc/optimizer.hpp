// Copyright Contributors to the splatc project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "splatc/error.hpp"

namespace splatc {

/// Limited-memory BFGS settings with an Armijo backtracking line search.
struct MinimizerConfig {
    int memory_pairs = 8;
    /// Stop once the largest gradient component falls below this.
    double grad_tolerance = 1e-8;
    int max_iterations = 100;
    double sufficient_decrease = 1e-4;
    double contraction = 0.5;
    int max_line_search_steps = 60;

    void validate() const {
        if (memory_pairs < 1 || !(grad_tolerance > 0.0) || max_iterations < 0 ||
            !(sufficient_decrease > 0.0 && sufficient_decrease < 1.0) ||
            !(contraction > 0.0 && contraction < 1.0) || max_line_search_steps < 1) {
            throw InvalidArgument("invalid minimizer configuration");
        }
    }
};

struct MinimizeResult {
    Eigen::VectorXd x;
    double value = 0.0;
    int iterations = 0;
    bool converged = false;
    /// Objective at x0 and at every accepted iterate.
    std::vector<double> history;
};

/// Objective signature used throughout: returns f(x) and writes the gradient.
using Objective = std::function<double(const Eigen::VectorXd &, Eigen::VectorXd &)>;

/// Minimizes a smooth objective with L-BFGS (two-loop recursion).
///
/// The objective sequence is non-increasing. When the line search cannot
/// make progress the current iterate is returned with converged = false
/// unless its gradient already meets the tolerance.
template <typename Fn>
MinimizeResult minimize(Fn &&objective, const Eigen::VectorXd &x0,
                        const MinimizerConfig &cfg = {}) {
    cfg.validate();
    const auto n = x0.size();
    MinimizeResult res;
    res.x = x0;
    Eigen::VectorXd grad(n);
    res.value = objective(res.x, grad);
    res.history.push_back(res.value);
    if (!std::isfinite(res.value) || !grad.allFinite()) {
        throw NumericalFailure("objective is not finite at the starting point", x0,
                               res.value);
    }

    std::deque<Eigen::VectorXd> s_hist;
    std::deque<Eigen::VectorXd> y_hist;
    std::deque<double> rho_hist;
    std::vector<double> alpha_buf(static_cast<std::size_t>(cfg.memory_pairs));

    Eigen::VectorXd direction(n);
    Eigen::VectorXd x_trial(n);
    Eigen::VectorXd grad_trial(n);

    while (true) {
        if (grad.size() == 0 || grad.lpNorm<Eigen::Infinity>() <= cfg.grad_tolerance) {
            res.converged = true;
            return res;
        }
        if (res.iterations >= cfg.max_iterations) {
            return res;
        }

        // Two-loop recursion: direction = -H * grad.
        direction = -grad;
        const auto m = s_hist.size();
        for (std::size_t k = m; k-- > 0;) {
            alpha_buf[k] = rho_hist[k] * s_hist[k].dot(direction);
            direction -= alpha_buf[k] * y_hist[k];
        }
        if (m > 0) {
            direction *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
        }
        for (std::size_t k = 0; k < m; ++k) {
            const double beta = rho_hist[k] * y_hist[k].dot(direction);
            direction += (alpha_buf[k] - beta) * s_hist[k];
        }

        double slope = grad.dot(direction);
        if (!(slope < 0.0)) {
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            direction = -grad;
            slope = -grad.squaredNorm();
        }

        // First step without curvature history is scaled to unit length.
        double step = s_hist.empty() ? std::min(1.0, 1.0 / direction.norm()) : 1.0;
        bool accepted = false;
        double value_trial = res.value;
        for (int ls = 0; ls < cfg.max_line_search_steps; ++ls) {
            x_trial = res.x + step * direction;
            value_trial = objective(x_trial, grad_trial);
            if (!std::isfinite(value_trial) || !grad_trial.allFinite()) {
                throw NumericalFailure("objective became non-finite during line search",
                                       res.x, res.value);
            }
            if (value_trial <= res.value + cfg.sufficient_decrease * step * slope) {
                accepted = true;
                break;
            }
            step *= cfg.contraction;
        }
        if (!accepted) {
            return res;
        }

        Eigen::VectorXd s = x_trial - res.x;
        Eigen::VectorXd y = grad_trial - grad;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm() && sy > 0.0) {
            if (static_cast<int>(s_hist.size()) == cfg.memory_pairs) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
            s_hist.push_back(std::move(s));
            y_hist.push_back(std::move(y));
            rho_hist.push_back(1.0 / sy);
        }

        res.x = x_trial;
        res.value = value_trial;
        res.history.push_back(res.value);
        grad = grad_trial;
        ++res.iterations;
    }
}

/// Geodesic interpolation between unit quaternions along the shorter arc.
inline Eigen::Quaterniond slerp(const Eigen::Quaterniond &qi, const Eigen::Quaterniond &qj,
                                double t) {
    const double ni = qi.norm();
    const double nj = qj.norm();
    if (ni == 0.0 || nj == 0.0 || !std::isfinite(ni) || !std::isfinite(nj)) {
        throw InvalidArgument("slerp: zero or non-finite quaternion");
    }
    const Eigen::Vector4d a = qi.coeffs() / ni;
    Eigen::Vector4d b = qj.coeffs() / nj;
    double cos_theta = a.dot(b);
    if (cos_theta < 0.0) {
        b = -b;
        cos_theta = -cos_theta;
    }
    Eigen::Vector4d out;
    if (cos_theta > 1.0 - 1e-9) {
        out = (1.0 - t) * a + t * b;
    } else {
        const double theta = std::acos(std::min(cos_theta, 1.0));
        const double sin_theta = std::sin(theta);
        out = (std::sin((1.0 - t) * theta) / sin_theta) * a +
              (std::sin(t * theta) / sin_theta) * b;
    }
    return Eigen::Quaterniond(out / out.norm());
}

/// Central-difference gradient with per-coordinate step h * (1 + |x_k|).
template <typename ValueFn>
Eigen::VectorXd numeric_gradient(ValueFn &&value, const Eigen::VectorXd &x,
                                 double h = 1e-6) {
    Eigen::VectorXd g(x.size());
    Eigen::VectorXd probe = x;
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        const double step = h * (1.0 + std::abs(x(k)));
        probe(k) = x(k) + step;
        const double up = value(probe);
        probe(k) = x(k) - step;
        const double down = value(probe);
        probe(k) = x(k);
        g(k) = (up - down) / (2.0 * step);
    }
    return g;
}

/// Largest deviation between the supplied gradient and a central difference
/// with fixed step h, relative to the gradient's largest component.
template <typename Fn>
double check_gradient(Fn &&objective, const Eigen::VectorXd &x, double h) {
    Eigen::VectorXd analytic(x.size());
    Eigen::VectorXd scratch(x.size());
    objective(x, analytic);
    Eigen::VectorXd probe = x;
    double worst = 0.0;
    Eigen::VectorXd fd(x.size());
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        probe(k) = x(k) + h;
        const double up = objective(probe, scratch);
        probe(k) = x(k) - h;
        const double down = objective(probe, scratch);
        probe(k) = x(k);
        fd(k) = (up - down) / (2.0 * h);
    }
    const double scale = analytic.size() ? analytic.lpNorm<Eigen::Infinity>() : 0.0;
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        worst = std::max(worst, std::abs(fd(k) - analytic(k)) / (scale + 1e-12));
    }
    return worst;
}

} // namespace splatc
