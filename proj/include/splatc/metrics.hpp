// Copyright Contributors to the splatc project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "splatc/core.hpp"
#include "splatc/image.hpp"
#include "splatc/renderer.hpp"

namespace splatc {

inline constexpr double kPsnrCapDb = 100.0;

namespace detail {

inline void require_same_shape(const Image &a, const Image &b, const char *what) {
    if (!a.same_shape(b) || a.empty()) {
        throw InvalidArgument(std::string(what) + ": images must be non-empty and the same size");
    }
}

inline std::array<double, 11> gaussian_window() {
    std::array<double, 11> w{};
    double sum = 0.0;
    for (int k = 0; k < 11; ++k) {
        const double x = k - 5;
        w[static_cast<std::size_t>(k)] = std::exp(-x * x / (2.0 * 1.5 * 1.5));
        sum += w[static_cast<std::size_t>(k)];
    }
    for (auto &v : w) {
        v /= sum;
    }
    return w;
}

/// Separable 11x11 Gaussian blur of one plane with zero padding.
inline std::vector<double> blur(const std::vector<double> &plane, int width, int height) {
    static const auto window = gaussian_window();
    std::vector<double> tmp(plane.size(), 0.0);
    std::vector<double> out(plane.size(), 0.0);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            double acc = 0.0;
            for (int k = -5; k <= 5; ++k) {
                const int xx = x + k;
                if (xx >= 0 && xx < width) {
                    acc += window[static_cast<std::size_t>(k + 5)] *
                           plane[static_cast<std::size_t>(y * width + xx)];
                }
            }
            tmp[static_cast<std::size_t>(y * width + x)] = acc;
        }
    }
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            double acc = 0.0;
            for (int k = -5; k <= 5; ++k) {
                const int yy = y + k;
                if (yy >= 0 && yy < height) {
                    acc += window[static_cast<std::size_t>(k + 5)] *
                           tmp[static_cast<std::size_t>(yy * width + x)];
                }
            }
            out[static_cast<std::size_t>(y * width + x)] = acc;
        }
    }
    return out;
}

} // namespace detail

/// Mean SSIM over all pixels and channels: 11x11 Gaussian window (sigma 1.5),
/// zero padding, C1 = 0.01^2, C2 = 0.03^2 for unit dynamic range.
inline double ssim(const Image &a, const Image &b) {
    detail::require_same_shape(a, b, "ssim");
    constexpr double c1 = 0.01 * 0.01;
    constexpr double c2 = 0.03 * 0.03;
    const int w = a.width;
    const int h = a.height;
    const std::size_t n = a.pixel_count();
    double total = 0.0;
    for (int ch = 0; ch < a.channels; ++ch) {
        std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
        for (std::size_t k = 0; k < n; ++k) {
            x[k] = a.data[k * static_cast<std::size_t>(a.channels) + static_cast<std::size_t>(ch)];
            y[k] = b.data[k * static_cast<std::size_t>(b.channels) + static_cast<std::size_t>(ch)];
            xx[k] = x[k] * x[k];
            yy[k] = y[k] * y[k];
            xy[k] = x[k] * y[k];
        }
        const auto mu_x = detail::blur(x, w, h);
        const auto mu_y = detail::blur(y, w, h);
        const auto e_xx = detail::blur(xx, w, h);
        const auto e_yy = detail::blur(yy, w, h);
        const auto e_xy = detail::blur(xy, w, h);
        for (std::size_t k = 0; k < n; ++k) {
            const double mx2 = mu_x[k] * mu_x[k];
            const double my2 = mu_y[k] * mu_y[k];
            const double mxy = mu_x[k] * mu_y[k];
            const double sxx = e_xx[k] - mx2;
            const double syy = e_yy[k] - my2;
            const double sxy = e_xy[k] - mxy;
            total += ((2.0 * mxy + c1) * (2.0 * sxy + c2)) / ((mx2 + my2 + c1) * (sxx + syy + c2));
        }
    }
    return total / static_cast<double>(n * static_cast<std::size_t>(a.channels));
}

/// 20 log10(1 / sqrt(MSE)) in dB, capped at kPsnrCapDb.
inline double psnr(const Image &a, const Image &b) {
    detail::require_same_shape(a, b, "psnr");
    double sum = 0.0;
    for (std::size_t k = 0; k < a.data.size(); ++k) {
        const double d = a.data[k] - b.data[k];
        sum += d * d;
    }
    const double mse = sum / static_cast<double>(a.data.size());
    if (mse < 1e-10) {
        return kPsnrCapDb;
    }
    return std::min(kPsnrCapDb, 20.0 * std::log10(1.0 / std::sqrt(mse)));
}

inline double mean_abs_difference(const Image &a, const Image &b) {
    detail::require_same_shape(a, b, "l1");
    double sum = 0.0;
    for (std::size_t k = 0; k < a.data.size(); ++k) {
        sum += std::abs(a.data[k] - b.data[k]);
    }
    return sum / static_cast<double>(a.data.size());
}

/// Mean over primitives of the mean absolute deviation of each scale
/// component from that primitive's mean scale. Zero for spherical splats.
inline double isotropic_penalty(const SplatMap &map) {
    if (map.empty()) {
        return 0.0;
    }
    double sum = 0.0;
    for (const auto &g : map) {
        const double m = g.scale.mean();
        sum += (g.scale.array() - m).abs().mean();
    }
    return sum / static_cast<double>(map.size());
}

struct LossTerms {
    double total = 0.0;
    double l1 = 0.0;
    double ssim = 0.0;
    double iso = 0.0;
};

inline constexpr double kDefaultSsimWeight = 0.2;
inline constexpr double kDefaultIsoWeight = 10.0;

/// (1 - lambda) L1 + lambda (1 - SSIM) + lambda_iso * isotropic_penalty.
inline LossTerms loss(const Image &rendered, const Image &ground_truth, const SplatMap &map,
                      double lambda = kDefaultSsimWeight, double lambda_iso = kDefaultIsoWeight) {
    detail::require_same_shape(rendered, ground_truth, "loss");
    LossTerms t;
    t.l1 = mean_abs_difference(rendered, ground_truth);
    t.ssim = ssim(rendered, ground_truth);
    t.iso = isotropic_penalty(map);
    t.total = (1.0 - lambda) * t.l1 + lambda * (1.0 - t.ssim) + lambda_iso * t.iso;
    return t;
}

struct DepthLoss {
    double value = 0.0;
    std::size_t valid_pixels = 0;
    /// Set when no pixel qualified; value is then 0.
    bool no_valid_pixels = false;
};

/// Mean |D_rendered - D_gt| over pixels with finite ground truth that the
/// render covers (transmittance below 0.5).
inline DepthLoss depth_loss(const RenderedFrame &rendered, const Image &gt_depth) {
    detail::require_same_shape(rendered.depth, gt_depth, "depth_loss");
    DepthLoss out;
    double sum = 0.0;
    for (std::size_t k = 0; k < gt_depth.data.size(); ++k) {
        const double gt = gt_depth.data[k];
        if (std::isfinite(gt) && rendered.transmittance.data[k] < 0.5) {
            sum += std::abs(rendered.depth.data[k] - gt);
            ++out.valid_pixels;
        }
    }
    if (out.valid_pixels == 0) {
        out.no_valid_pixels = true;
        return out;
    }
    out.value = sum / static_cast<double>(out.valid_pixels);
    return out;
}

} // namespace splatc
