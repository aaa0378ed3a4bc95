// Copyright Contributors to the splatc project
// SPDX-License-Identifier: Apache-2.0

// Random generators and scratch-directory helpers shared by the test suites.

#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include <unistd.h>

#include "splatc/splatc.hpp"

namespace splatc::testing {

inline double log_uniform(Rng &rng, double lo, double hi) {
    return std::exp(rng.uniform(std::log(lo), std::log(hi)));
}

/// R diag(eigenvalues) R^T with log-uniform eigenvalues in [lo, hi].
inline Mat3 random_spd(Rng &rng, double lo, double hi) {
    const Mat3 r = rng.rotation().toRotationMatrix();
    const Vec3 ev(log_uniform(rng, lo, hi), log_uniform(rng, lo, hi), log_uniform(rng, lo, hi));
    return r * ev.asDiagonal() * r.transpose();
}

inline GaussianPrimitive random_primitive(Rng &rng, double extent) {
    GaussianPrimitive g;
    g.mean = {rng.uniform(-extent, extent), rng.uniform(-extent, extent),
              rng.uniform(-extent, extent)};
    g.rotation = rng.rotation();
    g.scale = {log_uniform(rng, 0.005, 0.05), log_uniform(rng, 0.005, 0.05),
               log_uniform(rng, 0.005, 0.05)};
    g.opacity = rng.uniform(0.05, 1.0);
    g.color = color_to_sh(Vec3(rng.uniform(), rng.uniform(), rng.uniform()));
    g.grad_stat = rng.uniform(0.0, 0.002);
    g.keyframe_index = static_cast<std::uint32_t>(rng.index(20));
    return g;
}

/// Unique scratch directory removed on destruction.
class TempDir {
public:
    TempDir() {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("splatc_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir &) = delete;
    TempDir &operator=(const TempDir &) = delete;

    std::string file(const std::string &name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void spit(const std::string &path, const std::string &text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

} // namespace splatc::testing
