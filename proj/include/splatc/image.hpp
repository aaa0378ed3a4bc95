// Copyright Contributors to the splatc project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "splatc/error.hpp"

namespace splatc {

/// Interleaved row-major image of doubles (color in [0, 1], depth in meters).
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h, int c, double fill = 0.0)
        : width(w), height(h), channels(c),
          data(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) *
                   static_cast<std::size_t>(c),
               fill) {
        if (w < 0 || h < 0 || c < 0) {
            throw InvalidArgument("negative image dimensions");
        }
    }

    bool empty() const noexcept { return data.empty(); }
    std::size_t pixel_count() const noexcept {
        return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    }
    bool same_shape(const Image &o) const noexcept {
        return width == o.width && height == o.height && channels == o.channels;
    }

    std::size_t offset(int x, int y, int c = 0) const noexcept {
        return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                static_cast<std::size_t>(x)) *
                   static_cast<std::size_t>(channels) +
               static_cast<std::size_t>(c);
    }
    double &at(int x, int y, int c = 0) { return data[offset(x, y, c)]; }
    double at(int x, int y, int c = 0) const { return data[offset(x, y, c)]; }
};

} // namespace splatc
