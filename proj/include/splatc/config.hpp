// Copyright Contributors to the splatc project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "splatc/metrics.hpp"
#include "splatc/pg_sampler.hpp"
#include "splatc/splat_io.hpp"
#include "splatc/synth.hpp"
#include "splatc/voxel_merger.hpp"

namespace splatc {

using ConfigValue = std::variant<double, bool, std::string, std::vector<double>>;
/// Flattened "section.key" -> value.
using ConfigTable = std::map<std::string, ConfigValue>;

namespace detail {

inline std::string strip_comment(const std::string &line) {
    bool in_string = false;
    for (std::size_t k = 0; k < line.size(); ++k) {
        if (line[k] == '"') {
            in_string = !in_string;
        } else if (line[k] == '#' && !in_string) {
            return line.substr(0, k);
        }
    }
    return line;
}

inline ConfigValue parse_config_value(const std::string &text, std::size_t line_no) {
    const std::string s = trim(text);
    if (s == "true" || s == "false") {
        return s == "true";
    }
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') {
        return s.substr(1, s.size() - 2);
    }
    if (s.size() >= 2 && s.front() == '[' && s.back() == ']') {
        std::vector<double> values;
        std::stringstream items(s.substr(1, s.size() - 2));
        std::string item;
        while (std::getline(items, item, ',')) {
            if (trim(item).empty()) {
                continue;
            }
            const auto v = parse_double(item);
            if (!v) {
                throw ParseError("invalid array element '" + trim(item) + "'", line_no);
            }
            values.push_back(*v);
        }
        return values;
    }
    std::string digits;
    for (char c : s) {
        if (c != '_') {
            digits.push_back(c);
        }
    }
    const auto v = parse_double(digits);
    if (!v) {
        throw ParseError("unsupported value '" + s + "'", line_no);
    }
    return *v;
}

} // namespace detail

/// Reads the TOML subset used by config files: [section] headers, bare keys,
/// numbers, booleans, basic strings and flat numeric arrays.
inline ConfigTable parse_config(std::istream &in) {
    ConfigTable table;
    std::string section;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string s = detail::trim(detail::strip_comment(line));
        if (s.empty()) {
            continue;
        }
        if (s.front() == '[') {
            if (s.back() != ']') {
                throw ParseError("unterminated section header", line_no);
            }
            section = detail::trim(s.substr(1, s.size() - 2));
            continue;
        }
        const auto eq = s.find('=');
        if (eq == std::string::npos) {
            throw ParseError("expected key = value", line_no);
        }
        const std::string key = detail::trim(s.substr(0, eq));
        if (key.empty()) {
            throw ParseError("empty key", line_no);
        }
        const std::string full = section.empty() ? key : section + "." + key;
        if (!table.emplace(full, detail::parse_config_value(s.substr(eq + 1), line_no)).second) {
            throw ParseError("duplicate key " + full, line_no);
        }
    }
    return table;
}

inline ConfigTable read_config(const std::string &path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path);
    }
    return parse_config(in);
}

/// Every tunable of the pipeline in one place.
struct Settings {
    MergeConfig merge{};
    int passes = 1;
    PatchGridConfig sampler{};
    double lambda = kDefaultSsimWeight;
    double lambda_iso = kDefaultIsoWeight;
    double depth_scale = 5000.0;
    int render_width = 128;
    int render_height = 128;
    double render_fov = 60.0;
    std::size_t bytes_per_primitive = kDefaultBytesPerPrimitive;
};

/// Overlays a parsed config table on `s`. Unknown keys are rejected.
inline void apply_config(const ConfigTable &table, Settings &s) {
    auto number = [](const std::string &key, const ConfigValue &v) {
        if (const auto *d = std::get_if<double>(&v)) {
            return *d;
        }
        throw InvalidArgument("config key " + key + " expects a number");
    };
    auto integer = [&](const std::string &key, const ConfigValue &v) {
        const double d = number(key, v);
        if (d != std::floor(d)) {
            throw InvalidArgument("config key " + key + " expects an integer");
        }
        return static_cast<std::int64_t>(d);
    };
    for (const auto &[key, value] : table) {
        if (key == "merge.voxel_size") s.merge.voxel_size = number(key, value);
        else if (key == "merge.grad_tau") s.merge.grad_tau = number(key, value);
        else if (key == "merge.chi2") s.merge.chi2_threshold = number(key, value);
        else if (key == "merge.slerp_t") s.merge.slerp_t = number(key, value);
        else if (key == "merge.kf_min") s.merge.kf_min = integer(key, value);
        else if (key == "merge.kf_max") s.merge.kf_max = integer(key, value);
        else if (key == "merge.passes") s.passes = static_cast<int>(integer(key, value));
        else if (key == "merge.symmetric_gate") {
            const auto *b = std::get_if<bool>(&value);
            if (b == nullptr) {
                throw InvalidArgument("config key " + key + " expects a boolean");
            }
            s.merge.symmetric_gate = *b;
        } else if (key == "merge.evd_offsets") {
            const auto *arr = std::get_if<std::vector<double>>(&value);
            if (arr == nullptr || arr->size() != 3) {
                throw InvalidArgument("config key " + key + " expects three numbers");
            }
            s.merge.evd_offsets = {(*arr)[0], (*arr)[1], (*arr)[2]};
        }
        else if (key == "minimizer.memory_pairs") s.merge.minimizer.memory_pairs = static_cast<int>(integer(key, value));
        else if (key == "minimizer.grad_tolerance") s.merge.minimizer.grad_tolerance = number(key, value);
        else if (key == "minimizer.max_iterations") s.merge.minimizer.max_iterations = static_cast<int>(integer(key, value));
        else if (key == "sampler.patch") s.sampler.patch_size = static_cast<int>(integer(key, value));
        else if (key == "sampler.min_kp") s.sampler.min_keypoints_per_patch = static_cast<int>(integer(key, value));
        else if (key == "sampler.samples_per_patch") s.sampler.samples_per_patch = static_cast<int>(integer(key, value));
        else if (key == "sampler.seed") s.sampler.rng_seed = static_cast<std::uint64_t>(integer(key, value));
        else if (key == "render.lambda") s.lambda = number(key, value);
        else if (key == "render.lambda_iso") s.lambda_iso = number(key, value);
        else if (key == "render.depth_scale") s.depth_scale = number(key, value);
        else if (key == "render.width") s.render_width = static_cast<int>(integer(key, value));
        else if (key == "render.height") s.render_height = static_cast<int>(integer(key, value));
        else if (key == "render.fov") s.render_fov = number(key, value);
        else if (key == "report.bytes_per_primitive") s.bytes_per_primitive = static_cast<std::size_t>(integer(key, value));
        else throw InvalidArgument("unknown config key " + key);
    }
}

} // namespace splatc
