// Copyright Contributors to the splatc project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <png.h>

#include "splatc/core.hpp"
#include "splatc/image.hpp"

namespace splatc {

// ---------------------------------------------------------------------------
// Splat PLY

enum class PlyScalar { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

inline std::size_t ply_scalar_size(PlyScalar t) {
    switch (t) {
    case PlyScalar::Int8:
    case PlyScalar::UInt8: return 1;
    case PlyScalar::Int16:
    case PlyScalar::UInt16: return 2;
    case PlyScalar::Int32:
    case PlyScalar::UInt32:
    case PlyScalar::Float32: return 4;
    case PlyScalar::Float64: return 8;
    }
    return 0;
}

inline std::optional<PlyScalar> parse_ply_scalar(const std::string &name) {
    static const std::map<std::string, PlyScalar> names = {
        {"char", PlyScalar::Int8},     {"int8", PlyScalar::Int8},
        {"uchar", PlyScalar::UInt8},   {"uint8", PlyScalar::UInt8},
        {"short", PlyScalar::Int16},   {"int16", PlyScalar::Int16},
        {"ushort", PlyScalar::UInt16}, {"uint16", PlyScalar::UInt16},
        {"int", PlyScalar::Int32},     {"int32", PlyScalar::Int32},
        {"uint", PlyScalar::UInt32},   {"uint32", PlyScalar::UInt32},
        {"float", PlyScalar::Float32}, {"float32", PlyScalar::Float32},
        {"double", PlyScalar::Float64}, {"float64", PlyScalar::Float64},
    };
    auto it = names.find(name);
    if (it == names.end()) {
        return std::nullopt;
    }
    return it->second;
}

struct PlyProperty {
    std::string name;
    PlyScalar type = PlyScalar::Float32;
    std::size_t offset = 0;
};

struct PlyHeaderInfo {
    std::size_t vertex_count = 0;
    std::vector<PlyProperty> properties;
    std::size_t stride = 0;
    std::size_t header_bytes = 0;
    bool opacity_logit = false;
    bool scale_log = false;

    const PlyProperty *find(const std::string &name) const {
        for (const auto &p : properties) {
            if (p.name == name) {
                return &p;
            }
        }
        return nullptr;
    }
};

inline const std::array<const char *, 14> &mandatory_ply_properties() {
    static const std::array<const char *, 14> names = {
        "x",       "y",       "z",       "scale_0", "scale_1", "scale_2", "rot_0",
        "rot_1",   "rot_2",   "rot_3",   "opacity", "f_dc_0",  "f_dc_1",  "f_dc_2"};
    return names;
}

namespace detail {

template <typename T>
T load_le(const unsigned char *p) {
    using U = std::conditional_t<sizeof(T) == 1, std::uint8_t,
              std::conditional_t<sizeof(T) == 2, std::uint16_t,
              std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>>;
    U bits = 0;
    for (std::size_t k = 0; k < sizeof(T); ++k) {
        bits |= static_cast<U>(static_cast<U>(p[k]) << (8 * k));
    }
    return std::bit_cast<T>(bits);
}

template <typename T>
void store_le(std::string &out, T value) {
    using U = std::conditional_t<sizeof(T) == 2, std::uint16_t,
              std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>;
    const U bits = std::bit_cast<U>(value);
    for (std::size_t k = 0; k < sizeof(T); ++k) {
        out.push_back(static_cast<char>((bits >> (8 * k)) & 0xFFu));
    }
}

inline double load_scalar(const unsigned char *p, PlyScalar t) {
    switch (t) {
    case PlyScalar::Int8: return load_le<std::int8_t>(p);
    case PlyScalar::UInt8: return load_le<std::uint8_t>(p);
    case PlyScalar::Int16: return load_le<std::int16_t>(p);
    case PlyScalar::UInt16: return load_le<std::uint16_t>(p);
    case PlyScalar::Int32: return load_le<std::int32_t>(p);
    case PlyScalar::UInt32: return load_le<std::uint32_t>(p);
    case PlyScalar::Float32: return load_le<float>(p);
    case PlyScalar::Float64: return load_le<double>(p);
    }
    return 0.0;
}

inline bool is_floating(PlyScalar t) {
    return t == PlyScalar::Float32 || t == PlyScalar::Float64;
}

/// Whether normalizing `f` in double and rounding back to float gives `f`.
inline bool is_float_quaternion_fixed_point(const std::array<float, 4> &f) {
    Eigen::Vector4d d(f[0], f[1], f[2], f[3]);
    d /= d.norm();
    for (int k = 0; k < 4; ++k) {
        if (static_cast<float>(d(k)) != f[static_cast<std::size_t>(k)]) {
            return false;
        }
    }
    return true;
}

/// Float quaternion q such that normalizing it in double and rounding back
/// to float gives q again, so write-read-write cycles are byte-stable. Picks
/// the fixed point closest to the unit quaternion within two ulps per
/// component; the component-wise rounding wins whenever it is one.
inline std::array<float, 4> stable_float_quaternion(const Quat &rotation) {
    const Eigen::Vector4d unit = Eigen::Vector4d(rotation.w(), rotation.x(), rotation.y(),
                                                 rotation.z())
                                     .normalized();
    std::array<float, 4> rounded{};
    for (int k = 0; k < 4; ++k) {
        rounded[static_cast<std::size_t>(k)] = static_cast<float>(unit(k));
    }
    if (is_float_quaternion_fixed_point(rounded)) {
        return rounded;
    }
    auto step = [](float v, int ulps) {
        for (; ulps > 0; --ulps) {
            v = std::nextafter(v, std::numeric_limits<float>::infinity());
        }
        for (; ulps < 0; ++ulps) {
            v = std::nextafter(v, -std::numeric_limits<float>::infinity());
        }
        return v;
    };
    std::array<float, 4> best = rounded;
    double best_dist = std::numeric_limits<double>::infinity();
    constexpr int kReach = 2;
    constexpr int kSide = 2 * kReach + 1;
    for (int code = 0; code < kSide * kSide * kSide * kSide; ++code) {
        std::array<float, 4> cand{};
        int rem = code;
        for (std::size_t k = 0; k < 4; ++k) {
            cand[k] = step(rounded[k], rem % kSide - kReach);
            rem /= kSide;
        }
        if (!is_float_quaternion_fixed_point(cand)) {
            continue;
        }
        const double dist =
            (Eigen::Vector4d(cand[0], cand[1], cand[2], cand[3]) - unit).squaredNorm();
        if (dist < best_dist) {
            best_dist = dist;
            best = cand;
        }
    }
    return best;
}

inline std::vector<std::string> split_csv(const std::string &line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) {
        fields.push_back(field);
    }
    if (!line.empty() && line.back() == ',') {
        fields.emplace_back();
    }
    return fields;
}

inline std::string trim(const std::string &s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::optional<double> parse_double(const std::string &text) {
    const std::string s = trim(text);
    if (s.empty()) {
        return std::nullopt;
    }
    std::size_t used = 0;
    try {
        const double v = std::stod(s, &used);
        if (used != s.size()) {
            return std::nullopt;
        }
        return v;
    } catch (const std::exception &) {
        return std::nullopt;
    }
}

} // namespace detail

inline PlyHeaderInfo parse_ply_header(std::istream &in) {
    PlyHeaderInfo info;
    std::string line;
    std::size_t consumed = 0;
    bool saw_magic = false;
    bool saw_format = false;
    bool in_vertex = false;
    bool saw_vertex = false;
    while (std::getline(in, line)) {
        consumed += line.size() + 1;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        std::istringstream ls(line);
        std::string keyword;
        ls >> keyword;
        if (!saw_magic) {
            if (keyword != "ply") {
                throw FormatError("not a PLY file");
            }
            saw_magic = true;
            continue;
        }
        if (keyword == "format") {
            std::string fmt;
            ls >> fmt;
            if (fmt != "binary_little_endian") {
                throw FormatError("unsupported PLY format '" + fmt + "'");
            }
            saw_format = true;
        } else if (keyword == "comment") {
            std::string key;
            std::string value;
            ls >> key >> value;
            if (key == "opacity_space") {
                info.opacity_logit = value == "logit";
            } else if (key == "scale_space") {
                info.scale_log = value == "log";
            }
        } else if (keyword == "element") {
            std::string name;
            long long count = -1;
            ls >> name >> count;
            if (name != "vertex" || saw_vertex) {
                throw FormatError("unsupported PLY element '" + name + "'");
            }
            if (count < 0) {
                throw FormatError("invalid vertex count");
            }
            info.vertex_count = static_cast<std::size_t>(count);
            in_vertex = true;
            saw_vertex = true;
        } else if (keyword == "property") {
            std::string type_name;
            std::string name;
            ls >> type_name >> name;
            if (!in_vertex) {
                throw FormatError("property outside of an element");
            }
            if (type_name == "list") {
                throw FormatError("list properties are not supported");
            }
            auto type = parse_ply_scalar(type_name);
            if (!type) {
                throw FormatError("unknown type '" + type_name + "' of property " + name);
            }
            info.properties.push_back({name, *type, info.stride});
            info.stride += ply_scalar_size(*type);
        } else if (keyword == "end_header") {
            info.header_bytes = consumed;
            if (!saw_format) {
                throw FormatError("missing PLY format line");
            }
            for (const char *name : mandatory_ply_properties()) {
                const PlyProperty *p = info.find(name);
                if (p == nullptr) {
                    throw FormatError(std::string("missing property ") + name);
                }
                if (!detail::is_floating(p->type)) {
                    throw FormatError(std::string("property ") + name +
                                      " must be float or double");
                }
            }
            return info;
        } else if (keyword == "obj_info" || keyword.empty()) {
            continue;
        } else {
            throw FormatError("unexpected PLY header line '" + line + "'");
        }
    }
    throw FormatError("PLY header is not terminated by end_header");
}

/// Reads a binary little-endian splat PLY. Insertion indices follow file order.
inline SplatMap read_splat_ply(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path);
    }
    const PlyHeaderInfo info = parse_ply_header(in);

    std::vector<std::pair<int, const PlyProperty *>> rest;
    for (const auto &p : info.properties) {
        if (p.name.rfind("f_rest_", 0) == 0) {
            const auto idx = detail::parse_double(p.name.substr(7));
            if (!idx || *idx < 0 || *idx != std::floor(*idx)) {
                throw FormatError("malformed property name " + p.name);
            }
            rest.emplace_back(static_cast<int>(*idx), &p);
        }
    }
    std::sort(rest.begin(), rest.end(),
              [](const auto &a, const auto &b) { return a.first < b.first; });

    const auto *grad = info.find("grad_avg");
    const auto *kf = info.find("keyframe_index");
    auto prop = [&](const char *name) { return info.find(name); };
    const std::array<const PlyProperty *, 14> m = {
        prop("x"),       prop("y"),       prop("z"),       prop("scale_0"), prop("scale_1"),
        prop("scale_2"), prop("rot_0"),   prop("rot_1"),   prop("rot_2"),   prop("rot_3"),
        prop("opacity"), prop("f_dc_0"),  prop("f_dc_1"),  prop("f_dc_2")};

    SplatMap map;
    std::vector<unsigned char> row(info.stride);
    for (std::size_t v = 0; v < info.vertex_count; ++v) {
        in.read(reinterpret_cast<char *>(row.data()), static_cast<std::streamsize>(info.stride));
        if (in.gcount() != static_cast<std::streamsize>(info.stride)) {
            const auto offset = static_cast<std::int64_t>(info.header_bytes + v * info.stride +
                                                          static_cast<std::size_t>(in.gcount()));
            throw IoError("truncated PLY payload in " + path + " at byte " +
                              std::to_string(offset),
                          offset);
        }
        auto get = [&](const PlyProperty *p) { return detail::load_scalar(row.data() + p->offset, p->type); };
        GaussianPrimitive g;
        g.mean = {get(m[0]), get(m[1]), get(m[2])};
        g.scale = {get(m[3]), get(m[4]), get(m[5])};
        if (info.scale_log) {
            g.scale = g.scale.array().exp();
        }
        g.rotation = Quat(get(m[6]), get(m[7]), get(m[8]), get(m[9]));
        g.opacity = get(m[10]);
        if (info.opacity_logit) {
            g.opacity = 1.0 / (1.0 + std::exp(-g.opacity));
        }
        g.color = {get(m[11]), get(m[12]), get(m[13])};
        g.sh_rest.reserve(rest.size());
        for (const auto &[idx, p] : rest) {
            g.sh_rest.push_back(static_cast<float>(get(p)));
        }
        g.grad_stat = grad != nullptr ? get(grad) : 0.0;
        if (kf != nullptr) {
            const double k = get(kf);
            if (!(k >= 0.0) || k > std::numeric_limits<std::uint32_t>::max()) {
                throw FormatError("invalid keyframe_index in vertex " + std::to_string(v));
            }
            g.keyframe_index = static_cast<std::uint32_t>(k);
        }
        map.insert(std::move(g));
    }
    return map;
}

/// Property names written by write_splat_ply, in order.
inline std::vector<std::string> splat_ply_property_names(std::size_t sh_rest_count) {
    std::vector<std::string> names = {"x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2"};
    for (std::size_t k = 0; k < sh_rest_count; ++k) {
        names.push_back("f_rest_" + std::to_string(k));
    }
    for (const char *n : {"opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2",
                          "rot_3", "grad_avg", "keyframe_index"}) {
        names.emplace_back(n);
    }
    return names;
}

/// Serializes a map to the bytes of a binary little-endian splat PLY.
/// Opacity and scale are stored activated (linear).
inline std::string encode_splat_ply(const SplatMap &map) {
    std::size_t rest_count = 0;
    for (const auto &g : map) {
        rest_count = std::max(rest_count, g.sh_rest.size());
    }
    const auto names = splat_ply_property_names(rest_count);

    std::string out;
    out += "ply\nformat binary_little_endian 1.0\n";
    out += "comment opacity_space linear\ncomment scale_space linear\n";
    out += "element vertex " + std::to_string(map.size()) + "\n";
    for (const auto &n : names) {
        out += (n == "keyframe_index" ? "property uint " : "property float ") + n + "\n";
    }
    out += "end_header\n";
    out.reserve(out.size() + map.size() * names.size() * 4);

    auto put = [&](double v) { detail::store_le(out, static_cast<float>(v)); };
    for (const auto &g : map) {
        put(g.mean.x());
        put(g.mean.y());
        put(g.mean.z());
        put(g.color.x());
        put(g.color.y());
        put(g.color.z());
        for (std::size_t k = 0; k < rest_count; ++k) {
            detail::store_le(out, k < g.sh_rest.size() ? g.sh_rest[k] : 0.0f);
        }
        put(g.opacity);
        put(g.scale.x());
        put(g.scale.y());
        put(g.scale.z());
        for (float q : detail::stable_float_quaternion(g.rotation)) {
            detail::store_le(out, q);
        }
        put(g.grad_stat);
        detail::store_le(out, static_cast<std::uint32_t>(g.keyframe_index));
    }
    return out;
}

inline void write_splat_ply(const SplatMap &map, const std::string &path) {
    const std::string bytes = encode_splat_ply(map);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open " + path + " for writing");
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("failed writing " + path);
    }
}

// ---------------------------------------------------------------------------
// Keypoints CSV

struct KeypointRecord {
    double u = 0.0;
    double v = 0.0;
    /// Meters; NaN when unavailable.
    double depth = std::numeric_limits<double>::quiet_NaN();
    /// Has a triangulated map point.
    bool active = false;

    bool has_depth() const noexcept { return std::isfinite(depth) && depth > 0.0; }
};

inline std::vector<KeypointRecord> parse_keypoints_csv(std::istream &in) {
    std::vector<KeypointRecord> out;
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) {
        throw ParseError("missing header \"u,v,depth,active\"", 1);
    }
    ++line_no;
    if (detail::trim(line) != "u,v,depth,active") {
        throw ParseError("expected header \"u,v,depth,active\"", line_no);
    }
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) {
            continue;
        }
        const auto fields = detail::split_csv(line);
        if (fields.size() != 4) {
            throw ParseError("expected 4 fields", line_no);
        }
        const auto u = detail::parse_double(fields[0]);
        const auto v = detail::parse_double(fields[1]);
        if (!u || !v || !std::isfinite(*u) || !std::isfinite(*v)) {
            throw ParseError("invalid pixel coordinate", line_no);
        }
        KeypointRecord rec{*u, *v};
        const std::string depth_text = detail::trim(fields[2]);
        if (!depth_text.empty()) {
            const auto d = detail::parse_double(depth_text);
            if (!d) {
                throw ParseError("invalid depth", line_no);
            }
            rec.depth = *d;
        }
        const std::string active = detail::trim(fields[3]);
        if (active == "1" || active == "true") {
            rec.active = true;
        } else if (active == "0" || active == "false") {
            rec.active = false;
        } else {
            throw ParseError("invalid active flag", line_no);
        }
        out.push_back(rec);
    }
    return out;
}

inline std::vector<KeypointRecord> read_keypoints_csv(const std::string &path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path);
    }
    return parse_keypoints_csv(in);
}

inline void write_keypoints_csv(const std::vector<KeypointRecord> &kps, const std::string &path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw IoError("cannot open " + path + " for writing");
    }
    out << "u,v,depth,active\n" << std::setprecision(17);
    for (const auto &k : kps) {
        out << k.u << ',' << k.v << ',';
        if (std::isfinite(k.depth)) {
            out << k.depth;
        }
        out << ',' << (k.active ? 1 : 0) << '\n';
    }
}

// ---------------------------------------------------------------------------
// Poses and intrinsics

/// One row-major 4x4 T_CW per line, 16 whitespace-separated numbers.
inline std::vector<CameraPose> read_poses(const std::string &path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path);
    }
    std::vector<CameraPose> poses;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty() || detail::trim(line)[0] == '#') {
            continue;
        }
        std::istringstream ls(line);
        Eigen::Matrix4d m;
        for (int k = 0; k < 16; ++k) {
            std::string tok;
            if (!(ls >> tok)) {
                throw ParseError("expected 16 numbers", line_no);
            }
            const auto v = detail::parse_double(tok);
            if (!v) {
                throw ParseError("invalid number '" + tok + "'", line_no);
            }
            m(k / 4, k % 4) = *v;
        }
        std::string extra;
        if (ls >> extra) {
            throw ParseError("expected 16 numbers", line_no);
        }
        try {
            poses.push_back(CameraPose::from_matrix(m));
        } catch (const InvalidArgument &e) {
            throw ParseError(e.what(), line_no);
        }
    }
    return poses;
}

inline void write_poses(const std::vector<CameraPose> &poses, const std::string &path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw IoError("cannot open " + path + " for writing");
    }
    out << std::setprecision(17);
    for (const auto &p : poses) {
        const Eigen::Matrix4d m = p.matrix();
        for (int k = 0; k < 16; ++k) {
            out << m(k / 4, k % 4) << (k == 15 ? '\n' : ' ');
        }
    }
}

/// Single line: fx fy cx cy width height.
inline PinholeIntrinsics read_intrinsics(const std::string &path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path);
    }
    PinholeIntrinsics k;
    if (!(in >> k.fx >> k.fy >> k.cx >> k.cy >> k.width >> k.height)) {
        throw ParseError("expected 'fx fy cx cy width height'", 1);
    }
    k.validate();
    return k;
}

inline void write_intrinsics(const PinholeIntrinsics &k, const std::string &path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw IoError("cannot open " + path + " for writing");
    }
    out << std::setprecision(17) << k.fx << ' ' << k.fy << ' ' << k.cx << ' ' << k.cy << ' '
        << k.width << ' ' << k.height << '\n';
}

// ---------------------------------------------------------------------------
// PNG

namespace detail {

struct FileCloser {
    void operator()(std::FILE *f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_file(const std::string &path, const char *mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) {
        throw IoError(std::string("cannot open ") + path +
                      (mode[0] == 'w' ? " for writing" : ""));
    }
    return f;
}

inline void png_error_to_jmp(png_structp png, png_const_charp msg) {
    auto *buf = static_cast<std::string *>(png_get_error_ptr(png));
    if (buf != nullptr) {
        *buf = msg;
    }
    png_longjmp(png, 1);
}

inline void png_warning_ignore(png_structp, png_const_charp) {}

struct PngPixels {
    int width = 0;
    int height = 0;
    int channels = 0;
    int bit_depth = 0;
    /// Samples in native byte order, 8- or 16-bit.
    std::vector<std::uint16_t> samples;
};

struct PngReadState {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngReadState() { png_destroy_read_struct(&png, info ? &info : nullptr, nullptr); }
};

struct PngWriteState {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngWriteState() { png_destroy_write_struct(&png, info ? &info : nullptr); }
};

/// Reads a PNG. `want_rgb8` expands palette/gray and strips alpha and 16-bit;
/// otherwise the file must be 16-bit single channel.
inline PngPixels read_png(const std::string &path, bool want_rgb8) {
    FilePtr file = open_file(path, "rb");
    unsigned char sig[8] = {};
    if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
        throw FormatError(path + " is not a PNG file");
    }
    std::string message;
    PngReadState st;
    st.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, png_error_to_jmp,
                                    png_warning_ignore);
    if (st.png == nullptr) {
        throw IoError("png_create_read_struct failed");
    }
    st.info = png_create_info_struct(st.png);
    if (st.info == nullptr) {
        throw IoError("png_create_info_struct failed");
    }
    // Everything with a destructor lives above setjmp.
    PngPixels px;
    std::vector<png_bytep> rows;
    std::vector<unsigned char> buffer;
    if (setjmp(png_jmpbuf(st.png))) {
        throw FormatError("libpng error reading " + path + ": " + message);
    }
    png_init_io(st.png, file.get());
    png_set_sig_bytes(st.png, 8);
    png_read_info(st.png, st.info);
    const int color_type = png_get_color_type(st.png, st.info);
    const int depth = png_get_bit_depth(st.png, st.info);
    if (want_rgb8) {
        if (color_type == PNG_COLOR_TYPE_PALETTE) {
            png_set_palette_to_rgb(st.png);
        }
        if (color_type == PNG_COLOR_TYPE_GRAY && depth < 8) {
            png_set_expand_gray_1_2_4_to_8(st.png);
        }
        if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) {
            png_set_gray_to_rgb(st.png);
        }
        if (depth == 16) {
            png_set_strip_16(st.png);
        }
        png_set_strip_alpha(st.png);
        px.channels = 3;
        px.bit_depth = 8;
    } else {
        if (depth != 16 || color_type != PNG_COLOR_TYPE_GRAY) {
            throw FormatError(path + ": expected a 16-bit single-channel PNG (bit depth " +
                              std::to_string(depth) + ")");
        }
        if constexpr (std::endian::native == std::endian::little) {
            png_set_swap(st.png);
        }
        px.channels = 1;
        px.bit_depth = 16;
    }
    png_read_update_info(st.png, st.info);
    px.width = static_cast<int>(png_get_image_width(st.png, st.info));
    px.height = static_cast<int>(png_get_image_height(st.png, st.info));
    const std::size_t rowbytes = png_get_rowbytes(st.png, st.info);
    const std::size_t expected =
        static_cast<std::size_t>(px.width) * static_cast<std::size_t>(px.channels) *
        static_cast<std::size_t>(px.bit_depth / 8);
    if (rowbytes != expected) {
        throw FormatError(path + ": unexpected PNG row layout");
    }
    buffer.resize(rowbytes * static_cast<std::size_t>(px.height));
    rows.resize(static_cast<std::size_t>(px.height));
    for (int y = 0; y < px.height; ++y) {
        rows[static_cast<std::size_t>(y)] = buffer.data() + rowbytes * static_cast<std::size_t>(y);
    }
    png_read_image(st.png, rows.data());
    png_read_end(st.png, nullptr);

    const std::size_t count = static_cast<std::size_t>(px.width) *
                              static_cast<std::size_t>(px.height) *
                              static_cast<std::size_t>(px.channels);
    px.samples.resize(count);
    for (std::size_t k = 0; k < count; ++k) {
        if (px.bit_depth == 16) {
            std::uint16_t v;
            std::memcpy(&v, buffer.data() + 2 * k, 2);
            px.samples[k] = v;
        } else {
            px.samples[k] = buffer[k];
        }
    }
    return px;
}

inline void write_png(const std::string &path, const PngPixels &px) {
    FilePtr file = open_file(path, "wb");
    std::string message;
    PngWriteState st;
    st.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &message, png_error_to_jmp,
                                     png_warning_ignore);
    if (st.png == nullptr) {
        throw IoError("png_create_write_struct failed");
    }
    st.info = png_create_info_struct(st.png);
    if (st.info == nullptr) {
        throw IoError("png_create_info_struct failed");
    }
    const std::size_t bytes_per_sample = static_cast<std::size_t>(px.bit_depth / 8);
    const std::size_t rowbytes =
        static_cast<std::size_t>(px.width) * static_cast<std::size_t>(px.channels) * bytes_per_sample;
    std::vector<unsigned char> buffer(rowbytes * static_cast<std::size_t>(px.height));
    for (std::size_t k = 0; k < px.samples.size(); ++k) {
        if (bytes_per_sample == 2) {
            const std::uint16_t v = px.samples[k];
            std::memcpy(buffer.data() + 2 * k, &v, 2);
        } else {
            buffer[k] = static_cast<unsigned char>(px.samples[k]);
        }
    }
    std::vector<png_bytep> rows(static_cast<std::size_t>(px.height));
    for (int y = 0; y < px.height; ++y) {
        rows[static_cast<std::size_t>(y)] = buffer.data() + rowbytes * static_cast<std::size_t>(y);
    }
    if (setjmp(png_jmpbuf(st.png))) {
        throw IoError("libpng error writing " + path + ": " + message);
    }
    png_init_io(st.png, file.get());
    png_set_IHDR(st.png, st.info, static_cast<png_uint_32>(px.width),
                 static_cast<png_uint_32>(px.height), px.bit_depth,
                 px.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(st.png, st.info);
    if (px.bit_depth == 16 && std::endian::native == std::endian::little) {
        png_set_swap(st.png);
    }
    png_write_image(st.png, rows.data());
    png_write_end(st.png, nullptr);
}

} // namespace detail

/// 16-bit depth PNG to meters (raw / depth_scale); raw 0 becomes NaN.
inline Image read_depth_png(const std::string &path, double depth_scale = 5000.0) {
    if (!(depth_scale > 0.0)) {
        throw InvalidArgument("depth scale must be positive");
    }
    const auto px = detail::read_png(path, false);
    Image img(px.width, px.height, 1);
    for (std::size_t k = 0; k < px.samples.size(); ++k) {
        img.data[k] = px.samples[k] == 0 ? std::numeric_limits<double>::quiet_NaN()
                                         : px.samples[k] / depth_scale;
    }
    return img;
}

/// Meters to a 16-bit PNG; NaN or non-positive depths are written as 0.
inline void write_depth_png(const Image &depth, const std::string &path,
                            double depth_scale = 5000.0) {
    if (depth.channels != 1) {
        throw InvalidArgument("depth image must have one channel");
    }
    detail::PngPixels px{depth.width, depth.height, 1, 16, {}};
    px.samples.resize(depth.data.size());
    for (std::size_t k = 0; k < depth.data.size(); ++k) {
        const double d = depth.data[k];
        const double raw = std::isfinite(d) && d > 0.0 ? std::round(d * depth_scale) : 0.0;
        px.samples[k] = static_cast<std::uint16_t>(std::clamp(raw, 0.0, 65535.0));
    }
    detail::write_png(path, px);
}

/// 8-bit color PNG to RGB in [0, 1].
inline Image read_color_png(const std::string &path) {
    const auto px = detail::read_png(path, true);
    Image img(px.width, px.height, 3);
    for (std::size_t k = 0; k < px.samples.size(); ++k) {
        img.data[k] = px.samples[k] / 255.0;
    }
    return img;
}

inline void write_color_png(const Image &rgb, const std::string &path) {
    if (rgb.channels != 3) {
        throw InvalidArgument("color image must have three channels");
    }
    detail::PngPixels px{rgb.width, rgb.height, 3, 8, {}};
    px.samples.resize(rgb.data.size());
    for (std::size_t k = 0; k < rgb.data.size(); ++k) {
        const double v = std::isfinite(rgb.data[k]) ? rgb.data[k] : 0.0;
        px.samples[k] = static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    }
    detail::write_png(path, px);
}

} // namespace splatc
