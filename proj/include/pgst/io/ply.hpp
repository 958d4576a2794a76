#pragma once

// Gaussian clouds as binary little-endian PLY using the property names of
// the common 3D Gaussian splatting interchange layout. Higher-order SH
// coefficients are stored channel-major (f_rest_0..2 red, 3..5 green,
// 6..8 blue).

#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "pgst/gaussian.hpp"
#include "pgst/io/binary.hpp"

namespace pgst::io {

namespace detail {

inline std::vector<std::string> ply_properties(int sh_degree) {
    std::vector<std::string> p{"x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"};
    const int rest = sh_degree == 1 ? 9 : 0;
    for (int k = 0; k < rest; ++k) p.push_back("f_rest_" + std::to_string(k));
    p.push_back("opacity");
    for (int k = 0; k < 3; ++k) p.push_back("scale_" + std::to_string(k));
    for (int k = 0; k < 4; ++k) p.push_back("rot_" + std::to_string(k));
    return p;
}

} // namespace detail

inline std::string encode_ply(const GaussianCloud &c) {
    c.validate();
    const auto props = detail::ply_properties(c.sh_degree);
    std::string out = "ply\nformat binary_little_endian 1.0\nelement vertex " +
                      std::to_string(c.size()) + "\n";
    for (const auto &p : props) out += "property float " + p + "\n";
    out += "end_header\n";
    const int rest = static_cast<int>(c.coeffs()) - 1;
    for (std::size_t i = 0; i < c.size(); ++i) {
        for (int k = 0; k < 3; ++k) put_f32(out, c.positions[i][k]);
        for (int k = 0; k < 3; ++k) put_f32(out, 0.0);
        const double *f = c.color(i);
        for (int ch = 0; ch < 3; ++ch) put_f32(out, f[ch]);
        for (int ch = 0; ch < 3; ++ch)
            for (int k = 1; k <= rest; ++k) put_f32(out, f[k * 3 + ch]);
        put_f32(out, c.raw_opacities[i]);
        for (int k = 0; k < 3; ++k) put_f32(out, c.raw_scales[i][k]);
        for (int k = 0; k < 4; ++k) put_f32(out, c.raw_rotations[i][k]);
    }
    return out;
}

inline GaussianCloud decode_ply(std::string bytes, const std::string &path) {
    Reader r(std::move(bytes), path);
    if (r.get_line() != "ply") r.fail_at(0, "not a PLY file");
    std::size_t count = 0;
    bool have_vertex = false, little = false;
    std::vector<std::string> props;
    for (;;) {
        const std::size_t at = r.offset();
        std::istringstream line(r.get_line());
        std::string word;
        line >> word;
        if (word == "end_header") break;
        if (word == "comment" || word.empty()) continue;
        if (word == "format") {
            std::string fmt;
            line >> fmt;
            if (fmt != "binary_little_endian") r.fail_at(at, "only binary_little_endian is supported");
            little = true;
        } else if (word == "element") {
            std::string name;
            long long n = -1;
            line >> name >> n;
            if (name != "vertex" || have_vertex || n < 0) r.fail_at(at, "expected a single vertex element");
            count = static_cast<std::size_t>(n);
            have_vertex = true;
        } else if (word == "property") {
            std::string type, name;
            line >> type >> name;
            if (!have_vertex) r.fail_at(at, "property before element");
            if (type != "float" && type != "float32") r.fail_at(at, "property " + name + " must be float");
            props.push_back(name);
        } else {
            r.fail_at(at, "unexpected header keyword '" + word + "'");
        }
    }
    if (!little || !have_vertex) r.fail("header lacks format or vertex element");

    std::map<std::string, std::size_t> index;
    for (std::size_t k = 0; k < props.size(); ++k)
        if (!index.emplace(props[k], k).second) r.fail("duplicate property " + props[k]);
    std::size_t rest = 0;
    while (index.count("f_rest_" + std::to_string(rest))) ++rest;
    if (rest != 0 && rest != 9)
        r.fail("unsupported SH layout: " + std::to_string(rest) + " f_rest properties");
    GaussianCloud c;
    c.sh_degree = rest == 9 ? 1 : 0;
    const auto expected = detail::ply_properties(c.sh_degree);
    for (const auto &p : expected)
        if (!index.count(p)) r.fail("missing property " + p);
    if (props.size() != expected.size()) r.fail("unexpected extra properties");

    const std::size_t record = props.size() * 4;
    if (r.remaining() != count * record)
        r.fail("vertex data is " + std::to_string(r.remaining()) + " bytes, header implies " +
               std::to_string(count * record));
    c.resize(count);
    std::vector<double> v(props.size());
    auto at = [&](const std::string &name) { return v[index.at(name)]; };
    for (std::size_t i = 0; i < count; ++i) {
        for (auto &x : v) x = r.get_f32();
        c.positions[i] = {at("x"), at("y"), at("z")};
        double *f = c.color(i);
        for (int ch = 0; ch < 3; ++ch) f[ch] = at("f_dc_" + std::to_string(ch));
        for (int ch = 0; ch < 3; ++ch)
            for (int k = 1; k <= static_cast<int>(rest / 3); ++k)
                f[k * 3 + ch] = at("f_rest_" + std::to_string(ch * 3 + k - 1));
        c.raw_opacities[i] = at("opacity");
        for (int k = 0; k < 3; ++k) c.raw_scales[i][k] = at("scale_" + std::to_string(k));
        for (int k = 0; k < 4; ++k) c.raw_rotations[i][k] = at("rot_" + std::to_string(k));
        if (c.raw_rotations[i].squaredNorm() == 0.0)
            r.fail_at(r.offset() - record, "zero quaternion for vertex " + std::to_string(i));
    }
    return c;
}

inline GaussianCloud read_ply(const std::filesystem::path &path) {
    return decode_ply(read_file(path), path.string());
}

inline void write_ply(const std::filesystem::path &path, const GaussianCloud &c) {
    write_file_atomic(path, encode_ply(c));
}

} // namespace pgst::io
