#pragma once

// Named tensor files ("PGSW"): a header followed by (name, shape, f32 data)
// records until end of file.

#include <filesystem>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "pgst/io/binary.hpp"
#include "pgst/tensor.hpp"

namespace pgst::io {

inline constexpr std::uint32_t kWeightsVersion = 1;

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

inline std::string encode_weights(const NamedTensors &tensors) {
    std::string out = "PGSW";
    put_le<std::uint32_t>(out, kWeightsVersion);
    for (const auto &[name, t] : tensors) {
        if (name.size() > std::numeric_limits<std::uint16_t>::max())
            throw ContractViolation("tensor name too long: " + name);
        if (t.dims.size() > 255) throw ContractViolation("tensor rank too large: " + name);
        if (Tensor::element_count(t.dims) != t.data.size())
            throw ContractViolation("tensor shape does not match data: " + name);
        put_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
        out += name;
        put_le<std::uint8_t>(out, static_cast<std::uint8_t>(t.dims.size()));
        for (auto d : t.dims) put_le<std::uint32_t>(out, d);
        for (double v : t.data) put_f32(out, v);
    }
    return out;
}

inline NamedTensors decode_weights(std::string bytes, const std::string &path) {
    Reader r(std::move(bytes), path);
    if (r.remaining() < 4 || r.get_bytes(4) != "PGSW") r.fail_at(0, "bad magic (expected PGSW)");
    const std::size_t version_at = r.offset();
    if (r.get<std::uint32_t>() != kWeightsVersion) r.fail_at(version_at, "unsupported version");
    NamedTensors out;
    while (!r.at_end()) {
        const std::size_t at = r.offset();
        const auto len = r.get<std::uint16_t>();
        std::string name = r.get_bytes(len);
        const auto rank = r.get<std::uint8_t>();
        std::vector<std::uint32_t> dims(rank);
        for (auto &d : dims) d = r.get<std::uint32_t>();
        const std::uint64_t count = Tensor::element_count(dims);
        if (count * 4 > r.remaining()) r.fail_at(at, "tensor '" + name + "' runs past end of file");
        Tensor t;
        t.dims = std::move(dims);
        t.data.resize(count);
        for (auto &v : t.data) v = r.get_f32();
        for (const auto &e : out)
            if (e.first == name) r.fail_at(at, "duplicate tensor '" + name + "'");
        out.emplace_back(std::move(name), std::move(t));
    }
    return out;
}

inline NamedTensors read_weights(const std::filesystem::path &path) {
    return decode_weights(read_file(path), path.string());
}

inline void write_weights(const std::filesystem::path &path, const NamedTensors &t) {
    write_file_atomic(path, encode_weights(t));
}

/// Copies matching tensors into `module`; every tensor the module visits
/// must be present with the same shape.
template <typename Module>
void load_tensors(Module &module, const std::string &prefix, const NamedTensors &tensors,
                  const std::string &path) {
    module.visit(prefix, [&](const std::string &name, Tensor &t) {
        for (const auto &[n, src] : tensors) {
            if (n != name) continue;
            if (src.dims != t.dims) throw InputError(path + ": tensor '" + name + "' has the wrong shape");
            t.data = src.data;
            return;
        }
        throw InputError(path + ": missing tensor '" + name + "'");
    });
}

} // namespace pgst::io
