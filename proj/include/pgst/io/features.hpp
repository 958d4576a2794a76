#pragma once

// Per-frame audio/expression feature sequences ("PGSF").

#include <filesystem>
#include <string>
#include <vector>

#include "pgst/deform.hpp"
#include "pgst/io/binary.hpp"

namespace pgst::io {

inline constexpr std::uint32_t kFeatureVersion = 1;

struct FeatureSequence {
    int audio_dim = 0;
    int expression_dim = 0;
    std::vector<FrameFeatures> frames;
};

inline std::string encode_features(const FeatureSequence &s) {
    std::string out = "PGSF";
    put_le<std::uint32_t>(out, kFeatureVersion);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.frames.size()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.audio_dim));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.expression_dim));
    for (const auto &f : s.frames) {
        if (f.audio.size() != s.audio_dim || f.expression.size() != s.expression_dim)
            throw ContractViolation("feature sequence: frame dimensions differ from header");
        for (double v : f.audio) put_f32(out, v);
        for (double v : f.expression) put_f32(out, v);
    }
    return out;
}

inline FeatureSequence decode_features(std::string bytes, const std::string &path) {
    Reader r(std::move(bytes), path);
    if (r.remaining() < 4 || r.get_bytes(4) != "PGSF") r.fail_at(0, "bad magic (expected PGSF)");
    const std::size_t version_at = r.offset();
    if (r.get<std::uint32_t>() != kFeatureVersion) r.fail_at(version_at, "unsupported version");
    const auto frames = r.get<std::uint32_t>();
    FeatureSequence s;
    s.audio_dim = static_cast<int>(r.get<std::uint32_t>());
    s.expression_dim = static_cast<int>(r.get<std::uint32_t>());
    const std::uint64_t expected =
        static_cast<std::uint64_t>(frames) * (s.audio_dim + s.expression_dim) * 4;
    if (r.remaining() != expected)
        r.fail("payload is " + std::to_string(r.remaining()) + " bytes, header implies " +
               std::to_string(expected));
    s.frames.resize(frames);
    for (auto &f : s.frames) {
        f.audio.resize(s.audio_dim);
        f.expression.resize(s.expression_dim);
        for (auto &v : f.audio) v = r.get_f32();
        for (auto &v : f.expression) v = r.get_f32();
    }
    return s;
}

inline FeatureSequence read_features(const std::filesystem::path &path) {
    return decode_features(read_file(path), path.string());
}

inline void write_features(const std::filesystem::path &path, const FeatureSequence &s) {
    write_file_atomic(path, encode_features(s));
}

} // namespace pgst::io
