#pragma once

// Little-endian primitives and atomic file replacement shared by the file
// formats.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "pgst/errors.hpp"

namespace pgst::io {

template <typename T>
void put_le(std::string &out, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    out.append(bytes, sizeof(T));
}

inline void put_f32(std::string &out, double v) { put_le(out, static_cast<float>(v)); }

/// Bounds-checked little-endian reader over an in-memory file; errors name
/// the file and byte offset.
class Reader {
  public:
    Reader(std::string data, std::string path) : data_(std::move(data)), path_(std::move(path)) {}

    std::size_t offset() const { return pos_; }
    std::size_t remaining() const { return data_.size() - pos_; }
    bool at_end() const { return pos_ == data_.size(); }
    const std::string &path() const { return path_; }

    [[noreturn]] void fail(const std::string &what) const { fail_at(pos_, what); }
    [[noreturn]] void fail_at(std::size_t offset, const std::string &what) const {
        throw InputError(path_ + ": offset " + std::to_string(offset) + ": " + what);
    }

    template <typename T>
    T get() {
        if (remaining() < sizeof(T)) fail("unexpected end of file");
        char bytes[sizeof(T)];
        std::memcpy(bytes, data_.data() + pos_, sizeof(T));
        if constexpr (std::endian::native == std::endian::big)
            std::reverse(bytes, bytes + sizeof(T));
        T v;
        std::memcpy(&v, bytes, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }

    double get_f32() {
        const std::size_t at = pos_;
        const float v = get<float>();
        if (!std::isfinite(v)) fail_at(at, "non-finite value");
        return v;
    }

    std::string get_bytes(std::size_t n) {
        if (remaining() < n) fail("unexpected end of file");
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    /// Reads up to and excluding '\n'.
    std::string get_line() {
        const auto end = data_.find('\n', pos_);
        if (end == std::string::npos) fail("unterminated header line");
        std::string s = data_.substr(pos_, end - pos_);
        pos_ = end + 1;
        return s;
    }

  private:
    std::string data_;
    std::string path_;
    std::size_t pos_ = 0;
};

inline std::string read_file(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError(path.string() + ": cannot open for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Writes through a sibling temp file and renames it into place.
inline void write_file_atomic(const std::filesystem::path &path, const std::string &bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw InputError(tmp.string() + ": cannot open for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw InputError(tmp.string() + ": write failed");
    }
    std::filesystem::rename(tmp, path);
}

} // namespace pgst::io
