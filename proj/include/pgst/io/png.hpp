#pragma once

// 8-bit RGB PNG via libpng. Linear values are encoded with a fixed
// x^(1/2.2) curve and decoded with x^2.2.

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "pgst/image.hpp"
#include "pgst/io/binary.hpp"

namespace pgst::io {

inline std::uint8_t encode_channel(double linear) {
    const double v = std::pow(std::clamp(linear, 0.0, 1.0), 1.0 / 2.2);
    return static_cast<std::uint8_t>(std::lround(v * 255.0));
}

inline double decode_channel(std::uint8_t v) { return std::pow(v / 255.0, 2.2); }

namespace detail {

inline void png_append(png_structp png, png_bytep data, png_size_t len) {
    auto *out = static_cast<std::string *>(png_get_io_ptr(png));
    out->append(reinterpret_cast<const char *>(data), len);
}
inline void png_flush_noop(png_structp) {}

struct PngSource {
    const std::string *bytes;
    std::size_t pos;
};

inline void png_consume(png_structp png, png_bytep data, png_size_t len) {
    auto *src = static_cast<PngSource *>(png_get_io_ptr(png));
    if (src->pos + len > src->bytes->size()) png_error(png, "truncated PNG data");
    std::memcpy(data, src->bytes->data() + src->pos, len);
    src->pos += len;
}


} // namespace detail

inline std::string encode_png(const Image &img) {
    std::string out;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info) throw InputError("PNG: cannot allocate encoder");
    std::vector<std::uint8_t> row(static_cast<std::size_t>(img.width) * 3);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw InputError("PNG: encoding failed");
    }
    png_set_write_fn(png, &out, detail::png_append, detail::png_flush_noop);
    png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) row[x * 3 + c] = encode_channel(img.at(x, y, c));
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

inline Image decode_png(const std::string &bytes, const std::string &path) {
    if (bytes.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8))
        throw InputError(path + ": offset 0: not a PNG file");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info) throw InputError("PNG: cannot allocate decoder");
    detail::PngSource src{&bytes, 0};
    Image img;
    std::vector<std::uint8_t> row;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw InputError(path + ": offset " + std::to_string(src.pos) + ": corrupt PNG data");
    }
    png_set_read_fn(png, &src, detail::png_consume);
    png_read_info(png, info);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_palette_to_rgb(png);
    png_set_gray_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    png_read_update_info(png, info);
    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    img = Image(w, h);
    row.resize(png_get_rowbytes(png, info));
    for (int y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) img.at(x, y, c) = decode_channel(row[x * 3 + c]);
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

inline void write_png(const std::filesystem::path &path, const Image &img) {
    write_file_atomic(path, encode_png(img));
}

inline Image read_png(const std::filesystem::path &path) {
    return decode_png(read_file(path), path.string());
}

} // namespace pgst::io
