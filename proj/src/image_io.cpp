#include "freqguide/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

#include "freqguide/errors.hpp"

namespace freqguide::io {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f != nullptr) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

std::uint8_t to_byte(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

void write_png(const std::filesystem::path& path, const ImageTensor& img) {
    const Shape& s = img.shape();
    if (s.channels != 3 && s.channels != 1) throw ShapeError("write_png: expected 1 or 3 channels, got " + s.str());
    FilePtr file(std::fopen(path.c_str(), "wb"));
    if (!file) throw IoError("cannot open for writing: " + path.string());

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png != nullptr ? png_create_info_struct(png) : nullptr;
    if (png == nullptr || info == nullptr) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng: failed to initialise writer for " + path.string());
    }
    std::vector<std::uint8_t> rows(s.plane() * 3);
    for (std::size_t y = 0; y < s.height; ++y) {
        for (std::size_t x = 0; x < s.width; ++x) {
            for (std::size_t c = 0; c < 3; ++c) {
                rows[(y * s.width + x) * 3 + c] = to_byte(img(s.channels == 1 ? 0 : c, y, x));
            }
        }
    }
    std::vector<png_bytep> row_ptrs(s.height);
    for (std::size_t y = 0; y < s.height; ++y) row_ptrs[y] = rows.data() + y * s.width * 3;

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng: write failed for " + path.string());
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(s.width), static_cast<png_uint_32>(s.height), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, row_ptrs.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

ImageTensor read_png(const std::filesystem::path& path) {
    FilePtr file(std::fopen(path.c_str(), "rb"));
    if (!file) throw IoError("cannot open for reading: " + path.string());

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png != nullptr ? png_create_info_struct(png) : nullptr;
    if (png == nullptr || info == nullptr) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("libpng: failed to initialise reader for " + path.string());
    }
    std::vector<std::uint8_t> pixels;
    std::vector<png_bytep> row_ptrs;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("libpng: read failed for " + path.string());
    }
    png_init_io(png, file.get());
    png_read_info(png, info);
    const auto width = png_get_image_width(png, info);
    const auto height = png_get_image_height(png, info);
    const auto color = png_get_color_type(png, info);
    if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    if ((color & PNG_COLOR_MASK_ALPHA) != 0) png_set_strip_alpha(png);
    png_read_update_info(png, info);
    if (png_get_channels(png, info) != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("unsupported PNG layout: " + path.string());
    }
    pixels.resize(static_cast<std::size_t>(width) * height * 3);
    row_ptrs.resize(height);
    for (std::size_t y = 0; y < height; ++y) row_ptrs[y] = pixels.data() + y * width * 3;
    png_read_image(png, row_ptrs.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    ImageTensor img(Shape{3, height, width});
    for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x)
            for (std::size_t c = 0; c < 3; ++c) img(c, y, x) = pixels[(y * width + x) * 3 + c] / 255.0;
    return img;
}

ImageTensor encode_latent(const ImageTensor& img) {
    ImageTensor out = img;
    for (auto& v : out.data()) v = 2.0 * v - 1.0;
    return out;
}

ImageTensor decode_latent(const ImageTensor& latent) {
    ImageTensor out = latent;
    for (auto& v : out.data()) v = std::clamp(0.5 * (v + 1.0), 0.0, 1.0);
    return out;
}

}  // namespace freqguide::io
