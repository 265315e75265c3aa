#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace cytoclip {

// 8-bit interleaved raster.
struct Image {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t channels = 1;
    std::vector<std::uint8_t> pixels;

    Image() = default;
    Image(std::size_t w, std::size_t h, std::size_t c = 1, std::uint8_t fill = 0)
        : width(w), height(h), channels(c), pixels(w * h * c, fill) {}

    bool empty() const noexcept { return width == 0 || height == 0; }
    std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c = 0) { return pixels[(y * width + x) * channels + c]; }
    std::uint8_t at(std::size_t x, std::size_t y, std::size_t c = 0) const {
        return pixels[(y * width + x) * channels + c];
    }
    friend bool operator==(const Image&, const Image&) = default;
};

// Copies the window [x0, x0+w) x [y0, y0+h); pixels outside the source are zero.
Image crop(const Image& src, long x0, long y0, std::size_t w, std::size_t h);

// Catmull-Rom (a = -0.5) bicubic resampling with clamped edges.
Image resize_bicubic(const Image& src, std::size_t new_width, std::size_t new_height);

// Binary PGM (P5) for 1 channel, PPM (P6) for 3 channels, 8-bit.
void write_pnm(const std::filesystem::path& path, const Image& image);
Image read_pnm(const std::filesystem::path& path);

// 16-bit PGM (big-endian samples), used for label maps.
void write_pgm16(const std::filesystem::path& path, std::size_t width, std::size_t height,
                 const std::vector<std::uint16_t>& samples);
std::vector<std::uint16_t> read_pgm16(const std::filesystem::path& path, std::size_t& width, std::size_t& height);

} // namespace cytoclip
