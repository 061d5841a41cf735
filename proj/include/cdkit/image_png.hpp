#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cdkit {

/// 8-bit image, row-major, interleaved channels (1 = gray, 3 = RGB).
struct ImageU8 {
    std::int64_t h = 0;
    std::int64_t w = 0;
    std::int64_t c = 0;

    std::vector<std::uint8_t> px;

    std::uint8_t& at(std::int64_t y, std::int64_t x, std::int64_t ch) {
        return px[static_cast<std::size_t>((y * w + x) * c + ch)];
    }
    std::uint8_t at(std::int64_t y, std::int64_t x, std::int64_t ch) const {
        return px[static_cast<std::size_t>((y * w + x) * c + ch)];
    }

    static ImageU8 make(std::int64_t h, std::int64_t w, std::int64_t c) {
        return ImageU8{h, w, c, std::vector<std::uint8_t>(static_cast<std::size_t>(h * w * c), 0)};
    }
};

/// Decodes an 8-bit PNG; grayscale stays 1-channel, everything else lands as
/// RGB (alpha stripped, palettes expanded).
ImageU8 read_png(const std::string& path);

/// Encodes gray (c=1) or RGB (c=3) with fixed settings, so identical pixels
/// produce identical bytes.
void write_png(const std::string& path, const ImageU8& img);

/// Reads only the IHDR: (height, width) without decoding pixel data.
std::pair<std::int64_t, std::int64_t> png_size(const std::string& path);

}  // namespace cdkit
