#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace terragen {

// Interleaved 8-bit image, channels 1 (gray) or 3 (RGB).
struct ImageU8 {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<uint8_t> data;  // row-major, interleaved

    static ImageU8 create(int width, int height, int channels, uint8_t fill = 0);
    uint8_t& at(int y, int x, int c) { return data[(static_cast<size_t>(y) * width + x) * channels + c]; }
    uint8_t at(int y, int x, int c) const { return data[(static_cast<size_t>(y) * width + x) * channels + c]; }
    bool operator==(const ImageU8& other) const = default;
};

void write_png(const std::string& path, const ImageU8& img);
ImageU8 read_png(const std::string& path);

}  // namespace terragen
