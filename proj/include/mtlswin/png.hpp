#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mtlswin {

/// Minimal 8-bit RGB PNG writer (zlib-compressed, filter 0 scanlines).
void write_png_rgb(const std::string& path, int64_t w, int64_t h, const std::vector<uint8_t>& rgb);

/// Grayscale image blended with a hot-colormapped heatmap, both in [0,1].
std::vector<uint8_t> heat_overlay_rgb(const std::vector<float>& gray, const std::vector<float>& heat);

}  // namespace mtlswin
