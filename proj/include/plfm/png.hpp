#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace plfm::io {

/// Minimal PNG encoder (8-bit RGB, zlib-compressed, no ancillary chunks, so
/// output bytes depend only on the pixel payload).
void write_png_rgb8(const std::filesystem::path& path, const std::vector<uint8_t>& rgb,
                    int width, int height);

}  // namespace plfm::io
