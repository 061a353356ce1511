#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "haifit/core.hpp"

namespace haifit {

/// Decodes any PNG to 8-bit RGB; transparency is composited over white.
Image8 decode_png(std::string_view bytes);

/// Encodes 8-bit RGB with fixed settings (no timestamps, default zlib
/// level), so equal pixels always give equal bytes.
std::string encode_png(const Image8& image);

Image8 read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image8& image);

/// Box-filter resampling: each output pixel averages the source area it covers.
Image8 resample_area(const Image8& image, int width, int height);

/// Scales to fit inside size x size preserving aspect ratio, centered on white.
Image8 letterbox(const Image8& image, int size);

}  // namespace haifit
