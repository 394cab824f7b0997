#pragma once

#include <filesystem>

#include "tplreg/image.hpp"

namespace tplreg {

/// How colour inputs collapse to one channel. Fundus imagery carries most
/// vessel contrast in green, so that is the default.
enum class ChannelPolicy { Green, Luminance };

/// Reads PNG (8/16-bit, any colour type) or binary/ASCII PGM. 8-bit values
/// scale by 1/255 and 16-bit by 1/65535.
RasterImage read_image(const std::filesystem::path& path,
                       ChannelPolicy policy = ChannelPolicy::Green);

/// Writes an 8-bit grayscale PNG, value = round(255 * intensity).
void write_png(const std::filesystem::path& path, const RasterImage& image);

/// Writes an 8-bit binary PGM with the same quantisation as write_png.
void write_pgm(const std::filesystem::path& path, const RasterImage& image);

}  // namespace tplreg
