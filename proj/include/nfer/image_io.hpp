#pragma once
// Lossless image files: PNG (8/16-bit gray, gray+alpha, RGB, RGBA, palette),
// binary/ASCII PGM and uncompressed BMP (8-bit palette, 24/32-bit).
// Alpha is dropped. Samples are scaled to [0, 1].

#include <cstddef>
#include <filesystem>

#include "nfer/image.hpp"

namespace nfer {

/// Dispatches on the file extension (case-insensitive). Throws IoError when the
/// file cannot be read and ParseError when its content is malformed.
Image read_image(const std::filesystem::path& path);

Image read_png(const std::filesystem::path& path);
Image read_pgm(const std::filesystem::path& path);
Image read_bmp(const std::filesystem::path& path);

/// 8-bit PNG, gray for one channel and RGB for three.
void write_png(const std::filesystem::path& path, const Image& image);
/// 8-bit binary PGM; the image must have one channel.
void write_pgm(const std::filesystem::path& path, const Image& image);

/// True for extensions read_image understands.
bool is_image_extension(const std::filesystem::path& path);

/// Gray <-> RGB conversion. RGB -> gray uses Rec. 601 luma weights.
Image to_channels(const Image& image, std::size_t channels);

}  // namespace nfer
