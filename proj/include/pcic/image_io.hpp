#pragma once

#include <filesystem>

#include "pcic/tensor.hpp"

namespace pcic {

/// Reads an 8-bit PNG into a {3,H,W} tensor with values in [0,1]
/// (gray/palette/alpha inputs are expanded to RGB).
Tensor read_png_rgb(const std::filesystem::path& path);

/// Writes a {3,H,W} tensor in [0,1] as an 8-bit RGB PNG. Values are clamped
/// and rounded to the nearest level.
void write_png_rgb(const std::filesystem::path& path, const Tensor& image);

}  // namespace pcic
