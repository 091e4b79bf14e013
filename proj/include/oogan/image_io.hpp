#pragma once

#include <string>

#include "oogan/tensor.hpp"

namespace oogan::image_io {

/// Writes an 8-bit PNG. Accepts [ch,H,W] or [1,ch,H,W] with values in [0,1];
/// ch must be 1 (grayscale) or 3 (RGB). Deterministic byte-for-byte given the
/// same input.
void write_png(const std::string& path, const Tensor& img);

/// Tiles [N,ch,H,W] into [ch, rows*H + (rows-1)*sep, cols*W + (cols-1)*sep],
/// row-major tile order, separator lines filled with sep_value.
Tensor tile_grid(const Tensor& imgs, int rows, int cols, int sep = 2, double sep_value = 1.0);

}  // namespace oogan::image_io
