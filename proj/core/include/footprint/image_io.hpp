#pragma once

#include <filesystem>

#include "footprint/raster.hpp"

namespace footprint {

// RGB raster. Grayscale files are expanded to three channels, alpha is
// dropped, 16-bit data is passed through unscaled. Throws kIo.
ImageRaster read_image(const std::filesystem::path& path);

// First channel of the file, binarized with binarize_mask.
MaskRaster read_mask(const std::filesystem::path& path);

// 8-bit PNG writers. A binary mask is written as 0/255.
void write_mask_png(const std::filesystem::path& path, const MaskRaster& mask);
void write_image_png(const std::filesystem::path& path, const ImageRaster& image);

// Horizontal concatenation of equally tall RGB rasters; masks are expanded to
// gray. Used for prediction-vs-ground-truth composites.
ImageRaster side_by_side(const ImageRaster& left, const ImageRaster& right);
ImageRaster mask_to_rgb(const MaskRaster& mask);

}  // namespace footprint
