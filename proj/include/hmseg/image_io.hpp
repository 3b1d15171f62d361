#pragma once

#include <filesystem>

#include "hmseg/georef.hpp"
#include "hmseg/raster.hpp"

namespace hmseg::io {

/// 8-bit RGB PNG. Gray or palette inputs are expanded to RGB on read.
Image read_rgb(const std::filesystem::path& path);
void write_rgb(const std::filesystem::path& path, const Image& img);

/// Single-channel 8-bit PNG; pixel value = ClassId ordinal.
LabelRaster read_labels(const std::filesystem::path& path);
void write_labels(const std::filesystem::path& path, const LabelRaster& labels);

/// ESRI world-file sidecar (six lines: A D B E C F), converted to and from
/// pixel-corner geotransform order.
Georef read_world_file(const std::filesystem::path& path);
void write_world_file(const std::filesystem::path& path, const Georef& g);

}  // namespace hmseg::io
