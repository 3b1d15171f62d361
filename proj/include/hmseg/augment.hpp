#pragma once

#include <cstdint>
#include <random>
#include <utility>

#include "hmseg/raster.hpp"

namespace hmseg {

struct ScaleRange {
    double low = 0.7;
    double high = 1.4;
};

/// Half-pixel-centred bilinear resampling (each channel independently).
Image resize_bilinear(const Image& src, int out_h, int out_w);

/// Nearest-neighbour resampling; never produces values absent from `src`.
Raster<std::uint8_t> resize_nearest(const Raster<std::uint8_t>& src, int out_h, int out_w);

struct CropSample {
    Image image;
    LabelRaster labels;
};

/// Random resized crop: draws a scale in `range`, resizes (bilinear image,
/// nearest labels) and cuts a `crop_px` square at a uniform position.
///
/// When the source covers the crop, the scale is raised to the smallest value
/// whose resized raster still covers the crop, so no padding is needed and the
/// label patch only contains source classes. Sources smaller than the crop are
/// mirror-padded (image) or background-padded (labels) after resizing.
CropSample random_resized_crop(const Image& image, const LabelRaster& labels, int crop_px, ScaleRange range,
                               std::mt19937_64& rng);
CropSample random_resized_crop(const Image& image, const LabelRaster& labels, int crop_px, ScaleRange range,
                               std::uint64_t seed);

/// Same crop window applied to two aligned images (used for paired translation
/// samples).
std::pair<Image, Image> random_resized_crop_pair(const Image& a, const Image& b, int crop_px, ScaleRange range,
                                                 std::mt19937_64& rng);

}  // namespace hmseg
