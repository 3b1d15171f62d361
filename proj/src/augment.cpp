#include "hmseg/augment.hpp"

#include <algorithm>
#include <cmath>

namespace hmseg {

namespace {

// Bilinear samples of the virtual `rh`×`rw` resize of `src`, window at (top, left).
Image bilinear_window(const Image& src, int rh, int rw, int top, int left, int h, int w) {
    Image out(h, w, src.channels);
    const double sy = static_cast<double>(src.height) / rh;
    const double sx = static_cast<double>(src.width) / rw;
    for (int r = 0; r < h; ++r) {
        const double fy = std::clamp((top + r + 0.5) * sy - 0.5, 0.0, static_cast<double>(src.height - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, src.height - 1);
        const double wy = fy - y0;
        for (int c = 0; c < w; ++c) {
            const double fx = std::clamp((left + c + 0.5) * sx - 0.5, 0.0, static_cast<double>(src.width - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, src.width - 1);
            const double wx = fx - x0;
            for (int ch = 0; ch < src.channels; ++ch) {
                const double v = (1 - wy) * ((1 - wx) * src.at(y0, x0, ch) + wx * src.at(y0, x1, ch)) +
                                 wy * ((1 - wx) * src.at(y1, x0, ch) + wx * src.at(y1, x1, ch));
                out.at(r, c, ch) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
            }
        }
    }
    return out;
}

Raster<std::uint8_t> nearest_window(const Raster<std::uint8_t>& src, int rh, int rw, int top, int left, int h,
                                    int w) {
    Raster<std::uint8_t> out(h, w, src.channels);
    for (int r = 0; r < h; ++r) {
        const int y = std::min(src.height - 1,
                               static_cast<int>(std::floor((top + r + 0.5) * src.height / static_cast<double>(rh))));
        for (int c = 0; c < w; ++c) {
            const int x = std::min(
                src.width - 1, static_cast<int>(std::floor((left + c + 0.5) * src.width / static_cast<double>(rw))));
            for (int ch = 0; ch < src.channels; ++ch) out.at(r, c, ch) = src.at(y, x, ch);
        }
    }
    return out;
}

struct Window {
    int resized_h, resized_w, top, left;
    bool needs_pad;
};

Window draw_window(int h, int w, int crop_px, ScaleRange range, std::mt19937_64& rng) {
    if (crop_px < 1) throw DomainError("crop size must be positive");
    if (!(range.low > 0.0) || range.high < range.low) throw ConfigError("invalid scale range");
    std::uniform_real_distribution<double> scale_dist(range.low, range.high);
    double s = range.low == range.high ? range.low : scale_dist(rng);
    const bool covers = h >= crop_px && w >= crop_px;
    if (covers) {
        s = std::max({s, static_cast<double>(crop_px) / h, static_cast<double>(crop_px) / w});
    }
    Window win{};
    win.resized_h = std::max(1, static_cast<int>(std::lround(h * s)));
    win.resized_w = std::max(1, static_cast<int>(std::lround(w * s)));
    if (covers) {
        win.resized_h = std::max(win.resized_h, crop_px);
        win.resized_w = std::max(win.resized_w, crop_px);
    }
    win.needs_pad = win.resized_h < crop_px || win.resized_w < crop_px;
    const int span_h = std::max(win.resized_h, crop_px) - crop_px;
    const int span_w = std::max(win.resized_w, crop_px) - crop_px;
    win.top = span_h > 0 ? std::uniform_int_distribution<int>(0, span_h)(rng) : 0;
    win.left = span_w > 0 ? std::uniform_int_distribution<int>(0, span_w)(rng) : 0;
    return win;
}

Image crop_image(const Image& src, const Window& win, int crop_px) {
    if (!win.needs_pad) {
        return bilinear_window(src, win.resized_h, win.resized_w, win.top, win.left, crop_px, crop_px);
    }
    const Image resized = resize_bilinear(src, win.resized_h, win.resized_w);
    const Image padded = mirror_pad_to(resized, std::max(crop_px, win.resized_h), std::max(crop_px, win.resized_w));
    return crop(padded, win.top, win.left, crop_px, crop_px);
}

}  // namespace

Image resize_bilinear(const Image& src, int out_h, int out_w) {
    if (out_h == src.height && out_w == src.width) return src;
    return bilinear_window(src, out_h, out_w, 0, 0, out_h, out_w);
}

Raster<std::uint8_t> resize_nearest(const Raster<std::uint8_t>& src, int out_h, int out_w) {
    if (out_h == src.height && out_w == src.width) return src;
    return nearest_window(src, out_h, out_w, 0, 0, out_h, out_w);
}

CropSample random_resized_crop(const Image& image, const LabelRaster& labels, int crop_px, ScaleRange range,
                               std::mt19937_64& rng) {
    if (labels.height() != image.height || labels.width() != image.width) {
        throw DimensionError("random_resized_crop: label raster shape does not match image");
    }
    const Window win = draw_window(image.height, image.width, crop_px, range, rng);
    CropSample out;
    out.image = crop_image(image, win, crop_px);
    out.labels.tile_id = labels.tile_id;
    out.labels.source = labels.source;
    if (!win.needs_pad) {
        out.labels.data = nearest_window(labels.data, win.resized_h, win.resized_w, win.top, win.left, crop_px, crop_px);
    } else {
        const auto resized = resize_nearest(labels.data, win.resized_h, win.resized_w);
        Raster<std::uint8_t> padded(std::max(crop_px, win.resized_h), std::max(crop_px, win.resized_w), 1,
                                    static_cast<std::uint8_t>(ClassId::background));
        for (int r = 0; r < resized.height; ++r) {
            for (int c = 0; c < resized.width; ++c) padded.at(r, c) = resized.at(r, c);
        }
        out.labels.data = crop(padded, win.top, win.left, crop_px, crop_px);
    }
    return out;
}

CropSample random_resized_crop(const Image& image, const LabelRaster& labels, int crop_px, ScaleRange range,
                               std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return random_resized_crop(image, labels, crop_px, range, rng);
}

std::pair<Image, Image> random_resized_crop_pair(const Image& a, const Image& b, int crop_px, ScaleRange range,
                                                 std::mt19937_64& rng) {
    if (!a.same_shape(b)) {
        throw DimensionError("random_resized_crop_pair: images differ in shape");
    }
    const Window win = draw_window(a.height, a.width, crop_px, range, rng);
    return {crop_image(a, win, crop_px), crop_image(b, win, crop_px)};
}

}  // namespace hmseg
