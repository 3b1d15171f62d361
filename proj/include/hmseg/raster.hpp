#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hmseg/error.hpp"

namespace hmseg {

/// Land-cover taxonomy shared by historical and modern labels.
enum class ClassId : std::uint8_t {
    background = 0,
    forest = 1,
    hydrography = 2,
    roads = 3,
    buildings = 4,
};

inline constexpr int kNumClasses = 5;

inline constexpr std::array<ClassId, kNumClasses> kAllClasses = {
    ClassId::background, ClassId::forest, ClassId::hydrography, ClassId::roads, ClassId::buildings};

constexpr int index_of(ClassId c) { return static_cast<int>(c); }

constexpr bool is_valid_class(std::uint8_t v) { return v < kNumClasses; }

std::string_view class_name(ClassId c);
std::optional<ClassId> class_from_name(std::string_view name);

/// Dense row-major H×W×C raster.
template <typename T>
struct Raster {
    int height = 0;
    int width = 0;
    int channels = 1;
    std::vector<T> data;

    Raster() = default;
    Raster(int h, int w, int c = 1, T fill = T{})
        : height(h), width(w), channels(c),
          data(static_cast<std::size_t>(h) * static_cast<std::size_t>(w) * static_cast<std::size_t>(c), fill) {}

    [[nodiscard]] bool empty() const { return data.empty(); }
    [[nodiscard]] std::size_t pixel_count() const {
        return static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
    }
    [[nodiscard]] std::size_t offset(int r, int c, int ch = 0) const {
        return (static_cast<std::size_t>(r) * static_cast<std::size_t>(width) + static_cast<std::size_t>(c)) *
                   static_cast<std::size_t>(channels) +
               static_cast<std::size_t>(ch);
    }
    T& at(int r, int c, int ch = 0) { return data[offset(r, c, ch)]; }
    const T& at(int r, int c, int ch = 0) const { return data[offset(r, c, ch)]; }

    [[nodiscard]] bool same_shape(const Raster& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }
    friend bool operator==(const Raster&, const Raster&) = default;
};

using Image = Raster<std::uint8_t>;  // 3 channels, RGB
using Mask = Raster<std::uint8_t>;   // 1 channel, 0/1

/// Single-channel class map; values are ClassId ordinals.
struct LabelRaster {
    enum class Source { historical_manual, modern_vector };

    std::string tile_id;
    Raster<std::uint8_t> data;
    Source source = Source::modern_vector;

    LabelRaster() = default;
    LabelRaster(int h, int w, ClassId fill = ClassId::background)
        : data(h, w, 1, static_cast<std::uint8_t>(fill)) {}

    [[nodiscard]] int height() const { return data.height; }
    [[nodiscard]] int width() const { return data.width; }
    ClassId at(int r, int c) const { return static_cast<ClassId>(data.at(r, c)); }
    void set(int r, int c, ClassId v) { data.at(r, c) = static_cast<std::uint8_t>(v); }

    /// Throws DomainError if any pixel is outside the taxonomy.
    void validate() const;
};

/// Reflect-101 index folding ("mirror" padding); valid for any n >= 1 and any i.
constexpr int mirror_index(int i, int n) {
    if (n == 1) {
        return 0;
    }
    const int period = 2 * (n - 1);
    int m = i % period;
    if (m < 0) {
        m += period;
    }
    return m < n ? m : period - m;
}

/// Mirror-pads (bottom/right) to at least `h`×`w`.
template <typename T>
Raster<T> mirror_pad_to(const Raster<T>& src, int h, int w) {
    Raster<T> out(h, w, src.channels);
    for (int r = 0; r < h; ++r) {
        const int sr = mirror_index(r, src.height);
        for (int c = 0; c < w; ++c) {
            const int sc = mirror_index(c, src.width);
            for (int ch = 0; ch < src.channels; ++ch) {
                out.at(r, c, ch) = src.at(sr, sc, ch);
            }
        }
    }
    return out;
}

template <typename T>
Raster<T> crop(const Raster<T>& src, int top, int left, int h, int w) {
    Raster<T> out(h, w, src.channels);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            for (int ch = 0; ch < src.channels; ++ch) {
                out.at(r, c, ch) = src.at(top + r, left + c, ch);
            }
        }
    }
    return out;
}

}  // namespace hmseg
