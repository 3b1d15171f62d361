#include "hmseg/raster.hpp"

namespace hmseg {

namespace {
constexpr std::array<std::string_view, kNumClasses> kClassNames = {
    "background", "forest", "hydrography", "roads", "buildings"};
}

std::string_view class_name(ClassId c) { return kClassNames[static_cast<std::size_t>(index_of(c))]; }

std::optional<ClassId> class_from_name(std::string_view name) {
    for (int i = 0; i < kNumClasses; ++i) {
        if (kClassNames[static_cast<std::size_t>(i)] == name) {
            return static_cast<ClassId>(i);
        }
    }
    return std::nullopt;
}

void LabelRaster::validate() const {
    if (data.channels != 1) {
        throw DimensionError("label raster must have a single channel");
    }
    for (std::size_t i = 0; i < data.data.size(); ++i) {
        if (!is_valid_class(data.data[i])) {
            const auto w = static_cast<std::size_t>(data.width);
            throw DomainError("invalid class value " + std::to_string(data.data[i]) + " at (" +
                              std::to_string(i / w) + ", " + std::to_string(i % w) + ")" +
                              (tile_id.empty() ? std::string{} : " in tile '" + tile_id + "'"));
        }
    }
}

}  // namespace hmseg
