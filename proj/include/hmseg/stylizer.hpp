#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "hmseg/corpus.hpp"
#include "hmseg/georef.hpp"
#include "hmseg/raster.hpp"

namespace hmseg {

using Ring = std::vector<Point2>;

struct Polygon {
    Ring outer;
    std::vector<Ring> holes;
    friend bool operator==(const Polygon&, const Polygon&) = default;
};

struct Polyline {
    std::vector<Point2> points;
    friend bool operator==(const Polyline&, const Polyline&) = default;
};

using Geometry = std::variant<Polygon, Polyline, Point2>;

/// A vector map feature in projected meters.
struct VectorFeature {
    Geometry geometry;
    ClassId cls = ClassId::background;
    std::optional<int> rank;  // 1 = most important
    bool urban_block = false; // produced by building agglomeration

    [[nodiscard]] bool is_polygon() const { return std::holds_alternative<Polygon>(geometry); }
    [[nodiscard]] double area_m2() const;
    [[nodiscard]] double length_m() const;

    /// Throws DomainError for degenerate geometry.
    void validate() const;

    friend bool operator==(const VectorFeature&, const VectorFeature&) = default;
};

/// Parses `<class> <rank|-> <WKT>` lines; `#` starts a comment.
std::vector<VectorFeature> read_features(std::istream& in);
std::vector<VectorFeature> read_features(const std::filesystem::path& path);
void write_features(std::ostream& out, const std::vector<VectorFeature>& features);

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
    friend bool operator==(const Rgb&, const Rgb&) = default;
    friend auto operator<=>(const Rgb&, const Rgb&) = default;
};

Rgb parse_hex_color(const std::string& hex);
std::string to_hex(Rgb c);

enum class BuildingMode { individual, agglomerated };

struct LevelOfDetail {
    double min_polygon_area_m2 = 0.0;
    int max_road_rank = std::numeric_limits<int>::max();
    BuildingMode building_mode = BuildingMode::individual;
    double agglomeration_radius_m = 0.0;
};

struct StyleSpec {
    Collection collection = Collection::modern;
    LevelOfDetail lod;
    std::array<std::optional<Rgb>, kNumClasses> palette{};
    std::array<double, kNumClasses> stroke_widths_px{1.0, 1.0, 1.0, 1.0, 1.0};

    /// Palette must be complete and injective; stroke widths >= 1.
    void validate() const;

    /// Per-collection configuration defaults with the legend palette.
    static StyleSpec defaults_for(Collection c);
};

/// Legend colors used for label visualisation.
std::array<std::optional<Rgb>, kNumClasses> legend_palette();

StyleSpec load_style_spec(const std::filesystem::path& path);
void save_style_spec(const StyleSpec& spec, const std::filesystem::path& path);

/// Level-of-detail adaptation: road-rank filter, building agglomeration into
/// urban blocks (union of buffered footprints), then minimum polygon area.
/// Idempotent for a fixed spec; order of surviving features is preserved and
/// new urban blocks are appended.
std::vector<VectorFeature> adapt_lod(const std::vector<VectorFeature>& features, const StyleSpec& spec);

/// Order in which classes are painted; later entries win on overlap.
inline constexpr std::array<ClassId, 4> kPaintOrder = {ClassId::forest, ClassId::hydrography, ClassId::roads,
                                                       ClassId::buildings};

/// Hard-classified scan conversion onto the tile grid (pixel-center sampling).
LabelRaster rasterize(const std::vector<VectorFeature>& features, const Tile& tile, const StyleSpec& spec);
LabelRaster rasterize(const std::vector<VectorFeature>& features, int height, int width, const Georef& georef,
                      const StyleSpec& spec);

Image colorize(const LabelRaster& labels, const StyleSpec& spec);

/// Inverse palette lookup; colors outside the palette raise DomainError.
LabelRaster declassify(const Image& image, const StyleSpec& spec);

}  // namespace hmseg
