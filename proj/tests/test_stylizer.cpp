#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "helpers.hpp"
#include "hmseg/error.hpp"
#include "hmseg/stylizer.hpp"

using namespace hmseg;

namespace {

VectorFeature rect(ClassId cls, double x0, double y0, double x1, double y1) {
    return {Polygon{{{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}, {x0, y0}}, {}}, cls, std::nullopt, false};
}

VectorFeature road(double x0, double y0, double x1, double y1, int rank) {
    return {Polyline{{{x0, y0}, {x1, y1}}}, ClassId::roads, rank, false};
}

StyleSpec identity_spec() {
    StyleSpec s;
    s.palette = legend_palette();
    return s;
}

// World frame with 1 m pixels; pixel (col, row) spans x in [col, col+1], y in [-row-1, -row].
const Georef kUnit = Georef::north_up(0.0, 0.0, 1.0);

int count(const LabelRaster& l, ClassId c) {
    int n = 0;
    for (auto v : l.data.data) n += v == static_cast<std::uint8_t>(c);
    return n;
}

}  // namespace

TEST(Features, ReadWriteRoundTrip) {
    std::istringstream in(R"(# comment line
forest - POLYGON ((0 0, 10 0, 10 10, 0 10, 0 0), (2 2, 4 2, 4 4, 2 2))
roads 2 LINESTRING (0 0, 5 5, 9 1)   # trailing comment
buildings - POINT (3.5 4.25)
)");
    const auto fs = read_features(in);
    ASSERT_EQ(fs.size(), 3u);
    EXPECT_EQ(fs[0].cls, ClassId::forest);
    EXPECT_NEAR(fs[0].area_m2(), 100.0 - 2.0, 1e-12);
    EXPECT_EQ(fs[1].rank, 2);
    EXPECT_NEAR(fs[1].length_m(), std::hypot(5, 5) + std::hypot(4, 4), 1e-12);
    std::ostringstream out;
    write_features(out, fs);
    std::istringstream back(out.str());
    EXPECT_EQ(read_features(back), fs);
}

TEST(Features, MalformedLinesAreSchemaErrors) {
    for (const char* bad : {"marsh - POINT (0 0)", "roads x LINESTRING (0 0, 1 1)", "forest - POLYGON ((0 0, 1 1, 0 0))",
                            "roads - LINESTRING (0 0)", "forest - CIRCLE (0 0 1)"}) {
        std::istringstream in(bad);
        EXPECT_THROW(read_features(in), SchemaError) << bad;
    }
}

TEST(StyleSpec, PaletteMustBeCompleteAndInjective) {
    StyleSpec s = identity_spec();
    EXPECT_NO_THROW(s.validate());
    s.palette[2].reset();
    EXPECT_THROW(s.validate(), IncompletePaletteError);
    s = identity_spec();
    s.palette[3] = s.palette[1];
    EXPECT_THROW(s.validate(), ConfigError);
    s = identity_spec();
    s.stroke_widths_px[3] = 0.5;
    EXPECT_THROW(s.validate(), ConfigError);
}

TEST(StyleSpec, CollectionDefaultsIncreaseDetailTowardThePresent) {
    const auto c = StyleSpec::defaults_for(Collection::cassini);
    const auto e = StyleSpec::defaults_for(Collection::etatmajor);
    const auto s = StyleSpec::defaults_for(Collection::scan50);
    EXPECT_EQ(c.lod.building_mode, BuildingMode::agglomerated);
    EXPECT_EQ(c.lod.max_road_rank, 2);
    EXPECT_EQ(c.lod.min_polygon_area_m2, 10'000.0);
    EXPECT_EQ(e.lod.building_mode, BuildingMode::individual);
    EXPECT_EQ(e.lod.max_road_rank, 3);
    EXPECT_EQ(e.lod.min_polygon_area_m2, 2'500.0);
    EXPECT_EQ(s.lod.max_road_rank, 4);
    EXPECT_EQ(s.lod.min_polygon_area_m2, 1'000.0);
    EXPECT_EQ(to_hex(*c.palette[index_of(ClassId::forest)]), "#99EC53");
    EXPECT_EQ(to_hex(*c.palette[index_of(ClassId::hydrography)]), "#31C1EC");
    EXPECT_EQ(to_hex(*c.palette[index_of(ClassId::roads)]), "#E9894A");
    EXPECT_EQ(to_hex(*c.palette[index_of(ClassId::buildings)]), "#EA0029");
}

TEST(StyleSpec, FileRoundTrip) {
    const auto dir = hmseg::testing::scratch_dir("style");
    StyleSpec s = StyleSpec::defaults_for(Collection::etatmajor);
    s.palette[0] = parse_hex_color("#f0e0c0");
    s.stroke_widths_px[2] = 4.5;
    save_style_spec(s, dir / "s.json");
    const StyleSpec b = load_style_spec(dir / "s.json");
    EXPECT_EQ(b.palette, s.palette);
    EXPECT_EQ(b.stroke_widths_px, s.stroke_widths_px);
    EXPECT_EQ(b.lod.max_road_rank, s.lod.max_road_rank);
    EXPECT_EQ(b.collection, Collection::etatmajor);
    EXPECT_THROW(parse_hex_color("#12345"), SchemaError);
}

TEST(AdaptLod, IdentitySpecKeepsInput) {
    const std::vector<VectorFeature> in = {rect(ClassId::forest, 0, 0, 3, 3), road(0, 0, 9, 9, 7),
                                           rect(ClassId::buildings, 5, 5, 6, 6)};
    EXPECT_EQ(adapt_lod(in, identity_spec()), in);
}

TEST(AdaptLod, AreaThresholdAndRoadRank) {
    StyleSpec s = identity_spec();
    s.lod.min_polygon_area_m2 = 100.0;
    s.lod.max_road_rank = 2;
    const auto small = rect(ClassId::forest, 0, 0, 5, 10);      // 50 m²
    const auto large = rect(ClassId::forest, 0, 0, 50, 100);    // 5000 m²
    const auto out = adapt_lod({small, large, road(0, 0, 1, 1, 2), road(0, 0, 1, 1, 3)}, s);
    ASSERT_EQ(out.size(), 2u);
    EXPECT_EQ(out[0], large);
    EXPECT_EQ(out[1].rank, 2);
}

TEST(AdaptLod, NearbyBuildingsMergeIntoOneBlockMatchingADilationOracle) {
    StyleSpec s = identity_spec();
    s.lod.building_mode = BuildingMode::agglomerated;
    s.lod.agglomeration_radius_m = 20.0;
    const auto a = rect(ClassId::buildings, 0, 0, 10, 10);
    const auto b = rect(ClassId::buildings, 20, 0, 30, 10);  // 10 m gap
    const auto out = adapt_lod({a, b}, s);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_TRUE(out[0].urban_block);
    EXPECT_TRUE(std::get<Polygon>(out[0].geometry).holes.empty());

    // Oracle: pixels (0.25 m) whose center lies within 20 m of either footprint.
    const double res = 0.25;
    const Georef g = Georef::north_up(-25.0, 35.0, res);
    const int n = static_cast<int>(85.0 / res);
    const LabelRaster raster = rasterize(out, n, n, g, s);
    auto dist_to_rect = [](double x, double y, double x0, double y0, double x1, double y1) {
        const double dx = std::max({x0 - x, 0.0, x - x1});
        const double dy = std::max({y0 - y, 0.0, y - y1});
        return std::hypot(dx, dy);
    };
    int disagree = 0, inside = 0;
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
            const Point2 p = g.to_world(c + 0.5, r + 0.5);
            const double d = std::min(dist_to_rect(p.x, p.y, 0, 0, 10, 10), dist_to_rect(p.x, p.y, 20, 0, 30, 10));
            const bool expected = d <= 20.0;
            inside += expected;
            disagree += expected != (raster.at(r, c) == ClassId::buildings);
        }
    }
    // The buffer approximates arcs with 36-gons, so only a thin rim may differ.
    EXPECT_LT(static_cast<double>(disagree) / inside, 0.01);
}

TEST(AdaptLod, IsIdempotent) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 500.0);
    for (Collection c : {Collection::cassini, Collection::etatmajor, Collection::scan50}) {
        const StyleSpec s = StyleSpec::defaults_for(c);
        std::vector<VectorFeature> fs;
        for (int i = 0; i < 40; ++i) {
            const double x = u(rng), y = u(rng);
            fs.push_back(rect(ClassId::buildings, x, y, x + 8, y + 6));
            fs.push_back(rect(ClassId::forest, x, y, x + u(rng) / 2 + 1, y + u(rng) / 2 + 1));
            fs.push_back(road(x, y, u(rng), u(rng), 1 + i % 5));
        }
        const auto once = adapt_lod(fs, s);
        EXPECT_EQ(adapt_lod(once, s), once) << collection_name(c);
    }
}

TEST(Rasterize, EmptyFeatureListIsAllBackground) {
    const LabelRaster l = rasterize({}, 7, 9, kUnit, identity_spec());
    EXPECT_EQ(count(l, ClassId::background), 63);
}

TEST(Rasterize, AxisAlignedRectangleCoversExactlyItsPixels) {
    // Rows 2-5 and cols 2-5 span x in [2, 6] and y in [-6, -2].
    const LabelRaster l = rasterize({rect(ClassId::forest, 2, -6, 6, -2)}, 10, 10, kUnit, identity_spec());
    for (int r = 0; r < 10; ++r) {
        for (int c = 0; c < 10; ++c) {
            const bool in = r >= 2 && r <= 5 && c >= 2 && c <= 5;
            EXPECT_EQ(l.at(r, c), in ? ClassId::forest : ClassId::background) << r << "," << c;
        }
    }
}

TEST(Rasterize, RoadWinsOverForestAtCrossing) {
    const LabelRaster l =
        rasterize({road(0, -5.5, 10, -5.5, 1), rect(ClassId::forest, 0, -10, 10, 0)}, 10, 10, kUnit, identity_spec());
    EXPECT_EQ(l.at(5, 5), ClassId::roads);
    EXPECT_EQ(l.at(1, 5), ClassId::forest);
    EXPECT_EQ(count(l, ClassId::roads), 10);  // 1 px stroke along row 5
}

TEST(Rasterize, FeaturesOutsideTheTileAreClipped) {
    const LabelRaster l = rasterize({rect(ClassId::forest, -50, -50, -40, -40), rect(ClassId::forest, 8, -3, 30, 5)},
                                    4, 10, kUnit, identity_spec());
    EXPECT_EQ(count(l, ClassId::forest), 2 * 3);
}

TEST(Rasterize, AreaFidelityForLargePolygons) {
    const double res = kNominalResolution;
    const Georef g = Georef::north_up(0.0, 0.0, res);
    for (double radius_px : {15.0, 23.7, 40.0}) {
        Polygon disk;
        const Point2 c{50.0 * res, -50.0 * res};
        for (int k = 0; k <= 64; ++k) {
            const double a = 2.0 * std::numbers::pi * (k % 64) / 64.0;
            disk.outer.push_back({c.x + radius_px * res * std::cos(a), c.y + radius_px * res * std::sin(a)});
        }
        const VectorFeature f{disk, ClassId::forest, std::nullopt, false};
        const LabelRaster l = rasterize({f}, 100, 100, g, identity_spec());
        const double raster_area = count(l, ClassId::forest) * g.pixel_area();
        EXPECT_LE(std::abs(raster_area - f.area_m2()) / f.area_m2(), 0.05) << radius_px;
    }
}

TEST(Colorize, UniformBackgroundAndFiveDistinctColors) {
    const StyleSpec s = identity_spec();
    const Image bg = colorize(LabelRaster(3, 4), s);
    for (std::size_t i = 0; i < bg.data.size(); ++i) EXPECT_EQ(bg.data[i], 255);
    LabelRaster all(1, 5);
    for (int c = 0; c < 5; ++c) all.set(0, c, static_cast<ClassId>(c));
    const Image img = colorize(all, s);
    std::set<std::array<int, 3>> colors;
    for (int c = 0; c < 5; ++c) colors.insert({img.at(0, c, 0), img.at(0, c, 1), img.at(0, c, 2)});
    EXPECT_EQ(colors.size(), 5u);
}

TEST(Colorize, DeclassifyInvertsColorize) {
    std::mt19937_64 rng(12);
    const StyleSpec s = identity_spec();
    for (int i = 0; i < 50; ++i) {
        const LabelRaster l = hmseg::testing::random_labels(1 + rng() % 20, 1 + rng() % 20, rng);
        const Image img = colorize(l, s);
        EXPECT_EQ(declassify(img, s).data, l.data);
        EXPECT_EQ(colorize(declassify(img, s), s), img);
    }
}

TEST(Colorize, ErrorsOnMissingPaletteEntryAndUnknownColor) {
    StyleSpec s = identity_spec();
    Image img(1, 1, 3, 3);
    EXPECT_THROW(declassify(img, s), DomainError);
    s.palette[4].reset();
    EXPECT_THROW(colorize(LabelRaster(2, 2), s), IncompletePaletteError);
}
