#include "hmseg/stylizer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <boost/geometry.hpp>
#include <boost/geometry/geometries/point_xy.hpp>
#include <boost/geometry/geometries/polygon.hpp>
#include <nlohmann/json.hpp>

namespace hmseg {

namespace bg = boost::geometry;
using nlohmann::json;

namespace {

using BPoint = bg::model::d2::point_xy<double>;
using BPolygon = bg::model::polygon<BPoint>;
using BMulti = bg::model::multi_polygon<BPolygon>;
using BLine = bg::model::linestring<BPoint>;

constexpr int kPointsPerCircle = 36;

double ring_signed_area(const Ring& ring) {
    double a = 0.0;
    const std::size_t n = ring.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Point2& p = ring[i];
        const Point2& q = ring[(i + 1) % n];
        a += p.x * q.y - q.x * p.y;
    }
    return 0.5 * a;
}

std::size_t distinct_vertices(const Ring& ring) {
    std::set<std::pair<double, double>> s;
    for (const auto& p : ring) s.emplace(p.x, p.y);
    return s.size();
}

template <typename BRing>
Ring from_bring(const BRing& br) {
    Ring out;
    for (const auto& p : br) out.push_back({p.x(), p.y()});
    if (out.size() > 1 && out.front() == out.back()) out.pop_back();
    return out;
}

template <typename BRing>
void to_bring(const Ring& ring, BRing& out) {
    for (const auto& p : ring) out.push_back(BPoint(p.x, p.y));
    if (!ring.empty() && !(ring.front() == ring.back())) out.push_back(BPoint(ring.front().x, ring.front().y));
}

BPolygon to_bpolygon(const Polygon& poly) {
    BPolygon bp;
    to_bring(poly.outer, bp.outer());
    for (const auto& h : poly.holes) {
        bp.inners().emplace_back();
        to_bring(h, bp.inners().back());
    }
    bg::correct(bp);
    return bp;
}

Polygon from_bpolygon(const BPolygon& bp) {
    Polygon p;
    p.outer = from_bring(bp.outer());
    for (const auto& h : bp.inners()) p.holes.push_back(from_bring(h));
    return p;
}

BMulti buffer_geometry(const Geometry& g, double radius) {
    bg::strategy::buffer::distance_symmetric<double> dist(radius);
    bg::strategy::buffer::join_round join(kPointsPerCircle);
    bg::strategy::buffer::end_round end(kPointsPerCircle);
    bg::strategy::buffer::point_circle circle(kPointsPerCircle);
    bg::strategy::buffer::side_straight side;
    BMulti out;
    if (const auto* poly = std::get_if<Polygon>(&g)) {
        bg::buffer(to_bpolygon(*poly), out, dist, side, join, end, circle);
    } else if (const auto* line = std::get_if<Polyline>(&g)) {
        BLine bl;
        for (const auto& p : line->points) bl.push_back(BPoint(p.x, p.y));
        bg::buffer(bl, out, dist, side, join, end, circle);
    } else {
        const auto& p = std::get<Point2>(g);
        bg::buffer(BPoint(p.x, p.y), out, dist, side, join, end, circle);
    }
    return out;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string upper(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    return s;
}

Geometry parse_wkt(const std::string& wkt) {
    const std::string head = upper(wkt.substr(0, wkt.find('(')));
    const std::string kind = trim(head);
    if (kind == "POLYGON") {
        BPolygon bp;
        bg::read_wkt(wkt, bp);
        return from_bpolygon(bp);
    }
    if (kind == "LINESTRING") {
        BLine bl;
        bg::read_wkt(wkt, bl);
        Polyline pl;
        for (const auto& p : bl) pl.points.push_back({p.x(), p.y()});
        return pl;
    }
    if (kind == "POINT") {
        BPoint bp;
        bg::read_wkt(wkt, bp);
        return Point2{bp.x(), bp.y()};
    }
    throw SchemaError("unsupported geometry type '" + kind + "'");
}

void write_ring(std::ostream& out, const Ring& ring) {
    out << '(';
    for (std::size_t i = 0; i <= ring.size(); ++i) {
        const auto& p = ring[i % ring.size()];
        out << (i ? ", " : "") << p.x << ' ' << p.y;
    }
    out << ')';
}

// Even-odd scanline fill sampled at pixel centers; `ring_px` are rings in pixel space.
template <typename Fn>
void scan_fill(const std::vector<Ring>& rings_px, int height, int width, Fn&& paint) {
    double ymin = std::numeric_limits<double>::infinity();
    double ymax = -ymin;
    for (const auto& ring : rings_px) {
        for (const auto& p : ring) {
            ymin = std::min(ymin, p.y);
            ymax = std::max(ymax, p.y);
        }
    }
    const int r0 = std::max(0, static_cast<int>(std::floor(ymin - 0.5)));
    const int r1 = std::min(height - 1, static_cast<int>(std::ceil(ymax - 0.5)));
    std::vector<double> xs;
    for (int r = r0; r <= r1; ++r) {
        const double y = r + 0.5;
        xs.clear();
        for (const auto& ring : rings_px) {
            const std::size_t n = ring.size();
            for (std::size_t i = 0; i < n; ++i) {
                const Point2& a = ring[i];
                const Point2& b = ring[(i + 1) % n];
                if ((a.y <= y && y < b.y) || (b.y <= y && y < a.y)) {
                    xs.push_back(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
                }
            }
        }
        std::sort(xs.begin(), xs.end());
        for (std::size_t i = 0; i + 1 < xs.size(); i += 2) {
            // pixel c is inside when xs[i] <= c + 0.5 < xs[i + 1]
            const int c0 = std::max(0, static_cast<int>(std::ceil(xs[i] - 0.5)));
            const int c1 = std::min(width - 1, static_cast<int>(std::ceil(xs[i + 1] - 0.5)) - 1);
            for (int c = c0; c <= c1; ++c) paint(r, c);
        }
    }
}

double point_segment_distance(Point2 p, Point2 a, Point2 b) {
    const double dx = b.x - a.x;
    const double dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0.0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double qx = a.x + t * dx - p.x;
    const double qy = a.y + t * dy - p.y;
    return std::sqrt(qx * qx + qy * qy);
}

template <typename Fn>
void stroke_segment(Point2 a, Point2 b, double width_px, int height, int width, Fn&& paint) {
    const double half = 0.5 * width_px;
    const int r0 = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y) - half - 0.5)));
    const int r1 = std::min(height - 1, static_cast<int>(std::ceil(std::max(a.y, b.y) + half - 0.5)));
    const int c0 = std::max(0, static_cast<int>(std::floor(std::min(a.x, b.x) - half - 0.5)));
    const int c1 = std::min(width - 1, static_cast<int>(std::ceil(std::max(a.x, b.x) + half - 0.5)));
    for (int r = r0; r <= r1; ++r) {
        for (int c = c0; c <= c1; ++c) {
            if (point_segment_distance({c + 0.5, r + 0.5}, a, b) <= half) paint(r, c);
        }
    }
}

const std::array<std::string_view, 2> kBuildingModes = {"individual", "agglomerated"};

}  // namespace

double VectorFeature::area_m2() const {
    if (const auto* poly = std::get_if<Polygon>(&geometry)) {
        double a = std::abs(ring_signed_area(poly->outer));
        for (const auto& h : poly->holes) a -= std::abs(ring_signed_area(h));
        return a;
    }
    return 0.0;
}

double VectorFeature::length_m() const {
    if (const auto* line = std::get_if<Polyline>(&geometry)) {
        double len = 0.0;
        for (std::size_t i = 1; i < line->points.size(); ++i) {
            len += std::hypot(line->points[i].x - line->points[i - 1].x, line->points[i].y - line->points[i - 1].y);
        }
        return len;
    }
    return 0.0;
}

void VectorFeature::validate() const {
    if (const auto* poly = std::get_if<Polygon>(&geometry)) {
        if (distinct_vertices(poly->outer) < 3) {
            throw DomainError("polygon needs at least 3 distinct vertices");
        }
        for (const auto& h : poly->holes) {
            if (distinct_vertices(h) < 3) throw DomainError("polygon hole needs at least 3 distinct vertices");
        }
    } else if (const auto* line = std::get_if<Polyline>(&geometry)) {
        if (line->points.size() < 2) {
            throw DomainError("polyline needs at least 2 vertices");
        }
    }
}

std::vector<VectorFeature> read_features(std::istream& in) {
    std::vector<VectorFeature> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;

        std::istringstream ls(line);
        std::string cls_name, rank_str;
        ls >> cls_name >> rank_str;
        std::string wkt;
        std::getline(ls, wkt);
        wkt = trim(wkt);
        const std::string where = "line " + std::to_string(lineno);
        const auto cls = class_from_name(cls_name);
        if (!cls || *cls == ClassId::background) {
            throw SchemaError(where + ": unknown feature class '" + cls_name + "'");
        }
        VectorFeature f;
        f.cls = *cls;
        if (rank_str != "-") {
            try {
                std::size_t used = 0;
                f.rank = std::stoi(rank_str, &used);
                if (used != rank_str.size()) throw std::invalid_argument(rank_str);
            } catch (const std::exception&) {
                throw SchemaError(where + ": rank must be an integer or '-', got '" + rank_str + "'");
            }
        }
        try {
            f.geometry = parse_wkt(wkt);
            f.validate();
        } catch (const SchemaError& e) {
            throw SchemaError(where + ": " + e.what());
        } catch (const std::exception& e) {
            throw SchemaError(where + ": invalid geometry: " + e.what());
        }
        out.push_back(std::move(f));
    }
    return out;
}

std::vector<VectorFeature> read_features(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open feature file '" + path.string() + "'");
    return read_features(in);
}

void write_features(std::ostream& out, const std::vector<VectorFeature>& features) {
    const auto prec = out.precision(17);
    for (const auto& f : features) {
        out << class_name(f.cls) << ' ' << (f.rank ? std::to_string(*f.rank) : std::string("-")) << ' ';
        if (const auto* poly = std::get_if<Polygon>(&f.geometry)) {
            out << "POLYGON (";
            write_ring(out, poly->outer);
            for (const auto& h : poly->holes) {
                out << ", ";
                write_ring(out, h);
            }
            out << ')';
        } else if (const auto* line = std::get_if<Polyline>(&f.geometry)) {
            out << "LINESTRING (";
            for (std::size_t i = 0; i < line->points.size(); ++i) {
                out << (i ? ", " : "") << line->points[i].x << ' ' << line->points[i].y;
            }
            out << ')';
        } else {
            const auto& p = std::get<Point2>(f.geometry);
            out << "POINT (" << p.x << ' ' << p.y << ')';
        }
        out << '\n';
    }
    out.precision(prec);
}

Rgb parse_hex_color(const std::string& hex) {
    std::string h = hex;
    if (!h.empty() && h[0] == '#') h.erase(0, 1);
    if (h.size() != 6 || h.find_first_not_of("0123456789abcdefABCDEF") != std::string::npos) {
        throw SchemaError("invalid hex color '" + hex + "'");
    }
    const auto v = std::stoul(h, nullptr, 16);
    return {static_cast<std::uint8_t>((v >> 16) & 0xFF), static_cast<std::uint8_t>((v >> 8) & 0xFF),
            static_cast<std::uint8_t>(v & 0xFF)};
}

std::string to_hex(Rgb c) {
    std::ostringstream s;
    s << '#' << std::hex << std::uppercase << std::setfill('0') << std::setw(2) << int(c.r) << std::setw(2)
      << int(c.g) << std::setw(2) << int(c.b);
    return s.str();
}

std::array<std::optional<Rgb>, kNumClasses> legend_palette() {
    return {Rgb{0xFF, 0xFF, 0xFF}, parse_hex_color("#99EC53"), parse_hex_color("#31C1EC"),
            parse_hex_color("#E9894A"), parse_hex_color("#EA0029")};
}

void StyleSpec::validate() const {
    std::set<Rgb> seen;
    for (int i = 0; i < kNumClasses; ++i) {
        const auto& c = palette[static_cast<std::size_t>(i)];
        if (!c) {
            throw IncompletePaletteError("palette has no color for class '" +
                                         std::string(class_name(static_cast<ClassId>(i))) + "'");
        }
        if (!seen.insert(*c).second) {
            throw ConfigError("palette is not injective: " + to_hex(*c) + " used twice");
        }
    }
    for (double w : stroke_widths_px) {
        if (!(w >= 1.0)) throw ConfigError("stroke widths must be at least 1 pixel");
    }
    if (lod.min_polygon_area_m2 < 0.0 || lod.agglomeration_radius_m < 0.0) {
        throw ConfigError("level-of-detail thresholds must be nonnegative");
    }
}

StyleSpec StyleSpec::defaults_for(Collection c) {
    StyleSpec s;
    s.collection = c;
    s.palette = legend_palette();
    s.stroke_widths_px = {1.0, 1.0, 3.0, 2.0, 1.0};
    switch (c) {
        case Collection::cassini:
            s.lod = {10'000.0, 2, BuildingMode::agglomerated, 15.0};
            break;
        case Collection::etatmajor:
            s.lod = {2'500.0, 3, BuildingMode::individual, 0.0};
            break;
        case Collection::scan50:
            s.lod = {1'000.0, 4, BuildingMode::individual, 0.0};
            break;
        case Collection::modern:
            break;
    }
    return s;
}

StyleSpec load_style_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open style spec '" + path.string() + "'");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw SchemaError(path.string() + ": " + e.what());
    }
    try {
        const Collection c = collection_from_name(doc.at("collection").get<std::string>());
        StyleSpec s = StyleSpec::defaults_for(c);
        if (doc.contains("lod")) {
            const json& lod = doc["lod"];
            s.lod.min_polygon_area_m2 = lod.value("min_polygon_area_m2", s.lod.min_polygon_area_m2);
            s.lod.max_road_rank = lod.value("max_road_rank", s.lod.max_road_rank);
            s.lod.agglomeration_radius_m = lod.value("agglomeration_radius_m", s.lod.agglomeration_radius_m);
            if (lod.contains("building_mode")) {
                const auto mode = lod["building_mode"].get<std::string>();
                if (mode == kBuildingModes[0]) {
                    s.lod.building_mode = BuildingMode::individual;
                } else if (mode == kBuildingModes[1]) {
                    s.lod.building_mode = BuildingMode::agglomerated;
                } else {
                    throw SchemaError("lod.building_mode: unknown mode '" + mode + "'");
                }
            }
        }
        if (doc.contains("palette")) {
            s.palette = {};
            for (const auto& [name, hex] : doc["palette"].items()) {
                const auto cls = class_from_name(name);
                if (!cls) throw SchemaError("palette." + name + ": unknown class");
                s.palette[static_cast<std::size_t>(index_of(*cls))] = parse_hex_color(hex.get<std::string>());
            }
        }
        if (doc.contains("stroke_widths_px")) {
            for (const auto& [name, w] : doc["stroke_widths_px"].items()) {
                const auto cls = class_from_name(name);
                if (!cls) throw SchemaError("stroke_widths_px." + name + ": unknown class");
                s.stroke_widths_px[static_cast<std::size_t>(index_of(*cls))] = w.get<double>();
            }
        }
        s.validate();
        return s;
    } catch (const json::exception& e) {
        throw SchemaError(path.string() + ": " + e.what());
    }
}

void save_style_spec(const StyleSpec& spec, const std::filesystem::path& path) {
    json doc;
    doc["collection"] = std::string(collection_name(spec.collection));
    doc["lod"] = {{"min_polygon_area_m2", spec.lod.min_polygon_area_m2},
                  {"max_road_rank", spec.lod.max_road_rank},
                  {"building_mode", std::string(kBuildingModes[static_cast<std::size_t>(spec.lod.building_mode)])},
                  {"agglomeration_radius_m", spec.lod.agglomeration_radius_m}};
    json palette = json::object();
    json strokes = json::object();
    for (ClassId c : kAllClasses) {
        const auto i = static_cast<std::size_t>(index_of(c));
        if (spec.palette[i]) palette[std::string(class_name(c))] = to_hex(*spec.palette[i]);
        strokes[std::string(class_name(c))] = spec.stroke_widths_px[i];
    }
    doc["palette"] = palette;
    doc["stroke_widths_px"] = strokes;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot write style spec '" + path.string() + "'");
    out << doc.dump(2) << '\n';
}

std::vector<VectorFeature> adapt_lod(const std::vector<VectorFeature>& features, const StyleSpec& spec) {
    const bool agglomerate = spec.lod.building_mode == BuildingMode::agglomerated;
    std::vector<VectorFeature> kept;
    BMulti blocks;
    bool any_building = false;
    for (const auto& f : features) {
        if (f.cls == ClassId::roads && f.rank && *f.rank > spec.lod.max_road_rank) {
            continue;
        }
        if (agglomerate && f.cls == ClassId::buildings && !f.urban_block) {
            BMulti buffered = buffer_geometry(f.geometry, spec.lod.agglomeration_radius_m);
            BMulti merged;
            bg::union_(blocks, buffered, merged);
            blocks = std::move(merged);
            any_building = true;
            continue;
        }
        kept.push_back(f);
    }
    if (any_building) {
        for (const auto& bp : blocks) {
            VectorFeature block;
            block.geometry = from_bpolygon(bp);
            block.cls = ClassId::buildings;
            block.urban_block = true;
            kept.push_back(std::move(block));
        }
    }
    std::vector<VectorFeature> out;
    out.reserve(kept.size());
    for (auto& f : kept) {
        if (f.is_polygon() && f.area_m2() < spec.lod.min_polygon_area_m2) {
            continue;
        }
        out.push_back(std::move(f));
    }
    return out;
}

LabelRaster rasterize(const std::vector<VectorFeature>& features, const Tile& tile, const StyleSpec& spec) {
    LabelRaster out = rasterize(features, tile.height(), tile.width(), tile.georef, spec);
    out.tile_id = tile.tile_id;
    return out;
}

LabelRaster rasterize(const std::vector<VectorFeature>& features, int height, int width, const Georef& georef,
                      const StyleSpec& spec) {
    LabelRaster out(height, width, ClassId::background);
    out.source = LabelRaster::Source::modern_vector;
    auto to_px = [&](const Ring& ring) {
        Ring px;
        px.reserve(ring.size());
        for (const auto& p : ring) px.push_back(georef.to_pixel(p));
        return px;
    };
    for (ClassId cls : kPaintOrder) {
        const double stroke = spec.stroke_widths_px[static_cast<std::size_t>(index_of(cls))];
        auto paint = [&](int r, int c) { out.set(r, c, cls); };
        for (const auto& f : features) {
            if (f.cls != cls) continue;
            if (const auto* poly = std::get_if<Polygon>(&f.geometry)) {
                std::vector<Ring> rings{to_px(poly->outer)};
                for (const auto& h : poly->holes) rings.push_back(to_px(h));
                scan_fill(rings, height, width, paint);
            } else if (const auto* line = std::get_if<Polyline>(&f.geometry)) {
                const Ring pts = to_px(line->points);
                for (std::size_t i = 1; i < pts.size(); ++i) {
                    stroke_segment(pts[i - 1], pts[i], stroke, height, width, paint);
                }
            } else {
                const Point2 p = georef.to_pixel(std::get<Point2>(f.geometry));
                stroke_segment(p, p, stroke, height, width, paint);
            }
        }
    }
    return out;
}

Image colorize(const LabelRaster& labels, const StyleSpec& spec) {
    std::array<Rgb, kNumClasses> lut{};
    for (int i = 0; i < kNumClasses; ++i) {
        const auto& c = spec.palette[static_cast<std::size_t>(i)];
        if (!c) {
            throw IncompletePaletteError("palette has no color for class '" +
                                         std::string(class_name(static_cast<ClassId>(i))) + "'");
        }
        lut[static_cast<std::size_t>(i)] = *c;
    }
    Image out(labels.height(), labels.width(), 3);
    for (std::size_t i = 0; i < labels.data.data.size(); ++i) {
        const std::uint8_t v = labels.data.data[i];
        if (!is_valid_class(v)) throw DomainError("invalid class value " + std::to_string(v));
        const Rgb c = lut[v];
        out.data[3 * i] = c.r;
        out.data[3 * i + 1] = c.g;
        out.data[3 * i + 2] = c.b;
    }
    return out;
}

LabelRaster declassify(const Image& image, const StyleSpec& spec) {
    spec.validate();
    if (image.channels != 3) throw DimensionError("declassify expects an RGB image");
    LabelRaster out(image.height, image.width);
    for (std::size_t i = 0; i < image.pixel_count(); ++i) {
        const Rgb px{image.data[3 * i], image.data[3 * i + 1], image.data[3 * i + 2]};
        int found = -1;
        for (int k = 0; k < kNumClasses; ++k) {
            if (*spec.palette[static_cast<std::size_t>(k)] == px) {
                found = k;
                break;
            }
        }
        if (found < 0) throw DomainError("color " + to_hex(px) + " is not in the palette");
        out.data.data[i] = static_cast<std::uint8_t>(found);
    }
    return out;
}

}  // namespace hmseg
