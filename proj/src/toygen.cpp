#include "hmseg/toygen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "hmseg/error.hpp"
#include "hmseg/image_io.hpp"

namespace hmseg::toy {

namespace {

constexpr double kTau = 2.0 * std::numbers::pi;

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::string tile_name(int i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "t%05d", i);
    return buf;
}

// Historical base colors; also the palette of the synthetic modern maps.
constexpr std::array<Rgb, kNumClasses> kSepia = {Rgb{236, 224, 194}, Rgb{176, 190, 136}, Rgb{132, 170, 188},
                                                 Rgb{122, 86, 58}, Rgb{178, 74, 62}};

struct Sampler {
    std::mt19937_64 rng;
    double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); }
    int integer(int a, int b) { return std::uniform_int_distribution<int>(a, b)(rng); }
    double normal(double sd) { return std::normal_distribution<double>(0.0, sd)(rng); }
    int poisson(double mean) { return mean <= 0.0 ? 0 : std::poisson_distribution<int>(mean)(rng); }
};

Point2 border_point(Sampler& s, double size, int side) {
    const double t = s.uniform(0.0, size);
    switch (side) {
        case 0: return {t, 0.0};
        case 1: return {size, t};
        case 2: return {t, size};
        default: return {0.0, t};
    }
}

// Geometry below is built in pixel coordinates (x = col, y = row) and mapped
// to world meters at the end.
Polygon forest_blob(Sampler& s, double size) {
    const Point2 c{s.uniform(0.0, size), s.uniform(0.0, size)};
    const double radius = s.uniform(0.08, 0.22) * size;
    constexpr int kVertices = 10;
    Polygon p;
    for (int k = 0; k < kVertices; ++k) {
        const double a = kTau * (k + s.uniform(-0.3, 0.3)) / kVertices;
        const double r = radius * s.uniform(0.7, 1.3);
        p.outer.push_back({c.x + r * std::cos(a), c.y + r * std::sin(a)});
    }
    p.outer.push_back(p.outer.front());
    return p;
}

Polyline river(Sampler& s, double size) {
    const int side = s.integer(0, 3);
    Point2 p = border_point(s, size, side);
    double heading = kTau / 4.0 * (side + 1) + s.uniform(-0.5, 0.5);  // roughly inward
    const double step = size / 12.0;
    Polyline line;
    line.points.push_back(p);
    for (int i = 0; i < 24; ++i) {
        heading += s.normal(0.35);
        p = {p.x + step * std::cos(heading), p.y + step * std::sin(heading)};
        line.points.push_back(p);
    }
    return line;
}

Polyline road(Sampler& s, double size) {
    const int side = s.integer(0, 1);
    const Point2 a = border_point(s, size, side == 0 ? 0 : 3);
    const Point2 b = border_point(s, size, side == 0 ? 2 : 1);
    const double len = std::hypot(b.x - a.x, b.y - a.y);
    const Point2 normal{-(b.y - a.y) / len, (b.x - a.x) / len};
    Polyline line;
    constexpr int kSegments = 5;
    for (int i = 0; i <= kSegments; ++i) {
        const double t = static_cast<double>(i) / kSegments;
        const double off = (i == 0 || i == kSegments) ? 0.0 : s.uniform(-size / 20.0, size / 20.0);
        line.points.push_back({a.x + t * (b.x - a.x) + off * normal.x, a.y + t * (b.y - a.y) + off * normal.y});
    }
    return line;
}

std::vector<Polygon> building_cluster(Sampler& s, double size) {
    const Point2 c{s.uniform(0.1, 0.9) * size, s.uniform(0.1, 0.9) * size};
    const int n = s.integer(3, 7);
    std::vector<Polygon> out;
    for (int i = 0; i < n; ++i) {
        const double a = s.uniform(0.0, kTau);
        const double r = s.uniform(0.0, 14.0);
        const double x = c.x + r * std::cos(a);
        const double y = c.y + r * std::sin(a);
        const double hw = s.uniform(2.0, 4.0);
        const double hh = s.uniform(2.0, 4.0);
        out.push_back(Polygon{{{x - hw, y - hh}, {x + hw, y - hh}, {x + hw, y + hh}, {x - hw, y + hh}, {x - hw, y - hh}},
                              {}});
    }
    return out;
}

Point2 to_world(const Georef& g, Point2 px) { return g.to_world(px.x, px.y); }

Geometry to_world(const Georef& g, Geometry geom) {
    if (auto* p = std::get_if<Polygon>(&geom)) {
        for (auto& v : p->outer) v = to_world(g, v);
    } else if (auto* l = std::get_if<Polyline>(&geom)) {
        for (auto& v : l->points) v = to_world(g, v);
    } else {
        auto& pt = std::get<Point2>(geom);
        pt = to_world(g, pt);
    }
    return geom;
}

std::uint8_t clamp_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

// Fully styled historical rendering (style_gap = 1): sepia fills, per-sheet
// tint, multiplicative band noise, class hatching, relief strokes over the
// background and grain. Consumes the same random numbers whatever the gap.
Raster<double> historical_render(const LabelRaster& labels, Sampler& s) {
    const int h = labels.data.height;
    const int w = labels.data.width;
    std::array<double, 3> tint{};
    for (auto& t : tint) t = s.uniform(0.86, 1.06);

    struct Wave {
        double fx, fy, phase, amp;
    };
    std::array<Wave, 3> waves{};
    for (auto& wv : waves) {
        const double a = s.uniform(0.0, kTau);
        const double period = s.uniform(20.0, 90.0);
        wv = {std::cos(a) / period, std::sin(a) / period, s.uniform(0.0, kTau), s.uniform(0.04, 0.10)};
    }

    // Relief strokes: hachure-like dark curves that only show on background.
    Mask relief(h, w, 1);
    const int n_relief = s.poisson(3.0);
    for (int k = 0; k < n_relief; ++k) {
        double x = s.uniform(0.0, w);
        double y = s.uniform(0.0, h);
        double heading = s.uniform(0.0, kTau);
        const int steps = s.integer(10, 40);
        for (int i = 0; i < steps; ++i) {
            const int r = static_cast<int>(y);
            const int c = static_cast<int>(x);
            if (r >= 0 && r < h && c >= 0 && c < w) relief.at(r, c) = 1;
            heading += s.normal(0.25);
            x += std::cos(heading);
            y += std::sin(heading);
        }
    }

    Raster<double> out(h, w, 3);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const ClassId cls = labels.at(r, c);
            const Rgb base = kSepia[index_of(cls)];
            double band = 1.0;
            for (const auto& wv : waves) band += wv.amp * std::sin(kTau * (wv.fx * c + wv.fy * r) + wv.phase);
            double hatch = 1.0;
            switch (cls) {
                case ClassId::forest:
                    if ((r + c) % 4 == 0) hatch = 0.62;
                    break;
                case ClassId::hydrography:
                    if ((r + static_cast<int>(std::lround(1.5 * std::sin(c / 3.0)))) % 3 == 0) hatch = 0.78;
                    break;
                case ClassId::buildings:
                    if (((r - c) % 3 + 3) % 3 == 0) hatch = 0.72;
                    break;
                case ClassId::background:
                    if (relief.at(r, c)) hatch = 0.70;
                    break;
                default:
                    break;
            }
            const std::array<double, 3> rgb{double(base.r), double(base.g), double(base.b)};
            for (int ch = 0; ch < 3; ++ch) {
                out.at(r, c, ch) = rgb[ch] * tint[ch] * band * hatch + s.normal(6.0);
            }
        }
    }
    return out;
}

}  // namespace

void ToySpec::validate() const {
    if (n_tiles < 1) throw ConfigError("toy spec: n_tiles must be >= 1");
    if (size_px < 1) throw ConfigError("toy spec: size_px must be >= 1");
    auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!in_unit(style_gap)) throw ConfigError("toy spec: style_gap must lie in [0, 1]");
    if (!in_unit(change_rate)) throw ConfigError("toy spec: change_rate must lie in [0, 1]");
    if (!in_unit(annotated_fraction)) throw ConfigError("toy spec: annotated_fraction must lie in [0, 1]");
    for (double d : {densities.forest, densities.hydrography, densities.roads, densities.buildings}) {
        if (!(d >= 0.0)) throw ConfigError("toy spec: feature densities must be >= 0");
    }
    if (!(resolution_m_per_px > 0.0)) throw ConfigError("toy spec: resolution must be > 0");
    if (historical == Collection::modern) throw ConfigError("toy spec: historical collection cannot be 'modern'");
}

nlohmann::json ToySpec::to_json() const {
    return {{"n_tiles", n_tiles},
            {"size_px", size_px},
            {"seed", seed},
            {"style_gap", style_gap},
            {"change_rate", change_rate},
            {"densities",
             {{"forest", densities.forest},
              {"hydrography", densities.hydrography},
              {"roads", densities.roads},
              {"buildings", densities.buildings}}},
            {"annotated_fraction", annotated_fraction},
            {"historical", std::string(collection_name(historical))},
            {"resolution_m_per_px", resolution_m_per_px}};
}

ToySpec ToySpec::from_json(const nlohmann::json& j) {
    ToySpec s;
    try {
        s.n_tiles = j.value("n_tiles", s.n_tiles);
        s.size_px = j.value("size_px", s.size_px);
        s.seed = j.value("seed", s.seed);
        s.style_gap = j.value("style_gap", s.style_gap);
        s.change_rate = j.value("change_rate", s.change_rate);
        if (j.contains("densities")) {
            const auto& d = j.at("densities");
            s.densities.forest = d.value("forest", s.densities.forest);
            s.densities.hydrography = d.value("hydrography", s.densities.hydrography);
            s.densities.roads = d.value("roads", s.densities.roads);
            s.densities.buildings = d.value("buildings", s.densities.buildings);
        }
        s.annotated_fraction = j.value("annotated_fraction", s.annotated_fraction);
        if (j.contains("historical")) s.historical = collection_from_name(j.at("historical").get<std::string>());
        s.resolution_m_per_px = j.value("resolution_m_per_px", s.resolution_m_per_px);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("toy spec: ") + e.what());
    }
    s.validate();
    return s;
}

StyleSpec modern_style(Collection c) {
    StyleSpec s;
    s.collection = c;
    s.palette = legend_palette();
    s.stroke_widths_px = {1.0, 1.0, 3.0, 2.0, 1.0};
    return s;
}

StyleSpec synthetic_style(Collection c) {
    StyleSpec s = modern_style(c);
    for (int i = 0; i < kNumClasses; ++i) s.palette[static_cast<std::size_t>(i)] = kSepia[static_cast<std::size_t>(i)];
    return s;
}

ToyCorpus generate_corpus(const ToySpec& spec) {
    spec.validate();
    ToyCorpus corpus;
    corpus.spec = spec;
    const StyleSpec modern = modern_style();
    const double size = spec.size_px;
    const double res = spec.resolution_m_per_px;
    const int grid_cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(spec.n_tiles))));

    std::vector<int> order(static_cast<std::size_t>(spec.n_tiles));
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 pick(splitmix64(spec.seed));
    std::shuffle(order.begin(), order.end(), pick);
    const auto n_annotated = static_cast<std::size_t>(std::lround(spec.annotated_fraction * spec.n_tiles));
    std::set<int> annotated(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_annotated));

    corpus.tiles.resize(static_cast<std::size_t>(spec.n_tiles));
    for (int i = 0; i < spec.n_tiles; ++i) {
        Sampler s{std::mt19937_64(splitmix64(spec.seed ^ splitmix64(static_cast<std::uint64_t>(i) + 1)))};
        ToyTile& t = corpus.tiles[static_cast<std::size_t>(i)];
        t.tile_id = tile_name(i);
        const double ox = 600'000.0 + (i % grid_cols) * size * res;
        const double oy = 6'800'000.0 - static_cast<double>(i / grid_cols) * size * res;
        const Georef g = Georef::north_up(ox, oy, res);

        std::vector<VectorFeature> px_features;
        for (int k = s.poisson(spec.densities.forest); k > 0; --k) {
            px_features.push_back({forest_blob(s, size), ClassId::forest, std::nullopt, false});
        }
        for (int k = s.poisson(spec.densities.hydrography); k > 0; --k) {
            px_features.push_back({river(s, size), ClassId::hydrography, std::nullopt, false});
        }
        for (int k = s.poisson(spec.densities.roads); k > 0; --k) {
            Polyline line = road(s, size);
            px_features.push_back({std::move(line), ClassId::roads, s.integer(1, 4), false});
        }
        for (int k = s.poisson(spec.densities.buildings); k > 0; --k) {
            for (auto& b : building_cluster(s, size)) {
                px_features.push_back({std::move(b), ClassId::buildings, std::nullopt, false});
            }
        }

        std::vector<VectorFeature> hist_features;
        std::vector<VectorFeature> modern_features;
        for (auto& f : px_features) {
            f.geometry = to_world(g, std::move(f.geometry));
            Presence p = Presence::both;
            if (s.uniform(0.0, 1.0) < spec.change_rate) {
                p = s.uniform(0.0, 1.0) < 0.5 ? Presence::historical_only : Presence::modern_only;
            }
            if (p != Presence::modern_only) hist_features.push_back(f);
            if (p != Presence::historical_only) modern_features.push_back(f);
            t.features.push_back(f);
            t.presence.push_back(p);
        }

        t.historical_labels = rasterize(hist_features, spec.size_px, spec.size_px, g, modern);
        t.modern_labels = rasterize(modern_features, spec.size_px, spec.size_px, g, modern);
        t.historical_labels.tile_id = t.modern_labels.tile_id = t.tile_id;
        t.historical_labels.source = LabelRaster::Source::historical_manual;
        t.modern_labels.source = LabelRaster::Source::modern_vector;

        const Image modern_img = colorize(t.modern_labels, modern);
        const Raster<double> styled = historical_render(t.historical_labels, s);
        Image hist_img(spec.size_px, spec.size_px, 3);
        for (std::size_t k = 0; k < hist_img.data.size(); ++k) {
            const double m = modern_img.data[k];
            hist_img.data[k] = clamp_byte(m + spec.style_gap * (styled.data[k] - m));
        }

        t.modern = Tile{t.tile_id, Collection::modern, modern_img, g, res};
        t.historical = Tile{t.tile_id, spec.historical, std::move(hist_img), g, res};

        ManifestEntry e;
        e.tile_id = t.tile_id;
        e.centroid = g.to_world(size / 2.0, size / 2.0);
        e.annotated = annotated.contains(i);
        corpus.manifest.entries.push_back(std::move(e));
        if (annotated.contains(i)) corpus.manifest.annotated_ids.insert(t.tile_id);
    }
    return corpus;
}

std::filesystem::path write_corpus(ToyCorpus& corpus, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    const std::string hist = std::string(collection_name(corpus.spec.historical));
    for (const char* sub : {"images", "labels", "georef"}) fs::create_directories(dir / sub);
    fs::create_directories(dir / "images" / hist);
    fs::create_directories(dir / "images" / "modern");
    fs::create_directories(dir / "labels" / hist);
    fs::create_directories(dir / "labels" / "modern");

    corpus.manifest.root = dir;
    for (std::size_t i = 0; i < corpus.tiles.size(); ++i) {
        const ToyTile& t = corpus.tiles[i];
        ManifestEntry& e = corpus.manifest.entries[i];
        const fs::path hist_img = fs::path("images") / hist / (t.tile_id + ".png");
        const fs::path mod_img = fs::path("images") / "modern" / (t.tile_id + ".png");
        const fs::path mod_lab = fs::path("labels") / "modern" / (t.tile_id + ".png");
        const fs::path wld = fs::path("georef") / (t.tile_id + ".wld");
        io::write_rgb(dir / hist_img, t.historical.image);
        io::write_rgb(dir / mod_img, t.modern.image);
        io::write_labels(dir / mod_lab, t.modern_labels);
        io::write_world_file(dir / wld, t.historical.georef);
        e.images = {{corpus.spec.historical, hist_img}, {Collection::modern, mod_img}};
        e.labels = {{Collection::modern, mod_lab}};
        if (e.annotated) {
            const fs::path hist_lab = fs::path("labels") / hist / (t.tile_id + ".png");
            io::write_labels(dir / hist_lab, t.historical_labels);
            e.labels[corpus.spec.historical] = hist_lab;
        }
        e.georef = wld;
    }
    const fs::path manifest_path = dir / "manifest.json";
    save_manifest(corpus.manifest, manifest_path);
    nlohmann::json spec_json = corpus.spec.to_json();
    std::ofstream(dir / "toyspec.json") << spec_json.dump(2) << '\n';
    return manifest_path;
}

CorpusStats corpus_stats(const ToyCorpus& corpus) {
    CorpusStats st;
    for (const auto& t : corpus.tiles) {
        for (auto v : t.historical_labels.data.data) ++st.historical.pixels[v];
        for (auto v : t.modern_labels.data.data) ++st.modern.pixels[v];
        for (std::size_t k = 0; k < t.features.size(); ++k) {
            const std::size_t cls = index_of(t.features[k].cls);
            if (t.presence[k] != Presence::modern_only) ++st.historical.features[cls];
            if (t.presence[k] != Presence::historical_only) ++st.modern.features[cls];
        }
    }
    return st;
}

}  // namespace hmseg::toy
