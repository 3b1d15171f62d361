#include "hmseg/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hmseg/image_io.hpp"

namespace hmseg {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 4> kCollectionNames = {"cassini", "etatmajor", "scan50", "modern"};

template <typename T>
T require(const json& obj, const std::string& key, const std::string& where) {
    if (!obj.contains(key)) {
        throw SchemaError(where + "." + key + ": missing required field");
    }
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw SchemaError(where + "." + key + ": " + e.what());
    }
}

std::map<Collection, std::filesystem::path> parse_paths(const json& obj, const std::string& where) {
    std::map<Collection, std::filesystem::path> out;
    if (!obj.is_object()) {
        throw SchemaError(where + ": expected an object of collection -> path");
    }
    for (const auto& [key, value] : obj.items()) {
        Collection c;
        try {
            c = collection_from_name(key);
        } catch (const SchemaError& e) {
            throw SchemaError(where + "." + key + ": " + e.what());
        }
        if (!value.is_string()) {
            throw SchemaError(where + "." + key + ": expected a path string");
        }
        out.emplace(c, value.get<std::string>());
    }
    return out;
}

}  // namespace

std::string_view collection_name(Collection c) { return kCollectionNames[static_cast<std::size_t>(c)]; }

Collection collection_from_name(std::string_view name) {
    for (std::size_t i = 0; i < kCollectionNames.size(); ++i) {
        if (kCollectionNames[i] == name) {
            return static_cast<Collection>(i);
        }
    }
    throw SchemaError("unknown collection '" + std::string(name) + "'");
}

void Tile::validate() const {
    if (image.height < 1 || image.width < 1 || image.channels != 3) {
        throw DimensionError("tile '" + tile_id + "' must be a non-empty H×W×3 raster");
    }
    if (!georef.invertible()) {
        throw DomainError("tile '" + tile_id + "' has a non-invertible georeference");
    }
    if (!(resolution_m_per_px > 0.0)) {
        throw DomainError("tile '" + tile_id + "' has non-positive resolution");
    }
}

const ManifestEntry& Manifest::entry(std::string_view tile_id) const {
    const auto it = std::find_if(entries.begin(), entries.end(),
                                 [&](const ManifestEntry& e) { return e.tile_id == tile_id; });
    if (it == entries.end()) {
        throw PairingError("tile '" + std::string(tile_id) + "' not in manifest");
    }
    return *it;
}

std::filesystem::path Manifest::resolve(const std::filesystem::path& p) const {
    return p.is_absolute() ? p : root / p;
}

void Manifest::validate() const {
    std::set<std::string> seen;
    for (const auto& e : entries) {
        if (e.tile_id.empty()) {
            throw SchemaError("manifest entry with empty tile_id");
        }
        if (!seen.insert(e.tile_id).second) {
            throw UniquenessError("duplicate tile_id '" + e.tile_id + "'");
        }
    }
    for (const auto& id : annotated_ids) {
        if (!seen.contains(id)) {
            throw SchemaError("annotated tile '" + id + "' has no manifest entry");
        }
    }
}

Manifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open manifest '" + path.string() + "'");
    }
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw SchemaError(path.string() + ": " + e.what());
    }
    if (!doc.contains("tiles") || !doc["tiles"].is_array()) {
        throw SchemaError(path.string() + ": field 'tiles' must be an array");
    }

    Manifest m;
    m.root = path.parent_path();
    for (std::size_t i = 0; i < doc["tiles"].size(); ++i) {
        const json& t = doc["tiles"][i];
        const std::string where = "tiles[" + std::to_string(i) + "]";
        ManifestEntry e;
        e.tile_id = require<std::string>(t, "tile_id", where);
        e.images = parse_paths(t.contains("images") ? t["images"] : json::object(), where + ".images");
        if (t.contains("labels")) {
            e.labels = parse_paths(t["labels"], where + ".labels");
        }
        if (t.contains("georef")) {
            e.georef = std::filesystem::path(require<std::string>(t, "georef", where));
        }
        e.centroid = {require<double>(t, "centroid_x_m", where), require<double>(t, "centroid_y_m", where)};
        e.annotated = t.value("annotated", false);
        if (e.images.empty()) {
            throw SchemaError(where + ".images: at least one collection image is required");
        }
        if (e.annotated) {
            m.annotated_ids.insert(e.tile_id);
        }
        m.entries.push_back(std::move(e));
    }
    m.validate();

    std::vector<std::string> missing;
    for (const auto& e : m.entries) {
        auto check = [&](const std::filesystem::path& p) {
            if (!std::filesystem::exists(m.resolve(p))) {
                missing.push_back(m.resolve(p).string());
            }
        };
        for (const auto& [c, p] : e.images) check(p);
        for (const auto& [c, p] : e.labels) check(p);
        if (e.georef) check(*e.georef);
    }
    if (!missing.empty()) {
        std::ostringstream msg;
        msg << "manifest references " << missing.size() << " missing file(s):";
        for (const auto& p : missing) {
            msg << "\n  " << p;
        }
        throw DanglingReferenceError(msg.str());
    }
    return m;
}

void save_manifest(const Manifest& manifest, const std::filesystem::path& path) {
    manifest.validate();
    json tiles = json::array();
    for (const auto& e : manifest.entries) {
        json t;
        t["tile_id"] = e.tile_id;
        json images = json::object();
        for (const auto& [c, p] : e.images) images[std::string(collection_name(c))] = p.generic_string();
        t["images"] = images;
        if (!e.labels.empty()) {
            json labels = json::object();
            for (const auto& [c, p] : e.labels) labels[std::string(collection_name(c))] = p.generic_string();
            t["labels"] = labels;
        }
        if (e.georef) {
            t["georef"] = e.georef->generic_string();
        }
        t["centroid_x_m"] = e.centroid.x;
        t["centroid_y_m"] = e.centroid.y;
        t["annotated"] = manifest.annotated_ids.contains(e.tile_id);
        tiles.push_back(std::move(t));
    }
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write manifest '" + path.string() + "'");
    }
    out << json{{"version", 1}, {"tiles", tiles}}.dump(2) << '\n';
}

Tile load_tile(const Manifest& manifest, std::string_view tile_id, Collection collection) {
    const auto& e = manifest.entry(tile_id);
    const auto it = e.images.find(collection);
    if (it == e.images.end()) {
        throw PairingError("tile '" + e.tile_id + "' has no " + std::string(collection_name(collection)) + " image");
    }
    Tile t;
    t.tile_id = e.tile_id;
    t.collection = collection;
    t.image = io::read_rgb(manifest.resolve(it->second));
    if (e.georef) {
        t.georef = io::read_world_file(manifest.resolve(*e.georef));
        t.resolution_m_per_px = std::sqrt(t.georef.pixel_area());
    } else {
        const double res = kNominalResolution;
        t.georef = Georef::north_up(e.centroid.x - 0.5 * t.width() * res, e.centroid.y + 0.5 * t.height() * res, res);
        t.resolution_m_per_px = res;
    }
    t.validate();
    return t;
}

LabelRaster load_label(const Manifest& manifest, std::string_view tile_id, Collection collection) {
    const auto& e = manifest.entry(tile_id);
    const auto it = e.labels.find(collection);
    if (it == e.labels.end()) {
        throw PairingError("tile '" + e.tile_id + "' has no " + std::string(collection_name(collection)) +
                           " label raster");
    }
    LabelRaster l = io::read_labels(manifest.resolve(it->second));
    l.tile_id = e.tile_id;
    l.source = collection == Collection::modern ? LabelRaster::Source::modern_vector
                                                : LabelRaster::Source::historical_manual;
    return l;
}

std::vector<std::string> FoldSplit::fold_members(int fold) const {
    std::vector<std::string> out;
    for (const auto& [id, f] : assignment) {
        if (f == fold) {
            out.push_back(id);
        }
    }
    return out;
}

FoldSplit make_folds(const Manifest& manifest, int k, std::uint64_t /*seed*/) {
    if (k < 2) {
        throw InfeasibleSplitError("k must be at least 2, got " + std::to_string(k));
    }
    std::vector<const ManifestEntry*> tiles;
    for (const auto& e : manifest.entries) {
        if (manifest.annotated_ids.contains(e.tile_id)) {
            tiles.push_back(&e);
        }
    }
    if (static_cast<int>(tiles.size()) < k) {
        throw InfeasibleSplitError("cannot build " + std::to_string(k) + " folds from " +
                                   std::to_string(tiles.size()) + " annotated tiles");
    }
    std::sort(tiles.begin(), tiles.end(), [](const ManifestEntry* a, const ManifestEntry* b) {
        if (a->centroid.x != b->centroid.x) return a->centroid.x < b->centroid.x;
        if (a->centroid.y != b->centroid.y) return a->centroid.y < b->centroid.y;
        return a->tile_id < b->tile_id;
    });

    FoldSplit split;
    split.k = k;
    const std::size_t n = tiles.size();
    const std::size_t base = n / static_cast<std::size_t>(k);
    const std::size_t extra = n % static_cast<std::size_t>(k);
    std::size_t pos = 0;
    for (int f = 0; f < k; ++f) {
        const std::size_t size = base + (static_cast<std::size_t>(f) < extra ? 1 : 0);
        for (std::size_t i = 0; i < size; ++i) {
            split.assignment[tiles[pos++]->tile_id] = f;
        }
    }
    return split;
}

SupervisedSplit split_supervised(const FoldSplit& folds, int test_fold, std::uint64_t seed) {
    if (test_fold < 0 || test_fold >= folds.k) {
        throw InfeasibleSplitError("test fold " + std::to_string(test_fold) + " outside [0, " +
                                   std::to_string(folds.k) + ")");
    }
    SupervisedSplit s;
    std::vector<std::string> rest;
    for (const auto& [id, f] : folds.assignment) {  // std::map: sorted by id
        (f == test_fold ? s.test : rest).push_back(id);
    }
    std::mt19937_64 rng(seed);
    std::shuffle(rest.begin(), rest.end(), rng);
    const std::size_t n_val = rest.size() / 5;
    s.val.assign(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(n_val));
    s.train.assign(rest.begin() + static_cast<std::ptrdiff_t>(n_val), rest.end());
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.val.begin(), s.val.end());
    return s;
}

std::int64_t weak_val_count(std::int64_t n) {
    // round-half-down(n * val / total) == ceil((2 n val - total) / (2 total))
    const std::int64_t total = kWeakTrainShare + kWeakValShare;
    const std::int64_t num = 2 * n * kWeakValShare - total;
    const std::int64_t den = 2 * total;
    if (num <= 0) {
        return 0;
    }
    return (num + den - 1) / den;
}

WeakSplit split_weak(const Manifest& manifest, std::uint64_t seed) {
    if (manifest.entries.empty()) {
        throw EmptySplitError("manifest has no tiles");
    }
    std::vector<std::string> pool;
    for (const auto& e : manifest.entries) {
        if (!manifest.annotated_ids.contains(e.tile_id)) {
            pool.push_back(e.tile_id);
        }
    }
    if (pool.empty()) {
        throw EmptySplitError("every tile is annotated; nothing left for weak supervision");
    }
    std::sort(pool.begin(), pool.end());
    std::mt19937_64 rng(seed);
    std::shuffle(pool.begin(), pool.end(), rng);
    const auto n_val = static_cast<std::ptrdiff_t>(weak_val_count(static_cast<std::int64_t>(pool.size())));
    WeakSplit s;
    s.val.assign(pool.begin(), pool.begin() + n_val);
    s.train.assign(pool.begin() + n_val, pool.end());
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.val.begin(), s.val.end());
    return s;
}

std::vector<Patch> extract_patches(const Image& image, const LabelRaster* labels, int patch_px) {
    if (patch_px < 1) {
        throw DomainError("patch size must be positive");
    }
    if (labels && (labels->height() != image.height || labels->width() != image.width)) {
        throw DimensionError("label raster shape does not match image");
    }
    const int ph = round_up_to_multiple(image.height, patch_px);
    const int pw = round_up_to_multiple(image.width, patch_px);
    const Image padded = (ph == image.height && pw == image.width) ? image : mirror_pad_to(image, ph, pw);

    std::vector<Patch> out;
    for (int r = 0; r < ph; r += patch_px) {
        for (int c = 0; c < pw; c += patch_px) {
            Patch p;
            p.image = crop(padded, r, c, patch_px, patch_px);
            p.offset = {r, c};
            if (labels) {
                LabelRaster lp(patch_px, patch_px, ClassId::background);
                lp.tile_id = labels->tile_id;
                lp.source = labels->source;
                for (int y = 0; y < patch_px && r + y < image.height; ++y) {
                    for (int x = 0; x < patch_px && c + x < image.width; ++x) {
                        lp.data.at(y, x) = labels->data.at(r + y, c + x);
                    }
                }
                p.labels = std::move(lp);
            }
            out.push_back(std::move(p));
        }
    }
    return out;
}

std::vector<Patch> extract_patches(const Tile& tile, const std::optional<LabelRaster>& labels, int patch_px) {
    return extract_patches(tile.image, labels ? &*labels : nullptr, patch_px);
}

}  // namespace hmseg
