#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "hmseg/corpus.hpp"
#include "hmseg/stylizer.hpp"

namespace hmseg::toy {

/// Expected number of features per tile, by class.
struct FeatureDensities {
    double forest = 3.0;
    double hydrography = 1.0;
    double roads = 1.5;
    double buildings = 2.5;  // building clusters
};

struct ToySpec {
    int n_tiles = 200;
    int size_px = 128;
    std::uint64_t seed = 0;
    double style_gap = 0.5;    // 0: identical rendering, 1: full historical styling
    double change_rate = 0.0;  // probability that a feature exists in one era only
    FeatureDensities densities;
    double annotated_fraction = 1.0;
    Collection historical = Collection::cassini;
    double resolution_m_per_px = kNominalResolution;

    void validate() const;
    [[nodiscard]] nlohmann::json to_json() const;
    static ToySpec from_json(const nlohmann::json& j);
};

/// Which era(s) a generated feature exists in.
enum class Presence : std::uint8_t { both, historical_only, modern_only };

struct ToyTile {
    std::string tile_id;
    Tile historical;
    Tile modern;
    LabelRaster historical_labels;
    LabelRaster modern_labels;
    std::vector<VectorFeature> features;
    std::vector<Presence> presence;
};

struct ToyCorpus {
    ToySpec spec;
    std::vector<ToyTile> tiles;
    Manifest manifest;  // paths filled in by write_corpus
};

/// Flat palette of the modern era (the legend colors).
StyleSpec modern_style(Collection c = Collection::modern);
/// Flat palette matching the historical base colors ("match color scheme"),
/// used to render synthetic modern maps for the translation target domain.
StyleSpec synthetic_style(Collection c);

/// Deterministic given spec.seed; each tile uses its own derived seed.
ToyCorpus generate_corpus(const ToySpec& spec);

/// Writes PNG rasters, world files and `manifest.json` under `dir`; returns
/// the manifest path.
std::filesystem::path write_corpus(ToyCorpus& corpus, const std::filesystem::path& dir);

struct EraStats {
    std::array<std::int64_t, kNumClasses> pixels{};
    std::array<std::int64_t, kNumClasses> features{};
    friend bool operator==(const EraStats&, const EraStats&) = default;
};

struct CorpusStats {
    EraStats historical;
    EraStats modern;
};

CorpusStats corpus_stats(const ToyCorpus& corpus);

}  // namespace hmseg::toy
