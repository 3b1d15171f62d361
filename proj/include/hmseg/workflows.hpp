#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "hmseg/config.hpp"
#include "hmseg/corpus.hpp"
#include "hmseg/metrics.hpp"
#include "hmseg/stylizer.hpp"
#include "hmseg/toygen.hpp"

namespace hmseg::wf {

/// Everything a workflow reads, held in memory and keyed by tile id.
struct Dataset {
    Manifest manifest;
    Collection collection = Collection::cassini;
    std::map<std::string, Tile> historical;            // every tile
    std::map<std::string, LabelRaster> truth;          // annotated tiles only
    std::map<std::string, LabelRaster> modern_labels;  // weak labels, every tile
    StyleSpec synthetic_style;                         // palette of synthetic modern maps
};

/// Reads rasters referenced by a manifest. Modern labels come from
/// `features_dir/<tile_id>.wkt` (LOD-adapted and rasterized with `style`) when
/// that directory is given, otherwise from the manifest's modern label rasters.
Dataset load_dataset(const Manifest& manifest, Collection collection, const StyleSpec& style,
                     const std::filesystem::path& features_dir = {});

/// Wraps an in-memory toy corpus; truth is restricted to annotated tiles.
Dataset dataset_from_toy(const toy::ToyCorpus& corpus);

/// Colorized modern labels in the synthetic palette.
Image synthetic_map(const Dataset& ds, const std::string& tile_id);

using Logger = std::function<void(const std::string&)>;

struct FoldResult {
    int fold = 0;
    SupervisedSplit split;
    MetricReport report;
    seg::TrainState state;
};

struct CvResult {
    std::vector<FoldResult> folds;
    MetricReport aggregate;  // micro-aggregated over held-out folds
};

/// k-fold cross-validation with cfg.folds folds and seed cfg.seeds.front().
CvResult run_supervised_cv(const Dataset& ds, const RunConfig& cfg, const Logger& log = {});

enum class WeakMode { direct, translate };

struct ScoreStats {
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation; 0 for a single run
};

ScoreStats score_stats(const std::vector<double>& values);

struct SeedRun {
    std::uint64_t seed = 0;
    MetricReport report;
    seg::TrainState seg_state;
    std::optional<trans::TransState> trans_state;
};

struct WeakResult {
    WeakMode mode = WeakMode::direct;
    std::vector<SeedRun> runs;
    ScoreStats oa;
    ScoreStats mean_diou;
    std::array<ScoreStats, kNumClasses> class_diou{};
    bool single_run = false;
};

/// Per-seed model artifacts, so callers can keep checkpoints.
struct WeakModels {
    seg::UNet seg{nullptr};
    std::optional<trans::TranslationModelPair> translator;
};

using ModelSink = std::function<void(const SeedRun& run, WeakModels&)>;

/// Trains one model (or translator + model) per seed on the non-annotated
/// tiles and evaluates each on the annotated tiles.
WeakResult run_weak(const Dataset& ds, const RunConfig& cfg, WeakMode mode, const Logger& log = {},
                    const ModelSink& sink = {});

/// Segmentation of one historical image by a trained weak model.
LabelRaster infer(WeakModels& models, const Image& image, int patch_px);

struct GeoPrediction {
    LabelRaster labels;
    Georef georef;
};

/// Per-cell forest fraction over a square north-up grid aligned to multiples
/// of the cell size.
struct DensityMap {
    int size = 0;  // G: the grid is G×G
    double cell_size_km = 10.0;
    Collection era = Collection::cassini;
    double origin_x = 0.0;  // top-left corner, meters
    double origin_y = 0.0;
    std::vector<std::int64_t> forest;   // row-major, G×G
    std::vector<std::int64_t> covered;

    [[nodiscard]] std::size_t index(int row, int col) const {
        return static_cast<std::size_t>(row) * static_cast<std::size_t>(size) + static_cast<std::size_t>(col);
    }
    [[nodiscard]] bool missing(int row, int col) const { return covered[index(row, col)] == 0; }
    /// NaN for missing cells.
    [[nodiscard]] double fraction(int row, int col) const;
    [[nodiscard]] std::int64_t total_forest() const;

    [[nodiscard]] nlohmann::json to_json() const;
};

DensityMap forest_density(const std::vector<GeoPrediction>& predictions, double cell_size_km, Collection era);

/// Light-to-dark green ramp, missing cells hatched in gray.
Image render_density(const DensityMap& map, int px_per_cell = 16);

struct ScoreRow {
    std::string label;
    double oa = 0.0;                         // ratio in [0, 1]
    std::map<ClassId, double> class_diou;    // ratios in [0, 1]
    bool exclude_background_from_mean = true;
};

ScoreRow score_row(const std::string& label, const MetricReport& report);
ScoreRow score_row(const std::string& label, const WeakResult& result);

/// Pipe table with OA, mean dIoU and per-class dIoU (forest, buildings,
/// hydrography, roads), percent with one decimal. Rows without per-class
/// scores raise DataError.
std::string report_table(const std::vector<ScoreRow>& rows);

nlohmann::json report_to_json(const MetricReport& report);
MetricReport report_from_json(const nlohmann::json& j);
nlohmann::json cv_to_json(const CvResult& r);
nlohmann::json weak_to_json(const WeakResult& r);

}  // namespace hmseg::wf
