#include "hmseg/workflows.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hmseg/error.hpp"
#include "hmseg/image_io.hpp"

namespace hmseg::wf {

using json = nlohmann::json;

namespace {

void note(const Logger& log, const std::string& msg) {
    if (log) log(msg);
}

std::map<std::string, Image> historical_images(const Dataset& ds) {
    std::map<std::string, Image> out;
    for (const auto& [id, tile] : ds.historical) out.emplace(id, tile.image);
    return out;
}

std::vector<seg::Sample> annotated_samples(const Dataset& ds) {
    std::vector<seg::Sample> out;
    for (const auto& [id, labels] : ds.truth) {
        out.push_back({id, ds.historical.at(id).image, labels});
    }
    return out;
}

// Mean of doubles in a fixed order, so repeated runs agree bit for bit.
double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

}  // namespace

Dataset load_dataset(const Manifest& manifest, Collection collection, const StyleSpec& style,
                     const std::filesystem::path& features_dir) {
    Dataset ds;
    ds.manifest = manifest;
    ds.collection = collection;
    ds.synthetic_style = style;
    for (const auto& e : manifest.entries) {
        Tile tile = load_tile(manifest, e.tile_id, collection);
        if (!features_dir.empty()) {
            const auto path = features_dir / (e.tile_id + ".wkt");
            LabelRaster labels = rasterize(adapt_lod(read_features(path), style), tile, style);
            labels.tile_id = e.tile_id;
            labels.source = LabelRaster::Source::modern_vector;
            ds.modern_labels.emplace(e.tile_id, std::move(labels));
        } else if (e.labels.contains(Collection::modern)) {
            ds.modern_labels.emplace(e.tile_id, load_label(manifest, e.tile_id, Collection::modern));
        }
        if (manifest.annotated_ids.contains(e.tile_id)) {
            if (!e.labels.contains(collection)) {
                throw DataError("annotated tile '" + e.tile_id + "' has no " +
                                std::string(collection_name(collection)) + " labels");
            }
            ds.truth.emplace(e.tile_id, load_label(manifest, e.tile_id, collection));
        }
        ds.historical.emplace(e.tile_id, std::move(tile));
    }
    return ds;
}

Dataset dataset_from_toy(const toy::ToyCorpus& corpus) {
    Dataset ds;
    ds.manifest = corpus.manifest;
    ds.collection = corpus.spec.historical;
    ds.synthetic_style = toy::synthetic_style(corpus.spec.historical);
    for (const auto& t : corpus.tiles) {
        ds.historical.emplace(t.tile_id, t.historical);
        ds.modern_labels.emplace(t.tile_id, t.modern_labels);
        if (corpus.manifest.annotated_ids.contains(t.tile_id)) ds.truth.emplace(t.tile_id, t.historical_labels);
    }
    return ds;
}

Image synthetic_map(const Dataset& ds, const std::string& tile_id) {
    const auto it = ds.modern_labels.find(tile_id);
    if (it == ds.modern_labels.end()) throw PairingError("no modern labels for tile '" + tile_id + "'");
    return colorize(it->second, ds.synthetic_style);
}

CvResult run_supervised_cv(const Dataset& ds, const RunConfig& cfg, const Logger& log) {
    cfg.validate();
    const std::uint64_t seed = cfg.seeds.front();
    const FoldSplit folds = make_folds(ds.manifest, cfg.folds, seed);
    CvResult result;
    std::vector<MetricReport> reports;
    for (int f = 0; f < folds.k; ++f) {
        const SupervisedSplit split = split_supervised(folds, f, seed);
        auto to_samples = [&](const std::vector<std::string>& ids) {
            std::vector<seg::Sample> out;
            for (const auto& id : ids) out.push_back({id, ds.historical.at(id).image, ds.truth.at(id)});
            return out;
        };
        seg::SegConfig sc = cfg.seg;
        sc.seed = seed * 1000 + static_cast<std::uint64_t>(f);
        seg::UNet model = seg::build_model(sc);
        note(log, "fold " + std::to_string(f) + ": train " + std::to_string(split.train.size()) + ", val " +
                      std::to_string(split.val.size()) + ", test " + std::to_string(split.test.size()));
        seg::TrainState state = seg::train_supervised(model, to_samples(split.train), to_samples(split.val), sc,
                                                      {cfg.metric, false});
        MetricReport report = seg::evaluate_samples(model, to_samples(split.test), sc.crop_px, cfg.metric);
        note(log, "fold " + std::to_string(f) + ": OA " + std::to_string(report.oa()) + ", mean dIoU " +
                      std::to_string(report.mean_diou()));
        reports.push_back(report);
        result.folds.push_back({f, split, std::move(report), std::move(state)});
    }
    result.aggregate = aggregate_reports(reports);
    return result;
}

ScoreStats score_stats(const std::vector<double>& values) {
    if (values.empty()) throw DataError("score_stats: no values");
    ScoreStats s;
    s.mean = mean_of(values);
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return s;
}

LabelRaster infer(WeakModels& models, const Image& image, int patch_px) {
    if (models.translator) return trans::translate_then_segment(*models.translator, models.seg, image, patch_px);
    return seg::predict_tile(models.seg, image, patch_px);
}

WeakResult run_weak(const Dataset& ds, const RunConfig& cfg, WeakMode mode, const Logger& log, const ModelSink& sink) {
    cfg.validate();
    if (ds.truth.empty()) throw DataError("run_weak: no annotated tiles to evaluate on");
    const auto eval_set = annotated_samples(ds);
    const auto images = historical_images(ds);

    WeakResult result;
    result.mode = mode;
    result.single_run = cfg.seeds.size() == 1;
    for (const std::uint64_t seed : cfg.seeds) {
        const WeakSplit split = split_weak(ds.manifest, seed);
        seg::SegConfig sc = cfg.seg;
        sc.seed = seed;
        WeakModels models;
        models.seg = seg::build_model(sc);
        SeedRun run;
        run.seed = seed;

        if (mode == WeakMode::direct) {
            note(log, "seed " + std::to_string(seed) + ": direct weak training on " +
                          std::to_string(split.train.size()) + " tiles");
            run.seg_state = seg::train_weak(models.seg, images, ds.modern_labels, split, sc, {cfg.metric, false});
        } else {
            trans::TransConfig tc = cfg.trans;
            tc.seed = seed;
            auto pair = trans::TranslationModelPair::build(tc);
            std::vector<trans::AlignedPair> aligned;
            for (const auto& id : split.train) aligned.push_back({id, images.at(id), synthetic_map(ds, id)});
            note(log, "seed " + std::to_string(seed) + ": translation training on " + std::to_string(aligned.size()) +
                          " aligned pairs");
            run.trans_state = trans::train_translation(pair, aligned, tc, cfg.weights);

            // The segmenter learns from images in the generator's output domain.
            std::map<std::string, Image> seg_images;
            for (const auto& ids : {split.train, split.val}) {
                for (const auto& id : ids) {
                    seg_images.emplace(id, cfg.segment_on_translated
                                               ? trans::translate_image(pair.gen_xy, images.at(id), sc.crop_px)
                                               : synthetic_map(ds, id));
                }
            }
            note(log, "seed " + std::to_string(seed) + ": segmentation training on " +
                          (cfg.segment_on_translated ? "translated" : "synthetic") + " maps");
            run.seg_state = seg::train_weak(models.seg, seg_images, ds.modern_labels, split, sc, {cfg.metric, false});
            models.translator = std::move(pair);
        }

        std::vector<MetricReport> reports;
        for (const auto& s : eval_set) {
            reports.push_back(evaluate_pair(infer(models, s.image, sc.crop_px), s.labels, cfg.metric));
        }
        run.report = aggregate_reports(reports);
        run.report.exclude_background_from_mean = cfg.metric.exclude_background_from_mean;
        note(log, "seed " + std::to_string(seed) + ": OA " + std::to_string(run.report.oa()) + ", mean dIoU " +
                      std::to_string(run.report.mean_diou()));
        if (sink) sink(run, models);
        result.runs.push_back(std::move(run));
    }

    std::vector<double> oa;
    std::vector<double> md;
    std::array<std::vector<double>, kNumClasses> cls;
    for (const auto& r : result.runs) {
        oa.push_back(r.report.oa());
        md.push_back(r.report.mean_diou());
        const auto pc = r.report.per_class_diou();
        for (std::size_t c = 0; c < kNumClasses; ++c) cls[c].push_back(pc[c]);
    }
    result.oa = score_stats(oa);
    result.mean_diou = score_stats(md);
    for (std::size_t c = 0; c < kNumClasses; ++c) result.class_diou[c] = score_stats(cls[c]);
    return result;
}

double DensityMap::fraction(int row, int col) const {
    const auto i = index(row, col);
    if (covered[i] == 0) return std::numeric_limits<double>::quiet_NaN();
    return static_cast<double>(forest[i]) / static_cast<double>(covered[i]);
}

std::int64_t DensityMap::total_forest() const { return std::accumulate(forest.begin(), forest.end(), std::int64_t{0}); }

json DensityMap::to_json() const {
    json rows = json::array();
    for (int r = 0; r < size; ++r) {
        json row = json::array();
        for (int c = 0; c < size; ++c) {
            if (missing(r, c)) {
                row.push_back(nullptr);
            } else {
                row.push_back(fraction(r, c));
            }
        }
        rows.push_back(std::move(row));
    }
    return {{"size", size},
            {"cell_size_km", cell_size_km},
            {"era", std::string(collection_name(era))},
            {"origin_x", origin_x},
            {"origin_y", origin_y},
            {"fraction", std::move(rows)},
            {"forest_pixels", forest},
            {"covered_pixels", covered}};
}

DensityMap forest_density(const std::vector<GeoPrediction>& predictions, double cell_size_km, Collection era) {
    if (!(cell_size_km > 0.0) || !std::isfinite(cell_size_km)) {
        throw ConfigError("forest_density: cell size must be a positive number of km");
    }
    if (predictions.empty()) throw DataError("forest_density: no predictions");
    const double cell = cell_size_km * 1000.0;

    // Extent of all pixel centers.
    double min_x = std::numeric_limits<double>::infinity(), max_x = -min_x;
    double min_y = min_x, max_y = -min_x;
    for (const auto& p : predictions) {
        if (!p.georef.invertible()) throw DataError("forest_density: prediction '" + p.labels.tile_id + "' has a singular georeference");
        const int h = p.labels.data.height;
        const int w = p.labels.data.width;
        for (const auto& [col, row] : {std::pair{0.5, 0.5}, {w - 0.5, 0.5}, {0.5, h - 0.5}, {w - 0.5, h - 0.5}}) {
            const Point2 q = p.georef.to_world(col, row);
            min_x = std::min(min_x, q.x);
            max_x = std::max(max_x, q.x);
            min_y = std::min(min_y, q.y);
            max_y = std::max(max_y, q.y);
        }
    }

    DensityMap map;
    map.cell_size_km = cell_size_km;
    map.era = era;
    map.origin_x = std::floor(min_x / cell) * cell;
    map.origin_y = (std::floor(max_y / cell) + 1.0) * cell;
    const int nx = static_cast<int>(std::floor((max_x - map.origin_x) / cell)) + 1;
    const int ny = static_cast<int>(std::floor((map.origin_y - min_y) / cell)) + 1;
    map.size = std::max(nx, ny);
    map.forest.assign(static_cast<std::size_t>(map.size) * static_cast<std::size_t>(map.size), 0);
    map.covered.assign(map.forest.size(), 0);

    for (const auto& p : predictions) {
        const auto& lab = p.labels.data;
        for (int r = 0; r < lab.height; ++r) {
            for (int c = 0; c < lab.width; ++c) {
                const Point2 q = p.georef.to_world(c + 0.5, r + 0.5);
                const int gc = std::clamp(static_cast<int>(std::floor((q.x - map.origin_x) / cell)), 0, map.size - 1);
                const int gr = std::clamp(static_cast<int>(std::floor((map.origin_y - q.y) / cell)), 0, map.size - 1);
                const auto i = map.index(gr, gc);
                ++map.covered[i];
                if (static_cast<ClassId>(lab.at(r, c)) == ClassId::forest) ++map.forest[i];
            }
        }
    }
    return map;
}

Image render_density(const DensityMap& map, int px_per_cell) {
    if (px_per_cell < 1) throw ConfigError("render_density: px_per_cell must be >= 1");
    constexpr std::array<double, 3> kLow{247.0, 252.0, 236.0};
    constexpr std::array<double, 3> kHigh{0.0, 90.0, 50.0};
    const int n = map.size * px_per_cell;
    Image img(n, n, 3);
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
            const int gr = r / px_per_cell;
            const int gc = c / px_per_cell;
            for (int ch = 0; ch < 3; ++ch) {
                double v;
                if (map.missing(gr, gc)) {
                    v = (r + c) % 6 < 2 ? 150.0 : 215.0;
                } else {
                    const double t = map.fraction(gr, gc);
                    v = kLow[static_cast<std::size_t>(ch)] + t * (kHigh[static_cast<std::size_t>(ch)] -
                                                                  kLow[static_cast<std::size_t>(ch)]);
                }
                img.at(r, c, ch) = static_cast<std::uint8_t>(std::lround(v));
            }
        }
    }
    return img;
}

ScoreRow score_row(const std::string& label, const MetricReport& report) {
    ScoreRow row{label, report.oa(), {}, report.exclude_background_from_mean};
    const auto pc = report.per_class_diou();
    for (ClassId c : kAllClasses) row.class_diou[c] = pc[index_of(c)];
    return row;
}

ScoreRow score_row(const std::string& label, const WeakResult& result) {
    ScoreRow row{label, result.oa.mean, {}, true};
    for (ClassId c : kAllClasses) row.class_diou[c] = result.class_diou[index_of(c)].mean;
    if (!result.runs.empty()) row.exclude_background_from_mean = result.runs.front().report.exclude_background_from_mean;
    return row;
}

std::string report_table(const std::vector<ScoreRow>& rows) {
    if (rows.empty()) throw DataError("report_table: no rows");
    constexpr std::array<ClassId, 4> kColumns = {ClassId::forest, ClassId::buildings, ClassId::hydrography,
                                                 ClassId::roads};
    auto pct = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.1f", v * 100.0);
        return std::string(buf);
    };
    std::ostringstream out;
    out << "| Run | OA | Mean dIoU | forest | buildings | hydrography | roads |\n";
    out << "|---|---|---|---|---|---|---|\n";
    for (const auto& row : rows) {
        if (row.class_diou.empty()) throw DataError("report_table: row '" + row.label + "' has no per-class scores");
        double sum = 0.0;
        int n = 0;
        for (const auto& [cls, v] : row.class_diou) {
            if (cls == ClassId::background && row.exclude_background_from_mean) continue;
            sum += v;
            ++n;
        }
        if (n == 0) throw DataError("report_table: row '" + row.label + "' has no scored target class");
        out << "| " << row.label << " | " << pct(row.oa) << " | " << pct(sum / n);
        for (ClassId c : kColumns) {
            const auto it = row.class_diou.find(c);
            out << " | " << (it == row.class_diou.end() ? std::string("-") : pct(it->second));
        }
        out << " |\n";
    }
    return out.str();
}

json report_to_json(const MetricReport& report) {
    json per_class = json::object();
    json counts = json::object();
    const auto pc = report.per_class_diou();
    for (ClassId c : kAllClasses) {
        const auto i = index_of(c);
        per_class[std::string(class_name(c))] = pc[i];
        counts[std::string(class_name(c))] = {report.diou_counts[i].numerator, report.diou_counts[i].denominator};
    }
    return {{"oa", report.oa()},
            {"mean_diou", report.mean_diou()},
            {"class_diou", per_class},
            {"diou_counts", counts},
            {"confusion", report.confusion},
            {"exclude_background_from_mean", report.exclude_background_from_mean}};
}

MetricReport report_from_json(const json& j) {
    MetricReport r;
    try {
        r.confusion = j.at("confusion").get<ConfusionMatrix>();
        for (ClassId c : kAllClasses) {
            const auto& v = j.at("diou_counts").at(std::string(class_name(c)));
            r.diou_counts[index_of(c)] = {v.at(0).get<std::int64_t>(), v.at(1).get<std::int64_t>()};
        }
        r.exclude_background_from_mean = j.value("exclude_background_from_mean", true);
    } catch (const json::exception& e) {
        throw SchemaError(std::string("metric report: ") + e.what());
    }
    return r;
}

json cv_to_json(const CvResult& r) {
    json folds = json::array();
    for (const auto& f : r.folds) {
        folds.push_back({{"fold", f.fold},
                         {"train", f.split.train},
                         {"val", f.split.val},
                         {"test", f.split.test},
                         {"best_epoch", f.state.best_epoch},
                         {"report", report_to_json(f.report)}});
    }
    return {{"folds", folds}, {"aggregate", report_to_json(r.aggregate)}};
}

json weak_to_json(const WeakResult& r) {
    auto stats = [](const ScoreStats& s) { return json{{"mean", s.mean}, {"std", s.stddev}}; };
    json runs = json::array();
    for (const auto& run : r.runs) {
        json j = {{"seed", run.seed}, {"best_epoch", run.seg_state.best_epoch}, {"report", report_to_json(run.report)}};
        if (run.trans_state) j["translation_steps"] = run.trans_state->steps;
        runs.push_back(std::move(j));
    }
    json cls = json::object();
    for (ClassId c : kAllClasses) cls[std::string(class_name(c))] = stats(r.class_diou[index_of(c)]);
    return {{"mode", r.mode == WeakMode::direct ? "direct" : "translate"},
            {"runs", runs},
            {"oa", stats(r.oa)},
            {"mean_diou", stats(r.mean_diou)},
            {"class_diou", cls},
            {"single_run", r.single_run}};
}

}  // namespace hmseg::wf
