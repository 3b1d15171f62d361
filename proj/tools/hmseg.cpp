// Command-line front end: one subcommand per workflow, every run writes its
// artifacts and the resolved configuration under a single run directory.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hmseg/config.hpp"
#include "hmseg/error.hpp"
#include "hmseg/image_io.hpp"
#include "hmseg/segnet.hpp"
#include "hmseg/stylizer.hpp"
#include "hmseg/toygen.hpp"
#include "hmseg/translator.hpp"
#include "hmseg/workflows.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace hmseg;

namespace {

struct Common {
    std::string config;
    std::vector<std::uint64_t> seeds;
    std::string out;
    std::string profile;
};

struct Run {
    RunConfig cfg;
    fs::path dir;
};

Run open_run(const Common& opts, const std::string& name, std::optional<Workflow> workflow = {}) {
    std::optional<Profile> profile;
    if (!opts.profile.empty()) profile = profile_from_name(opts.profile);
    Run run{load_run_config(opts.config, profile), {}};
    if (!opts.seeds.empty()) run.cfg.seeds = opts.seeds;
    if (workflow) run.cfg.workflow = *workflow;
    run.cfg.validate();
    run.dir = opts.out.empty() ? run.cfg.paths.output / name : fs::path(opts.out);
    fs::create_directories(run.dir);
    run.cfg.paths.output = run.dir;
    save_run_config(run.cfg, run.dir / "config.json");
    return run;
}

void log_line(const std::string& msg) { std::cerr << msg << '\n'; }

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

StyleSpec style_for(const RunConfig& cfg) {
    if (!cfg.paths.style.empty()) return load_style_spec(cfg.paths.style);
    if (cfg.toy) return toy::synthetic_style(cfg.collection);
    return StyleSpec::defaults_for(cfg.collection);
}

Manifest manifest_for(const RunConfig& cfg) {
    if (cfg.paths.manifest.empty()) throw ConfigError("paths.manifest is required for this command");
    return load_manifest(cfg.paths.manifest);
}

wf::Dataset dataset_for(const RunConfig& cfg) {
    return wf::load_dataset(manifest_for(cfg), cfg.collection, style_for(cfg), cfg.paths.features);
}

std::string seed_tag(std::uint64_t seed) { return "seed" + std::to_string(seed); }

int cmd_toygen(const Common& o) {
    Run run = open_run(o, "toygen", Workflow::toygen);
    toy::ToySpec spec = run.cfg.toy.value_or(toy::ToySpec{});
    spec.seed = run.cfg.seeds.front();
    spec.historical = run.cfg.collection;
    auto corpus = toy::generate_corpus(spec);
    const auto manifest = toy::write_corpus(corpus, run.dir);
    save_style_spec(toy::synthetic_style(spec.historical), run.dir / "synthetic_style.json");
    const auto st = toy::corpus_stats(corpus);
    json stats;
    for (ClassId c : kAllClasses) {
        stats[std::string(class_name(c))] = {{"historical_pixels", st.historical.pixels[index_of(c)]},
                                             {"modern_pixels", st.modern.pixels[index_of(c)]}};
    }
    write_json(run.dir / "stats.json", stats);
    std::cout << manifest.string() << '\n';
    return 0;
}

int cmd_stylize(const Common& o) {
    Run run = open_run(o, "stylize", Workflow::stylize);
    if (run.cfg.paths.features.empty()) throw ConfigError("stylize: paths.features is required");
    const Manifest m = manifest_for(run.cfg);
    const StyleSpec style = style_for(run.cfg);
    fs::create_directories(run.dir / "labels");
    fs::create_directories(run.dir / "synthetic");
    for (const auto& e : m.entries) {
        const Tile tile = load_tile(m, e.tile_id, run.cfg.collection);
        LabelRaster labels =
            rasterize(adapt_lod(read_features(run.cfg.paths.features / (e.tile_id + ".wkt")), style), tile, style);
        labels.tile_id = e.tile_id;
        io::write_labels(run.dir / "labels" / (e.tile_id + ".png"), labels);
        io::write_rgb(run.dir / "synthetic" / (e.tile_id + ".png"), colorize(labels, style));
    }
    log_line("stylized " + std::to_string(m.entries.size()) + " tiles");
    return 0;
}

int cmd_make_folds(const Common& o) {
    Run run = open_run(o, "folds");
    const Manifest m = manifest_for(run.cfg);
    const std::uint64_t seed = run.cfg.seeds.front();
    const FoldSplit folds = make_folds(m, run.cfg.folds, seed);
    json splits = json::array();
    for (int f = 0; f < folds.k; ++f) {
        const auto s = split_supervised(folds, f, seed);
        splits.push_back({{"fold", f}, {"train", s.train}, {"val", s.val}, {"test", s.test}});
    }
    write_json(run.dir / "folds.json", {{"k", folds.k}, {"assignment", folds.assignment}, {"splits", splits}});
    const WeakSplit weak = split_weak(m, seed);
    write_json(run.dir / "weak_split.json", {{"train", weak.train}, {"val", weak.val}});
    return 0;
}

int cmd_train_supervised(const Common& o) {
    Run run = open_run(o, "supervised", Workflow::supervised_cv);
    const auto ds = dataset_for(run.cfg);
    const auto result = wf::run_supervised_cv(ds, run.cfg, log_line);
    write_json(run.dir / "report.json", wf::cv_to_json(result));
    std::vector<wf::ScoreRow> rows;
    for (const auto& f : result.folds) rows.push_back(wf::score_row("fold " + std::to_string(f.fold), f.report));
    rows.push_back(wf::score_row("aggregate", result.aggregate));
    const std::string table = wf::report_table(rows);
    write_text(run.dir / "table.md", table);
    std::cout << table;
    return 0;
}

int cmd_train_weak(const Common& o, const std::string& mode_name) {
    std::optional<Workflow> wfl;
    if (mode_name == "direct") wfl = Workflow::weak_direct;
    if (mode_name == "translate") wfl = Workflow::weak_translate;
    Run run = open_run(o, "weak", wfl);
    const wf::WeakMode mode =
        run.cfg.workflow == Workflow::weak_translate ? wf::WeakMode::translate : wf::WeakMode::direct;
    const auto ds = dataset_for(run.cfg);
    auto sink = [&](const wf::SeedRun& seed_run, wf::WeakModels& models) {
        const fs::path dir = run.dir / seed_tag(seed_run.seed);
        seg::save_checkpoint(dir / "segnet.pt", models.seg, models.seg->cfg, seed_run.seg_state);
        if (models.translator) {
            const int steps = seed_run.trans_state ? seed_run.trans_state->steps : 0;
            trans::save_checkpoint(dir / "translator.pt", *models.translator, run.cfg.trans, run.cfg.weights, steps);
        }
    };
    const auto result = wf::run_weak(ds, run.cfg, mode, log_line, sink);
    write_json(run.dir / "report.json", wf::weak_to_json(result));
    std::vector<wf::ScoreRow> rows;
    for (const auto& r : result.runs) rows.push_back(wf::score_row(seed_tag(r.seed), r.report));
    rows.push_back(wf::score_row("mean", result));
    const std::string table = wf::report_table(rows);
    write_text(run.dir / "table.md", table);
    std::cout << table;
    std::cout << "std OA " << result.oa.stddev * 100.0 << ", std mean dIoU " << result.mean_diou.stddev * 100.0
              << (result.single_run ? " (single run)" : "") << '\n';
    return 0;
}

int cmd_train_translate(const Common& o) {
    Run run = open_run(o, "translate", Workflow::weak_translate);
    const auto ds = dataset_for(run.cfg);
    for (const std::uint64_t seed : run.cfg.seeds) {
        const WeakSplit split = split_weak(ds.manifest, seed);
        trans::TransConfig tc = run.cfg.trans;
        tc.seed = seed;
        auto pair = trans::TranslationModelPair::build(tc);
        std::vector<trans::AlignedPair> data;
        for (const auto& id : split.train) data.push_back({id, ds.historical.at(id).image, wf::synthetic_map(ds, id)});
        const double before = trans::aligned_l1(pair, data);
        const auto state = trans::train_translation(pair, data, tc, run.cfg.weights, [&](int step, auto&) {
            if (step % 500 == 0) log_line("seed " + std::to_string(seed) + ": step " + std::to_string(step));
        });
        const double after = trans::aligned_l1(pair, data);
        const fs::path dir = run.dir / seed_tag(seed);
        trans::save_checkpoint(dir / "translator.pt", pair, tc, run.cfg.weights, state.steps);

        std::vector<Image> inputs, outputs;
        for (std::size_t i = 0; i < std::min<std::size_t>(4, split.val.size()); ++i) {
            inputs.push_back(ds.historical.at(split.val[i]).image);
            outputs.push_back(trans::translate_image(pair.gen_xy, inputs.back(), tc.crop_px));
        }
        if (!inputs.empty()) io::write_rgb(dir / "preview.png", trans::preview_grid(inputs, outputs));
        json hist = json::array();
        for (const auto& h : state.history) {
            hist.push_back({{"step", h.step}, {"gen", h.gen_objective}, {"disc", h.disc_objective}, {"tran", h.tran}});
        }
        write_json(dir / "translation.json",
                   {{"steps", state.steps}, {"aligned_l1_before", before}, {"aligned_l1_after", after}, {"history", hist}});
        log_line("seed " + std::to_string(seed) + ": aligned L1 " + std::to_string(before) + " -> " +
                 std::to_string(after));
    }
    return 0;
}

int cmd_infer(const Common& o, const std::string& translator) {
    Run run = open_run(o, "infer");
    if (run.cfg.paths.checkpoint.empty()) throw ConfigError("infer: paths.checkpoint is required");
    auto [model, ck] = seg::load_checkpoint(run.cfg.paths.checkpoint);
    wf::WeakModels models;
    models.seg = model;
    if (!translator.empty()) models.translator = trans::load_checkpoint(translator).first;
    const Manifest m = manifest_for(run.cfg);
    fs::create_directories(run.dir / "predictions");
    for (const auto& e : m.entries) {
        const Tile tile = load_tile(m, e.tile_id, run.cfg.collection);
        LabelRaster pred = wf::infer(models, tile.image, ck.cfg.crop_px);
        io::write_labels(run.dir / "predictions" / (e.tile_id + ".png"), pred);
        io::write_world_file(run.dir / "predictions" / (e.tile_id + ".wld"), tile.georef);
    }
    log_line("wrote " + std::to_string(m.entries.size()) + " predictions");
    return 0;
}

LabelRaster read_prediction(const fs::path& dir, const std::string& id) {
    LabelRaster l = io::read_labels(dir / (id + ".png"));
    l.tile_id = id;
    return l;
}

int cmd_evaluate(const Common& o, const std::string& predictions) {
    Run run = open_run(o, "evaluate", Workflow::evaluate);
    if (predictions.empty()) throw ConfigError("evaluate: --predictions is required");
    const Manifest m = manifest_for(run.cfg);
    std::vector<MetricReport> reports;
    for (const auto& id : m.annotated_ids) {
        reports.push_back(evaluate_pair(read_prediction(predictions, id), load_label(m, id, run.cfg.collection),
                                        run.cfg.metric));
    }
    const MetricReport agg = aggregate_reports(reports);
    write_json(run.dir / "report.json", wf::report_to_json(agg));
    const std::string table = wf::report_table({wf::score_row("evaluation", agg)});
    write_text(run.dir / "table.md", table);
    std::cout << table;
    return 0;
}

int cmd_forest_density(const Common& o, const std::string& predictions, int px_per_cell) {
    Run run = open_run(o, "density", Workflow::forest_density);
    if (predictions.empty()) throw ConfigError("forest-density: --predictions is required");
    std::vector<wf::GeoPrediction> preds;
    for (const auto& entry : fs::directory_iterator(predictions)) {
        if (entry.path().extension() != ".png") continue;
        const std::string id = entry.path().stem().string();
        fs::path wld = entry.path();
        wld.replace_extension(".wld");
        if (!fs::exists(wld)) throw DataError("prediction '" + id + "' has no world file");
        preds.push_back({read_prediction(predictions, id), io::read_world_file(wld)});
    }
    std::sort(preds.begin(), preds.end(),
              [](const auto& a, const auto& b) { return a.labels.tile_id < b.labels.tile_id; });
    const auto map = wf::forest_density(preds, run.cfg.cell_size_km, run.cfg.collection);
    write_json(run.dir / "density.json", map.to_json());
    io::write_rgb(run.dir / "density.png", wf::render_density(map, px_per_cell));
    log_line("density grid " + std::to_string(map.size) + "x" + std::to_string(map.size));
    return 0;
}

int cmd_report(const std::string& out, const std::vector<std::string>& files) {
    std::vector<wf::ScoreRow> rows;
    for (const auto& f : files) {
        std::ifstream in(f);
        if (!in) throw IoError("cannot open '" + f + "'");
        const json j = json::parse(in);
        const std::string label = fs::path(f).parent_path().filename().string();
        if (j.contains("aggregate")) {
            rows.push_back(wf::score_row(label, wf::report_from_json(j.at("aggregate"))));
        } else if (j.contains("runs")) {
            wf::ScoreRow row{label, j.at("oa").at("mean").get<double>(), {}, true};
            for (ClassId c : kAllClasses) {
                row.class_diou[c] = j.at("class_diou").at(std::string(class_name(c))).at("mean").get<double>();
            }
            rows.push_back(std::move(row));
        } else {
            rows.push_back(wf::score_row(label, wf::report_from_json(j)));
        }
    }
    const std::string table = wf::report_table(rows);
    if (!out.empty()) {
        fs::create_directories(out);
        write_text(fs::path(out) / "table.md", table);
    }
    std::cout << table;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Historical map segmentation: toy corpora, training, evaluation and forest density"};
    app.require_subcommand(1);
    Common common;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", common.seeds, "Seed override (repeatable)");
        sub->add_option("--out", common.out, "Run directory");
        sub->add_option("--profile", common.profile, "Base profile")->check(CLI::IsMember({"paper", "toy"}));
    };

    std::string mode, translator, predictions;
    std::vector<std::string> report_files;
    int px_per_cell = 16;

    auto* toygen = app.add_subcommand("toygen", "Generate a toy corpus with manifest");
    auto* stylize = app.add_subcommand("stylize", "Rasterize LOD-adapted vector features and synthetic maps");
    auto* folds = app.add_subcommand("make-folds", "Write spatial folds and the weak split");
    auto* sup = app.add_subcommand("train-supervised", "Cross-validated supervised training");
    auto* weak = app.add_subcommand("train-weak", "Weakly supervised training (direct or translate)");
    weak->add_option("--mode", mode, "direct or translate (default: from config workflow)")
        ->check(CLI::IsMember({"direct", "translate"}));
    auto* tr = app.add_subcommand("train-translate", "Train the translation networks only");
    auto* inf = app.add_subcommand("infer", "Patchwise inference over every manifest tile");
    inf->add_option("--translator", translator, "Translator checkpoint (translate-then-segment)");
    auto* ev = app.add_subcommand("evaluate", "Score predictions against annotated tiles");
    ev->add_option("--predictions", predictions, "Directory of predicted label PNGs")->required();
    auto* fd = app.add_subcommand("forest-density", "Forest density grid from georeferenced predictions");
    fd->add_option("--predictions", predictions, "Directory of label PNGs with world files")->required();
    fd->add_option("--px-per-cell", px_per_cell, "Rendered pixels per grid cell");
    auto* rep = app.add_subcommand("report", "Tabulate report.json files");
    rep->add_option("reports", report_files, "report.json files")->required()->check(CLI::ExistingFile);
    rep->add_option("--out", common.out, "Directory for table.md");
    for (auto* sub : {toygen, stylize, folds, sup, weak, tr, inf, ev, fd}) add_common(sub);

    CLI11_PARSE(app, argc, argv);

    try {
        if (toygen->parsed()) return cmd_toygen(common);
        if (stylize->parsed()) return cmd_stylize(common);
        if (folds->parsed()) return cmd_make_folds(common);
        if (sup->parsed()) return cmd_train_supervised(common);
        if (weak->parsed()) return cmd_train_weak(common, mode);
        if (tr->parsed()) return cmd_train_translate(common);
        if (inf->parsed()) return cmd_infer(common, translator);
        if (ev->parsed()) return cmd_evaluate(common, predictions);
        if (fd->parsed()) return cmd_forest_density(common, predictions, px_per_cell);
        if (rep->parsed()) return cmd_report(common.out, report_files);
    } catch (const hmseg::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "fatal: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
