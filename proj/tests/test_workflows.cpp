#include <cmath>
#include <fstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "helpers.hpp"
#include "hmseg/config.hpp"
#include "hmseg/error.hpp"
#include "hmseg/workflows.hpp"

using namespace hmseg;
using namespace hmseg::wf;

namespace {

// 20×20 px at 500 m/px: exactly one 10 km cell when anchored on a multiple.
GeoPrediction square_tile(double ox, double oy, ClassId fill) {
    GeoPrediction p{LabelRaster(20, 20, fill), Georef::north_up(ox, oy, 500.0)};
    p.labels.tile_id = "sq";
    return p;
}

RunConfig tiny_run(int n_tiles, double annotated_fraction) {
    RunConfig cfg = RunConfig::for_profile(Profile::toy);
    toy::ToySpec spec;
    spec.n_tiles = n_tiles;
    spec.size_px = 32;
    spec.seed = 4;
    spec.annotated_fraction = annotated_fraction;
    cfg.toy = spec;
    cfg.seg.stages = 3;
    cfg.seg.base_channels = 4;
    cfg.seg.max_channels = 8;
    cfg.seg.crop_px = 32;
    cfg.seg.batch_size = 4;
    cfg.seg.epochs = 1;
    cfg.trans.gen_filters = 2;
    cfg.trans.gen_blocks = 1;
    cfg.trans.disc_filters = 2;
    cfg.trans.disc_layers = 2;
    cfg.trans.crop_px = 16;
    cfg.trans.max_steps = 2;
    cfg.folds = 2;
    cfg.seeds = {0};
    return cfg;
}

}  // namespace

TEST(RunConfig, JsonRoundTripAndProfiles) {
    RunConfig cfg = RunConfig::for_profile(Profile::toy, Collection::etatmajor);
    cfg.seeds = {4, 9};
    cfg.weights.lambda_tran = 0.0;
    cfg.paths.manifest = "corpus/manifest.json";
    const RunConfig back = RunConfig::from_json(cfg.to_json(), RunConfig{});
    EXPECT_EQ(back.to_json(), cfg.to_json());
    EXPECT_EQ(cfg.folds, 2);
    ASSERT_TRUE(cfg.toy.has_value());
    EXPECT_EQ(cfg.seg.crop_px, 128);
    EXPECT_EQ(cfg.trans.crop_px, 64);

    const RunConfig paper = RunConfig::for_profile(Profile::paper, Collection::cassini);
    EXPECT_EQ(paper.folds, 7);
    EXPECT_EQ(paper.seg.crop_px, 1000);
    EXPECT_EQ(paper.seeds, (std::vector<std::uint64_t>{0, 1, 2}));
    EXPECT_DOUBLE_EQ(paper.cell_size_km, 10.0);
    EXPECT_EQ(paper.metric.dilation_radius_w, 3);
    EXPECT_FALSE(paper.toy.has_value());
}

TEST(RunConfig, FileProfileAndRelativePaths) {
    const auto dir = hmseg::testing::scratch_dir("cfg");
    const auto path = dir / "run.json";
    std::ofstream(path) << R"({"profile": "toy", "workflow": "weak_translate",
                               "paths": {"manifest": "data/manifest.json"},
                               "seg": {"epochs": 3}})";
    const RunConfig cfg = load_run_config(path);
    EXPECT_EQ(cfg.workflow, Workflow::weak_translate);
    EXPECT_EQ(cfg.seg.epochs, 3);
    EXPECT_EQ(cfg.seg.crop_px, 128);  // untouched toy value
    EXPECT_EQ(cfg.paths.manifest, dir / "data/manifest.json");
    EXPECT_EQ(load_run_config(path, Profile::paper).seg.stages, 8);

    save_run_config(cfg, dir / "frozen.json");
    EXPECT_EQ(load_run_config(dir / "frozen.json").to_json(), cfg.to_json());

    std::ofstream(dir / "bad.json") << R"({"workflow": "dance"})";
    EXPECT_THROW(load_run_config(dir / "bad.json"), ConfigError);
    std::ofstream(dir / "neg.json") << R"({"weights": {"lambda_cyc": -1}})";
    EXPECT_THROW(load_run_config(dir / "neg.json"), ConfigError);
    EXPECT_THROW(workflow_from_name("nope"), ConfigError);
    EXPECT_EQ(workflow_from_name(workflow_name(Workflow::forest_density)), Workflow::forest_density);
}

TEST(ForestDensity, FullEmptyAndCheckerboardCells) {
    const auto full = forest_density({square_tile(0, 10000, ClassId::forest)}, 10.0, Collection::cassini);
    ASSERT_EQ(full.size, 1);
    EXPECT_DOUBLE_EQ(full.fraction(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(full.origin_x, 0.0);
    EXPECT_DOUBLE_EQ(full.origin_y, 10000.0);
    const auto none = forest_density({square_tile(0, 10000, ClassId::roads)}, 10.0, Collection::cassini);
    EXPECT_DOUBLE_EQ(none.fraction(0, 0), 0.0);
    auto board = square_tile(0, 10000, ClassId::background);
    for (int r = 0; r < 20; ++r) {
        for (int c = 0; c < 20; ++c) {
            if ((r + c) % 2 == 0) board.labels.set(r, c, ClassId::forest);
        }
    }
    EXPECT_DOUBLE_EQ(forest_density({board}, 10.0, Collection::cassini).fraction(0, 0), 0.5);
    // Halving the cell size gives four quarter cells, each still half forest.
    const auto fine = forest_density({board}, 5.0, Collection::cassini);
    ASSERT_EQ(fine.size, 2);
    for (int r = 0; r < 2; ++r) {
        for (int c = 0; c < 2; ++c) EXPECT_DOUBLE_EQ(fine.fraction(r, c), 0.5);
    }
}

TEST(ForestDensity, ConservesForestPixelsAndFlagsMissingCells) {
    std::mt19937_64 rng(3);
    std::vector<GeoPrediction> preds;
    std::int64_t forest = 0;
    // Two tiles 20 km apart with an unobserved cell in between, one offset by half a cell.
    for (auto [ox, oy] : {std::pair{0.0, 10000.0}, {25000.0, 15000.0}}) {
        GeoPrediction p{hmseg::testing::random_labels(20, 20, rng), Georef::north_up(ox, oy, 500.0)};
        for (auto v : p.labels.data.data) forest += v == index_of(ClassId::forest);
        preds.push_back(std::move(p));
    }
    const auto map = forest_density(preds, 10.0, Collection::etatmajor);
    EXPECT_EQ(map.total_forest(), forest);
    std::int64_t covered = 0;
    int missing = 0;
    for (int r = 0; r < map.size; ++r) {
        for (int c = 0; c < map.size; ++c) {
            covered += map.covered[map.index(r, c)];
            if (map.missing(r, c)) {
                ++missing;
                EXPECT_TRUE(std::isnan(map.fraction(r, c)));
            } else {
                EXPECT_GE(map.fraction(r, c), 0.0);
                EXPECT_LE(map.fraction(r, c), 1.0);
            }
        }
    }
    EXPECT_EQ(covered, 800);
    EXPECT_GT(missing, 0);
    const auto j = map.to_json();
    EXPECT_EQ(j.at("era"), "etatmajor");
    const Image img = render_density(map, 4);
    EXPECT_EQ(img.height, map.size * 4);
}

TEST(ForestDensity, InvalidInputsAreRejected) {
    const auto p = square_tile(0, 10000, ClassId::forest);
    EXPECT_THROW(forest_density({p}, 0.0, Collection::cassini), ConfigError);
    EXPECT_THROW(forest_density({p}, -5.0, Collection::cassini), ConfigError);
    EXPECT_THROW(forest_density({p}, std::nan(""), Collection::cassini), ConfigError);
    EXPECT_THROW(forest_density({}, 10.0, Collection::cassini), DataError);
}

TEST(ReportTable, RendersThePublishedCassiniRow) {
    ScoreRow row{"Cassini", 0.853,
                 {{ClassId::forest, 0.561}, {ClassId::buildings, 0.047}, {ClassId::hydrography, 0.709},
                  {ClassId::roads, 0.127}},
                 true};
    const std::string t = report_table({row});
    EXPECT_NE(t.find("| Cassini | 85.3 | 36.1 | 56.1 | 4.7 | 70.9 | 12.7 |"), std::string::npos) << t;
    EXPECT_EQ(t.rfind("| Run | OA | Mean dIoU |", 0), 0u);
    EXPECT_THROW(report_table({ScoreRow{"empty", 0.5, {}, true}}), DataError);
    EXPECT_THROW(report_table({}), DataError);
}

TEST(ReportJson, RoundTripPreservesCounts) {
    std::mt19937_64 rng(8);
    const auto a = hmseg::testing::random_labels(12, 12, rng), b = hmseg::testing::random_labels(12, 12, rng);
    const MetricReport r = evaluate_pair(a, b, {});
    EXPECT_EQ(report_from_json(report_to_json(r)), r);
    const ScoreRow row = score_row("x", r);
    EXPECT_DOUBLE_EQ(row.oa, r.oa());
    EXPECT_DOUBLE_EQ(row.class_diou.at(ClassId::roads), r.class_diou(ClassId::roads));
}

TEST(ScoreStats, SampleStandardDeviation) {
    const auto s = score_stats({0.2, 0.4, 0.6});
    EXPECT_NEAR(s.mean, 0.4, 1e-15);
    EXPECT_NEAR(s.stddev, 0.2, 1e-15);
    EXPECT_DOUBLE_EQ(score_stats({0.7}).stddev, 0.0);
    EXPECT_THROW(score_stats({}), DataError);
}

TEST(SupervisedCv, AggregateIsTheSumOfFoldsAndRunsAreDeterministic) {
    const RunConfig cfg = tiny_run(8, 1.0);
    const Dataset ds = dataset_from_toy(toy::generate_corpus(*cfg.toy));
    const CvResult a = run_supervised_cv(ds, cfg);
    ASSERT_EQ(a.folds.size(), 2u);
    ConfusionMatrix sum{};
    std::set<std::string> tested;
    for (const auto& f : a.folds) {
        for (std::size_t i = 0; i < kNumClasses; ++i) {
            for (std::size_t j = 0; j < kNumClasses; ++j) sum[i][j] += f.report.confusion[i][j];
        }
        for (const auto& id : f.split.test) EXPECT_TRUE(tested.insert(id).second) << id;
    }
    EXPECT_EQ(a.aggregate.confusion, sum);
    EXPECT_EQ(tested.size(), 8u);
    const CvResult b = run_supervised_cv(ds, cfg);
    EXPECT_EQ(b.aggregate, a.aggregate);
    RunConfig too_many = cfg;
    too_many.folds = 9;
    EXPECT_THROW(run_supervised_cv(ds, too_many), InfeasibleSplitError);
}

TEST(WeakRuns, SingleSeedIsFlaggedAndModesEvaluateOnAnnotatedTiles) {
    const RunConfig cfg = tiny_run(8, 0.5);
    const Dataset ds = dataset_from_toy(toy::generate_corpus(*cfg.toy));
    EXPECT_EQ(ds.truth.size(), 4u);
    EXPECT_EQ(ds.modern_labels.size(), 8u);
    int sunk = 0;
    const WeakResult direct = run_weak(ds, cfg, WeakMode::direct, {}, [&](const SeedRun& r, WeakModels& m) {
        EXPECT_EQ(r.seed, 0u);
        ++sunk;
        EXPECT_FALSE(m.translator.has_value());
    });
    EXPECT_EQ(sunk, 1);
    EXPECT_TRUE(direct.single_run);
    ASSERT_EQ(direct.runs.size(), 1u);
    EXPECT_EQ(direct.runs[0].report.total(), 4 * 32 * 32);
    EXPECT_DOUBLE_EQ(direct.oa.stddev, 0.0);
    EXPECT_DOUBLE_EQ(direct.oa.mean, direct.runs[0].report.oa());

    const WeakResult tr = run_weak(ds, cfg, WeakMode::translate);
    ASSERT_TRUE(tr.runs[0].trans_state.has_value());
    EXPECT_EQ(tr.runs[0].trans_state->steps, 2);
    const auto j = weak_to_json(tr);
    EXPECT_EQ(j.at("mode"), "translate");
    EXPECT_TRUE(j.at("single_run").get<bool>());
}
