#include "hmseg/config.hpp"

#include <array>
#include <fstream>
#include <utility>

#include <nlohmann/json.hpp>

#include "hmseg/error.hpp"

namespace hmseg {

using json = nlohmann::json;

namespace {

constexpr std::array<std::pair<Workflow, std::string_view>, 7> kWorkflowNames = {{
    {Workflow::supervised_cv, "supervised_cv"},
    {Workflow::weak_direct, "weak_direct"},
    {Workflow::weak_translate, "weak_translate"},
    {Workflow::evaluate, "evaluate"},
    {Workflow::forest_density, "forest_density"},
    {Workflow::toygen, "toygen"},
    {Workflow::stylize, "stylize"},
}};

std::string_view element_name(StructuringElement e) { return e == StructuringElement::square ? "square" : "disk"; }

StructuringElement element_from_name(const std::string& s) {
    if (s == "square") return StructuringElement::square;
    if (s == "disk") return StructuringElement::disk;
    throw ConfigError("metric.element: expected 'square' or 'disk', got '" + s + "'");
}

json metric_to_json(const MetricConfig& m) {
    return {{"dilation_radius_w", m.dilation_radius_w},
            {"element", std::string(element_name(m.element))},
            {"exclude_background_from_mean", m.exclude_background_from_mean}};
}

// Overlays `patch` on `base` (object members replace, recursively).
json overlay(json base, const json& patch) {
    if (!patch.is_object()) throw ConfigError("config section must be an object");
    base.merge_patch(patch);
    return base;
}

std::filesystem::path path_or(const json& j, const char* key, const std::filesystem::path& fallback) {
    return j.contains(key) ? std::filesystem::path(j.at(key).get<std::string>()) : fallback;
}

}  // namespace

std::string_view workflow_name(Workflow w) {
    for (const auto& [k, v] : kWorkflowNames) {
        if (k == w) return v;
    }
    throw ConfigError("unknown workflow");
}

Workflow workflow_from_name(std::string_view name) {
    for (const auto& [k, v] : kWorkflowNames) {
        if (v == name) return k;
    }
    throw ConfigError("unknown workflow '" + std::string(name) + "'");
}

Profile profile_from_name(std::string_view name) {
    if (name == "paper") return Profile::paper;
    if (name == "toy") return Profile::toy;
    throw ConfigError("unknown profile '" + std::string(name) + "' (expected 'paper' or 'toy')");
}

void RunConfig::validate() const {
    seg.validate();
    trans.validate();
    weights.validate();
    metric.validate();
    if (seeds.empty()) throw ConfigError("RunConfig.seeds must not be empty");
    if (folds < 2) throw ConfigError("RunConfig.folds must be >= 2");
    if (!(cell_size_km > 0.0)) throw ConfigError("RunConfig.cell_size_km must be > 0");
    if (toy) toy->validate();
}

json RunConfig::to_json() const {
    json j = {{"workflow", std::string(workflow_name(workflow))},
              {"collection", std::string(collection_name(collection))},
              {"paths",
               {{"manifest", paths.manifest.string()},
                {"output", paths.output.string()},
                {"checkpoint", paths.checkpoint.string()},
                {"style", paths.style.string()},
                {"features", paths.features.string()}}},
              {"seg", seg.to_json()},
              {"trans", trans.to_json()},
              {"weights", weights.to_json()},
              {"metric", metric_to_json(metric)},
              {"seeds", seeds},
              {"folds", folds},
              {"cell_size_km", cell_size_km},
              {"segment_on_translated", segment_on_translated}};
    if (toy) j["toy"] = toy->to_json();
    return j;
}

RunConfig RunConfig::from_json(const json& j, const RunConfig& base) {
    if (!j.is_object()) throw ConfigError("run config must be a JSON object");
    RunConfig c = base;
    try {
        if (j.contains("workflow")) c.workflow = workflow_from_name(j.at("workflow").get<std::string>());
        if (j.contains("collection")) {
            try {
                c.collection = collection_from_name(j.at("collection").get<std::string>());
            } catch (const SchemaError& e) {
                throw ConfigError(e.what());
            }
        }
        if (j.contains("paths")) {
            const auto& p = j.at("paths");
            c.paths.manifest = path_or(p, "manifest", c.paths.manifest);
            c.paths.output = path_or(p, "output", c.paths.output);
            c.paths.checkpoint = path_or(p, "checkpoint", c.paths.checkpoint);
            c.paths.style = path_or(p, "style", c.paths.style);
            c.paths.features = path_or(p, "features", c.paths.features);
        }
        if (j.contains("seg")) c.seg = seg::SegConfig::from_json(overlay(base.seg.to_json(), j.at("seg")));
        if (j.contains("trans")) c.trans = trans::TransConfig::from_json(overlay(base.trans.to_json(), j.at("trans")));
        if (j.contains("weights")) {
            c.weights = trans::LossWeights::from_json(overlay(base.weights.to_json(), j.at("weights")));
        }
        if (j.contains("metric")) {
            const json m = overlay(metric_to_json(base.metric), j.at("metric"));
            c.metric.dilation_radius_w = m.at("dilation_radius_w").get<int>();
            c.metric.element = element_from_name(m.at("element").get<std::string>());
            c.metric.exclude_background_from_mean = m.at("exclude_background_from_mean").get<bool>();
        }
        if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        c.folds = j.value("folds", c.folds);
        c.cell_size_km = j.value("cell_size_km", c.cell_size_km);
        c.segment_on_translated = j.value("segment_on_translated", c.segment_on_translated);
        if (j.contains("toy")) {
            const json b = base.toy ? base.toy->to_json() : toy::ToySpec{}.to_json();
            c.toy = toy::ToySpec::from_json(overlay(b, j.at("toy")));
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("run config: ") + e.what());
    }
    c.validate();
    return c;
}

RunConfig RunConfig::for_profile(Profile p, Collection c) {
    RunConfig cfg;
    cfg.collection = c;
    if (p == Profile::paper) {
        cfg.seg = seg::SegConfig::paper(c);
        cfg.trans = trans::TransConfig::paper(cfg.seg.crop_px);
        cfg.folds = 7;
    } else {
        cfg.seg = seg::SegConfig::toy();
        cfg.trans = trans::TransConfig::toy();
        cfg.folds = 2;
        cfg.toy = toy::ToySpec{};
        cfg.toy->historical = c == Collection::modern ? Collection::cassini : c;
    }
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path, std::optional<Profile> profile_override) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path.string() + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config '" + path.string() + "': " + e.what());
    }
    if (!j.is_object()) throw ConfigError("config '" + path.string() + "' must be a JSON object");
    Profile profile = Profile::paper;
    if (j.contains("profile")) profile = profile_from_name(j.at("profile").get<std::string>());
    if (profile_override) profile = *profile_override;
    Collection coll = Collection::cassini;
    if (j.contains("collection")) coll = collection_from_name(j.at("collection").get<std::string>());
    RunConfig cfg = RunConfig::from_json(j, RunConfig::for_profile(profile, coll));
    // Relative paths are relative to the config file.
    const auto dir = path.parent_path();
    for (auto* p : {&cfg.paths.manifest, &cfg.paths.checkpoint, &cfg.paths.style, &cfg.paths.features}) {
        if (!p->empty() && p->is_relative()) *p = dir / *p;
    }
    return cfg;
}

void save_run_config(const RunConfig& cfg, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write config '" + path.string() + "'");
    out << cfg.to_json().dump(2) << '\n';
}

}  // namespace hmseg
