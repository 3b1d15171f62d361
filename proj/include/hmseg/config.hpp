#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "hmseg/corpus.hpp"
#include "hmseg/metrics.hpp"
#include "hmseg/segnet.hpp"
#include "hmseg/toygen.hpp"
#include "hmseg/translator.hpp"

namespace hmseg {

enum class Workflow { supervised_cv, weak_direct, weak_translate, evaluate, forest_density, toygen, stylize };

std::string_view workflow_name(Workflow w);
Workflow workflow_from_name(std::string_view name);

enum class Profile { paper, toy };

Profile profile_from_name(std::string_view name);

struct RunPaths {
    std::filesystem::path manifest;
    std::filesystem::path output = "runs";
    std::filesystem::path checkpoint;  // optional input checkpoint
    std::filesystem::path style;       // optional StyleSpec file
    std::filesystem::path features;    // optional vector-feature directory
};

/// One declarative run description. Every field is explicit in the frozen
/// copy written next to the run's artifacts.
struct RunConfig {
    Workflow workflow = Workflow::supervised_cv;
    Collection collection = Collection::cassini;  // historical collection under study
    RunPaths paths;
    seg::SegConfig seg;
    trans::TransConfig trans;
    trans::LossWeights weights;
    MetricConfig metric;
    std::vector<std::uint64_t> seeds{0, 1, 2};
    int folds = 7;
    double cell_size_km = 10.0;  // forest-density grid
    std::optional<toy::ToySpec> toy;
    /// Translate mode: train the segmenter on gen_xy(historical) with modern
    /// labels instead of on synthetic modern maps.
    bool segment_on_translated = false;

    void validate() const;
    [[nodiscard]] nlohmann::json to_json() const;
    /// Fields absent from `j` take the values of `base`.
    static RunConfig from_json(const nlohmann::json& j, const RunConfig& base);

    /// Sub-configurations of the named profile.
    static RunConfig for_profile(Profile p, Collection c = Collection::cassini);
};

/// Reads a JSON config; the optional "profile" key ("paper" or "toy") selects
/// the base that absent fields fall back to, `profile_override` wins over it.
RunConfig load_run_config(const std::filesystem::path& path, std::optional<Profile> profile_override = {});
void save_run_config(const RunConfig& cfg, const std::filesystem::path& path);

}  // namespace hmseg
