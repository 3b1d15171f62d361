#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "hmseg/georef.hpp"
#include "hmseg/raster.hpp"

namespace hmseg {

enum class Collection { cassini, etatmajor, scan50, modern };

std::string_view collection_name(Collection c);
Collection collection_from_name(std::string_view name);

inline constexpr double kNominalResolution = 6.77;  // meters per pixel

/// One georeferenced raster patch of a map collection.
struct Tile {
    std::string tile_id;
    Collection collection = Collection::modern;
    Image image;
    Georef georef;
    double resolution_m_per_px = kNominalResolution;

    [[nodiscard]] int height() const { return image.height; }
    [[nodiscard]] int width() const { return image.width; }
    void validate() const;
};

struct ManifestEntry {
    std::string tile_id;
    std::map<Collection, std::filesystem::path> images;
    std::map<Collection, std::filesystem::path> labels;
    std::optional<std::filesystem::path> georef;  // world-file sidecar
    Point2 centroid;                              // projected meters
    bool annotated = false;
};

/// Immutable once validated; paths are stored relative to `root`.
struct Manifest {
    std::filesystem::path root;
    std::vector<ManifestEntry> entries;
    std::set<std::string> annotated_ids;

    [[nodiscard]] const ManifestEntry& entry(std::string_view tile_id) const;
    [[nodiscard]] std::filesystem::path resolve(const std::filesystem::path& p) const;

    /// Checks unique ids and that annotated ids are present.
    void validate() const;
};

/// Parses and validates a JSON manifest; all referenced rasters must exist.
Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);

Tile load_tile(const Manifest& manifest, std::string_view tile_id, Collection collection);
LabelRaster load_label(const Manifest& manifest, std::string_view tile_id, Collection collection);

struct FoldSplit {
    int k = 0;
    std::map<std::string, int> assignment;

    [[nodiscard]] std::vector<std::string> fold_members(int fold) const;
};

/// Sorts annotated tiles by centroid x (ties: y, then id) and cuts k contiguous
/// bands whose sizes differ by at most one. `seed` is accepted for interface
/// uniformity; the banding does not depend on it.
FoldSplit make_folds(const Manifest& manifest, int k, std::uint64_t seed);

struct SupervisedSplit {
    std::vector<std::string> train;
    std::vector<std::string> val;
    std::vector<std::string> test;
};

/// Held-out fold is the test set; the rest is shuffled and split 80/20 with the
/// validation count floored.
SupervisedSplit split_supervised(const FoldSplit& folds, int test_fold, std::uint64_t seed);

struct WeakSplit {
    std::vector<std::string> train;
    std::vector<std::string> val;
};

inline constexpr std::int64_t kWeakTrainShare = 9096;
inline constexpr std::int64_t kWeakValShare = 1386;

/// Validation count for `n` tiles under the 9,096 : 1,386 ratio, rounded half down.
std::int64_t weak_val_count(std::int64_t n);

/// Excludes annotated tiles and splits the rest by the weak-supervision ratio.
WeakSplit split_weak(const Manifest& manifest, std::uint64_t seed);

struct PatchOffset {
    int row = 0;
    int col = 0;
    friend bool operator==(const PatchOffset&, const PatchOffset&) = default;
};

struct Patch {
    Image image;
    std::optional<LabelRaster> labels;
    PatchOffset offset;
};

/// Non-overlapping patch grid over the raster mirror-padded up to a multiple
/// of `patch_px`; label padding is background. Patches are in row-major order.
std::vector<Patch> extract_patches(const Image& image, const LabelRaster* labels, int patch_px);
std::vector<Patch> extract_patches(const Tile& tile, const std::optional<LabelRaster>& labels, int patch_px);

/// Inverse of extract_patches: places patches at their offsets and crops to
/// `height`×`width`.
template <typename T>
Raster<T> stitch(const std::vector<Raster<T>>& patches, const std::vector<PatchOffset>& offsets, int height,
                 int width) {
    if (patches.size() != offsets.size()) {
        throw DimensionError("stitch: patch/offset count mismatch");
    }
    const int channels = patches.empty() ? 1 : patches.front().channels;
    Raster<T> out(height, width, channels);
    for (std::size_t i = 0; i < patches.size(); ++i) {
        const auto& p = patches[i];
        const auto& o = offsets[i];
        for (int r = 0; r < p.height && o.row + r < height; ++r) {
            for (int c = 0; c < p.width && o.col + c < width; ++c) {
                for (int ch = 0; ch < channels; ++ch) {
                    out.at(o.row + r, o.col + c, ch) = p.at(r, c, ch);
                }
            }
        }
    }
    return out;
}

inline int round_up_to_multiple(int v, int m) { return ((v + m - 1) / m) * m; }

}  // namespace hmseg
