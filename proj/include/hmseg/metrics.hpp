#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hmseg/raster.hpp"

namespace hmseg {

/// Boolean mask of one class over an evaluated raster.
struct ClassMask {
    Mask data;  // 1 channel, values 0/1
    ClassId cls = ClassId::background;

    ClassMask() = default;
    ClassMask(int h, int w, ClassId c = ClassId::background) : data(h, w, 1, 0), cls(c) {}

    [[nodiscard]] int height() const { return data.height; }
    [[nodiscard]] int width() const { return data.width; }
    [[nodiscard]] bool get(int r, int c) const { return data.at(r, c) != 0; }
    void set(int r, int c, bool v = true) { data.at(r, c) = v ? 1 : 0; }
    [[nodiscard]] std::int64_t count() const;

    static ClassMask from_labels(const LabelRaster& labels, ClassId cls);
    friend bool operator==(const ClassMask&, const ClassMask&) = default;
};

enum class StructuringElement { square, disk };

struct MetricConfig {
    int dilation_radius_w = 3;
    StructuringElement element = StructuringElement::square;
    bool exclude_background_from_mean = true;

    void validate() const;
};

/// Morphological dilation by a radius-`w` element (Chebyshev ball for square,
/// Euclidean ball for disk). w = 0 is the identity.
ClassMask dilate(const ClassMask& mask, int w, StructuringElement element = StructuringElement::square);

/// Pixel counts behind one IoU-style ratio; both-empty (union 0) scores 1.
struct RatioCounts {
    std::int64_t numerator = 0;
    std::int64_t denominator = 0;

    [[nodiscard]] double ratio() const {
        return denominator == 0 ? 1.0 : static_cast<double>(numerator) / static_cast<double>(denominator);
    }
    RatioCounts& operator+=(const RatioCounts& o) {
        numerator += o.numerator;
        denominator += o.denominator;
        return *this;
    }
    friend bool operator==(const RatioCounts&, const RatioCounts&) = default;
};

RatioCounts iou_counts(const ClassMask& pred, const ClassMask& truth);
RatioCounts diou_counts(const ClassMask& pred, const ClassMask& truth, const MetricConfig& cfg);

double iou(const ClassMask& pred, const ClassMask& truth);
double diou(const ClassMask& pred, const ClassMask& truth, const MetricConfig& cfg);

using ConfusionMatrix = std::array<std::array<std::int64_t, kNumClasses>, kNumClasses>;  // [truth][pred]

struct MetricReport {
    ConfusionMatrix confusion{};
    std::array<RatioCounts, kNumClasses> diou_counts{};
    bool exclude_background_from_mean = true;

    [[nodiscard]] std::int64_t total() const;
    [[nodiscard]] double oa() const;
    [[nodiscard]] double class_diou(ClassId c) const { return diou_counts[static_cast<std::size_t>(index_of(c))].ratio(); }
    [[nodiscard]] std::array<double, kNumClasses> per_class_diou() const;
    [[nodiscard]] double mean_diou() const;

    friend bool operator==(const MetricReport&, const MetricReport&) = default;
};

/// Mean of per-class scores; background is skipped when `exclude_background`.
double mean_over_classes(const std::array<double, kNumClasses>& per_class, bool exclude_background = true);

MetricReport evaluate_pair(const LabelRaster& pred, const LabelRaster& truth, const MetricConfig& cfg);

/// Micro-average: sums confusion matrices and dIoU pixel counts.
MetricReport aggregate_reports(std::span<const MetricReport> reports);

}  // namespace hmseg
