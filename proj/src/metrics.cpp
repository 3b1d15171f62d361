#include "hmseg/metrics.hpp"

#include <algorithm>
#include <numeric>

namespace hmseg {

namespace {

void require_same_shape(const ClassMask& a, const ClassMask& b) {
    if (a.height() != b.height() || a.width() != b.width()) {
        throw DimensionError("mask shapes differ: " + std::to_string(a.height()) + "x" + std::to_string(a.width()) +
                             " vs " + std::to_string(b.height()) + "x" + std::to_string(b.width()));
    }
}

// 1-D running-window OR along rows (axis 0) or columns (axis 1).
Mask dilate_axis(const Mask& in, int w, bool along_rows) {
    Mask out(in.height, in.width, 1, 0);
    const int outer = along_rows ? in.height : in.width;
    const int inner = along_rows ? in.width : in.height;
    std::vector<int> prefix(static_cast<std::size_t>(inner) + 1);
    for (int o = 0; o < outer; ++o) {
        prefix[0] = 0;
        for (int i = 0; i < inner; ++i) {
            const auto v = along_rows ? in.at(o, i) : in.at(i, o);
            prefix[static_cast<std::size_t>(i) + 1] = prefix[static_cast<std::size_t>(i)] + (v ? 1 : 0);
        }
        for (int i = 0; i < inner; ++i) {
            const int lo = std::max(0, i - w);
            const int hi = std::min(inner - 1, i + w);
            const bool any = prefix[static_cast<std::size_t>(hi) + 1] - prefix[static_cast<std::size_t>(lo)] > 0;
            (along_rows ? out.at(o, i) : out.at(i, o)) = any ? 1 : 0;
        }
    }
    return out;
}

}  // namespace

std::int64_t ClassMask::count() const {
    return std::count_if(data.data.begin(), data.data.end(), [](std::uint8_t v) { return v != 0; });
}

ClassMask ClassMask::from_labels(const LabelRaster& labels, ClassId cls) {
    ClassMask m(labels.height(), labels.width(), cls);
    const auto v = static_cast<std::uint8_t>(cls);
    for (std::size_t i = 0; i < labels.data.data.size(); ++i) {
        m.data.data[i] = labels.data.data[i] == v ? 1 : 0;
    }
    return m;
}

void MetricConfig::validate() const {
    if (dilation_radius_w < 0) {
        throw ConfigError("dilation radius must be nonnegative");
    }
}

ClassMask dilate(const ClassMask& mask, int w, StructuringElement element) {
    if (w < 0) {
        throw ConfigError("dilation radius must be nonnegative");
    }
    if (w == 0) {
        return mask;
    }
    ClassMask out = mask;
    if (element == StructuringElement::square) {
        out.data = dilate_axis(dilate_axis(mask.data, w, true), w, false);
        return out;
    }
    std::vector<std::pair<int, int>> offsets;
    for (int dr = -w; dr <= w; ++dr) {
        for (int dc = -w; dc <= w; ++dc) {
            if (dr * dr + dc * dc <= w * w) offsets.emplace_back(dr, dc);
        }
    }
    for (int r = 0; r < mask.height(); ++r) {
        for (int c = 0; c < mask.width(); ++c) {
            if (!mask.get(r, c)) continue;
            for (const auto& [dr, dc] : offsets) {
                const int rr = r + dr;
                const int cc = c + dc;
                if (rr >= 0 && rr < mask.height() && cc >= 0 && cc < mask.width()) out.set(rr, cc);
            }
        }
    }
    return out;
}

RatioCounts iou_counts(const ClassMask& pred, const ClassMask& truth) {
    require_same_shape(pred, truth);
    RatioCounts rc;
    for (std::size_t i = 0; i < pred.data.data.size(); ++i) {
        const bool p = pred.data.data[i] != 0;
        const bool t = truth.data.data[i] != 0;
        rc.numerator += (p && t) ? 1 : 0;
        rc.denominator += (p || t) ? 1 : 0;
    }
    return rc;
}

RatioCounts diou_counts(const ClassMask& pred, const ClassMask& truth, const MetricConfig& cfg) {
    require_same_shape(pred, truth);
    const ClassMask dp = dilate(pred, cfg.dilation_radius_w, cfg.element);
    const ClassMask dt = dilate(truth, cfg.dilation_radius_w, cfg.element);
    RatioCounts rc;
    for (std::size_t i = 0; i < pred.data.data.size(); ++i) {
        const bool p = pred.data.data[i] != 0;
        const bool t = truth.data.data[i] != 0;
        const bool hit = (dp.data.data[i] != 0 && t) || (p && dt.data.data[i] != 0);
        rc.numerator += hit ? 1 : 0;
        rc.denominator += (p || t) ? 1 : 0;
    }
    return rc;
}

double iou(const ClassMask& pred, const ClassMask& truth) { return iou_counts(pred, truth).ratio(); }

double diou(const ClassMask& pred, const ClassMask& truth, const MetricConfig& cfg) {
    return diou_counts(pred, truth, cfg).ratio();
}

std::int64_t MetricReport::total() const {
    std::int64_t s = 0;
    for (const auto& row : confusion) s = std::accumulate(row.begin(), row.end(), s);
    return s;
}

double MetricReport::oa() const {
    const std::int64_t n = total();
    if (n == 0) return 1.0;
    std::int64_t trace = 0;
    for (int k = 0; k < kNumClasses; ++k) trace += confusion[static_cast<std::size_t>(k)][static_cast<std::size_t>(k)];
    return static_cast<double>(trace) / static_cast<double>(n);
}

std::array<double, kNumClasses> MetricReport::per_class_diou() const {
    std::array<double, kNumClasses> out{};
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = diou_counts[k].ratio();
    return out;
}

double MetricReport::mean_diou() const { return mean_over_classes(per_class_diou(), exclude_background_from_mean); }

double mean_over_classes(const std::array<double, kNumClasses>& per_class, bool exclude_background) {
    const std::size_t first = exclude_background ? 1 : 0;
    double s = 0.0;
    for (std::size_t k = first; k < per_class.size(); ++k) s += per_class[k];
    return s / static_cast<double>(per_class.size() - first);
}

MetricReport evaluate_pair(const LabelRaster& pred, const LabelRaster& truth, const MetricConfig& cfg) {
    cfg.validate();
    if (pred.height() != truth.height() || pred.width() != truth.width()) {
        throw DimensionError("prediction and truth rasters differ in shape");
    }
    pred.validate();
    truth.validate();
    MetricReport rep;
    rep.exclude_background_from_mean = cfg.exclude_background_from_mean;
    for (std::size_t i = 0; i < pred.data.data.size(); ++i) {
        ++rep.confusion[truth.data.data[i]][pred.data.data[i]];
    }
    for (ClassId c : kAllClasses) {
        rep.diou_counts[static_cast<std::size_t>(index_of(c))] =
            diou_counts(ClassMask::from_labels(pred, c), ClassMask::from_labels(truth, c), cfg);
    }
    return rep;
}

MetricReport aggregate_reports(std::span<const MetricReport> reports) {
    if (reports.empty()) {
        throw DataError("cannot aggregate an empty set of reports");
    }
    MetricReport out;
    out.exclude_background_from_mean = reports.front().exclude_background_from_mean;
    for (const auto& r : reports) {
        for (std::size_t t = 0; t < kNumClasses; ++t) {
            for (std::size_t p = 0; p < kNumClasses; ++p) out.confusion[t][p] += r.confusion[t][p];
        }
        for (std::size_t k = 0; k < kNumClasses; ++k) out.diou_counts[k] += r.diou_counts[k];
    }
    return out;
}

}  // namespace hmseg
