#pragma once

#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "masktrack/error.hpp"
#include "masktrack/mask.hpp"

namespace masktrack {

/// Intersection over union. Both masks empty counts as a perfect 1; exactly
/// one empty counts as 0.
inline double jaccard(const BinaryMask& pred, const BinaryMask& gt) {
    if (pred.size() != gt.size()) throw DataError("jaccard: mask sizes differ");
    std::int64_t intersection = 0;
    std::int64_t uni = 0;
    const auto& a = pred.bits();
    const auto& b = gt.bits();
    for (std::size_t i = 0; i < a.size(); ++i) {
        intersection += a[i] & b[i];
        uni += a[i] | b[i];
    }
    if (uni == 0) return 1.0;
    return static_cast<double>(intersection) / static_cast<double>(uni);
}

/// Set pixels with at least one 4-neighbor unset or lying on the frame edge.
inline std::vector<std::pair<int, int>> boundary_pixels(const BinaryMask& mask) {
    std::vector<std::pair<int, int>> boundary;
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            if (!mask.at(x, y)) continue;
            const bool edge = x == 0 || y == 0 || x == mask.width() - 1 || y == mask.height() - 1;
            if (edge || !mask.at(x - 1, y) || !mask.at(x + 1, y) || !mask.at(x, y - 1) ||
                !mask.at(x, y + 1)) {
                boundary.emplace_back(x, y);
            }
        }
    }
    return boundary;
}

namespace detail {
inline double matched_fraction(const std::vector<std::pair<int, int>>& from,
                               const std::vector<std::pair<int, int>>& to, double tolerance) {
    if (from.empty()) return 0.0;
    const double tol_sq = tolerance * tolerance;
    std::int64_t matched = 0;
    for (const auto& [fx, fy] : from) {
        for (const auto& [tx, ty] : to) {
            const double dx = fx - tx;
            const double dy = fy - ty;
            if (dx * dx + dy * dy <= tol_sq) {
                ++matched;
                break;
            }
        }
    }
    return static_cast<double>(matched) / static_cast<double>(from.size());
}
}  // namespace detail

/// Boundary F-measure: precision is the fraction of predicted boundary
/// pixels within `tolerance` (Euclidean, in pixels) of the ground-truth
/// boundary, recall the converse, F their harmonic mean. Both masks empty
/// scores 1, exactly one empty scores 0.
inline double boundary_f(const BinaryMask& pred, const BinaryMask& gt, double tolerance) {
    if (pred.size() != gt.size()) throw DataError("boundary_f: mask sizes differ");
    if (tolerance < 0.0) throw ConfigError("boundary_f: tolerance must be >= 0");
    const bool pred_empty = mask_area(pred) == 0;
    const bool gt_empty = mask_area(gt) == 0;
    if (pred_empty && gt_empty) return 1.0;
    if (pred_empty || gt_empty) return 0.0;

    const auto pred_boundary = boundary_pixels(pred);
    const auto gt_boundary = boundary_pixels(gt);
    const double precision = detail::matched_fraction(pred_boundary, gt_boundary, tolerance);
    const double recall = detail::matched_fraction(gt_boundary, pred_boundary, tolerance);
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

/// Default matching tolerance: 1% of the frame diagonal, rounded up.
inline double default_boundary_tolerance(FrameSize size) {
    const double diagonal = std::sqrt(static_cast<double>(size.width) * size.width +
                                      static_cast<double>(size.height) * size.height);
    return std::ceil(0.01 * diagonal);
}

struct ObjectMetrics {
    int id = 0;
    double j = 0.0;
    double f = 0.0;
};

struct MetricReport {
    double j = 0.0;
    double f = 0.0;
    double jf = 0.0;  // always exactly (j + f) / 2
    std::vector<ObjectMetrics> per_object;
};

/// Per-object J and F averaged over frames, then averaged over objects.
inline MetricReport evaluate_sequence(std::span<const LabelGrid> preds,
                                      std::span<const LabelGrid> gts, int num_objects,
                                      double tolerance) {
    if (preds.size() != gts.size())
        throw DataError("evaluate_sequence: prediction and ground-truth frame counts differ");
    if (preds.empty()) throw DataError("evaluate_sequence: no frames");
    if (num_objects < 1) throw DataError("evaluate_sequence: need at least one object id");
    for (std::size_t t = 0; t < preds.size(); ++t)
        if (preds[t].size() != gts[t].size())
            throw DataError("evaluate_sequence: frame size mismatch at frame " + std::to_string(t));

    MetricReport report;
    for (int id = 1; id <= num_objects; ++id) {
        double sum_j = 0.0;
        double sum_f = 0.0;
        for (std::size_t t = 0; t < preds.size(); ++t) {
            const BinaryMask pred = object_mask(preds[t], id);
            const BinaryMask gt = object_mask(gts[t], id);
            sum_j += jaccard(pred, gt);
            sum_f += boundary_f(pred, gt, tolerance);
        }
        ObjectMetrics object;
        object.id = id;
        object.j = sum_j / static_cast<double>(preds.size());
        object.f = sum_f / static_cast<double>(preds.size());
        report.per_object.push_back(object);
    }
    for (const auto& object : report.per_object) {
        report.j += object.j;
        report.f += object.f;
    }
    report.j /= static_cast<double>(report.per_object.size());
    report.f /= static_cast<double>(report.per_object.size());
    report.jf = (report.j + report.f) / 2.0;
    return report;
}

}  // namespace masktrack
