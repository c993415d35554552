#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "solarspot/dataset.hpp"
#include "solarspot/geometry.hpp"

namespace solarspot {

/// Outcome of one detection under VOC-style greedy matching.
struct MatchRecord {
    std::string image_id;
    int class_id = 0;
    double score = 0.0;
    bool is_tp = false;
    std::optional<std::size_t> matched_truth_index;

    bool operator==(const MatchRecord&) const = default;
};

struct ClassCounts {
    int n_truth = 0;
    int n_tp = 0;
    int n_fp = 0;
};

struct EvalResult {
    std::array<double, kNumClasses> per_class_ap{};
    double mean_ap = 0.0;
    std::array<std::vector<std::pair<double, double>>, kNumClasses> pr_points;  // (recall, precision)
    std::array<ClassCounts, kNumClasses> counts{};
};

struct ReportConfig {
    std::array<double, kNumClasses> per_class_power_loss_watts{};
    double homes_equivalent_watts = 0.0;
};

/// Pixel-space box of one annotation.
BBox annotation_to_bbox(const Annotation& a, int image_width, int image_height);

/// Greedy per-class matching: detections in descending score order (ties
/// keep list order) claim their best-IoU unmatched same-class truth when
/// that IoU reaches the threshold. Record i describes detection i.
std::vector<MatchRecord> match_detections(const std::vector<Detection>& dets,
                                          const AnnotationSet& truths, double iou_threshold);

/// Area under the precision envelope (all-point interpolation) for one
/// class. With no truths: 1.0 when there are no false positives, else 0.0.
double average_precision(const std::vector<MatchRecord>& records, int n_truth);

/// Pool match records across images and compute per-class AP, mAP, counts
/// and PR points. A class with no truths and no detections anywhere counts
/// as AP 1. Throws DuplicateImageId on repeated ids in either list.
EvalResult evaluate(const std::vector<std::pair<std::string, std::vector<Detection>>>& dets_per_image,
                    const std::vector<AnnotationSet>& truths_per_image, double iou_threshold);

std::string eval_to_json(const EvalResult& result);

/// PR points as "class,recall,precision" CSV.
std::string pr_to_csv(const EvalResult& result);

/// Parse and validate {"per_class_power_loss_watts": [w0, w1, w2],
/// "homes_equivalent_watts": w}. Throws ParseError on malformed or
/// out-of-range values.
ReportConfig parse_report_config(const std::string& text);

/// Defect-report JSON: per-image class counts and loss estimate, totals,
/// homes equivalent (2 decimals) and the config echoed back.
std::string build_report(
    const std::vector<std::pair<std::string, std::vector<Detection>>>& dets_per_image,
    const ReportConfig& config);

}  // namespace solarspot
