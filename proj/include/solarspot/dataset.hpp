#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "solarspot/thermal_io.hpp"

namespace solarspot {

/// One ground-truth box in darknet convention: normalized center, size.
struct Annotation {
    int class_id = 0;
    double cx = 0.0;
    double cy = 0.0;
    double w = 0.0;
    double h = 0.0;
};

struct AnnotationSet {
    std::string image_id;
    int image_width = 0;
    int image_height = 0;
    std::vector<Annotation> items;
};

/// Prior box sizes in final-feature-grid units, area-ascending.
struct AnchorSet {
    std::vector<std::pair<double, double>> anchors;
    double mean_best_iou = 0.0;
    /// Clustering objective (mean 1 - best IoU) sampled at the start of each
    /// iteration; empty when the set was not produced by kmeans_anchors.
    std::vector<double> objective_trace;
};

struct GlareSpec {
    double center_x = 0.0;  // pixels
    double center_y = 0.0;
    double radius_px = 0.0;
    int delta_counts = 0;
};

struct DefectSpec {
    int class_id = 0;  // 0 single cell, 1 multi cell, 2 module
    int module_row = 0;
    int module_col = 0;
    int cell_row = 0;  // ignored for class 2
    int cell_col = 0;
};

/// Parameters of the synthetic module-grid scene generator.
///
/// Modules are laid out with a 2-px gap between them and around the border;
/// gap pixels sit at base_counts / 2. Defect pixels are raised by
/// hotspot_delta; glare, when present, is a filled circle raised by its own
/// delta and carries no annotation.
struct SynthParams {
    int modules_x = 3;
    int modules_y = 2;
    int cells_x = 6;
    int cells_y = 10;
    int cell_px = 8;
    std::uint16_t base_counts = 3000;
    double noise_sigma = 0.0;
    int hotspot_delta = 800;
    std::vector<DefectSpec> defects;
    std::optional<GlareSpec> glare;
    std::uint64_t seed = 0;

    int module_width_px() const { return cells_x * cell_px; }
    int module_height_px() const { return cells_y * cell_px; }
    int frame_width() const { return modules_x * module_width_px() + (modules_x + 1) * 2; }
    int frame_height() const { return modules_y * module_height_px() + (modules_y + 1) * 2; }
};

/// Parse darknet-style annotation text: one "class cx cy w h" record per
/// line, normalized decimals, blank lines ignored. Throws ParseError with
/// the 1-based line number and the offending field.
AnnotationSet parse_annotations(const std::string& text, const std::string& image_id,
                                int image_width, int image_height);

/// Inverse of parse_annotations, 6 decimals per value.
std::string serialize_annotations(const AnnotationSet& set);

/// Deterministic seeded split. Test gets round(n * test_fraction) ids.
std::pair<std::vector<std::string>, std::vector<std::string>> split_dataset(
    const std::vector<std::string>& ids, double test_fraction, std::uint64_t seed);

/// Horizontal mirror of frame and annotations (cx -> 1 - cx).
std::pair<ThermalFrame, AnnotationSet> hflip_augment(const ThermalFrame& frame,
                                                     const AnnotationSet& ann);

/// Per-pixel affine jitter: clamp(round(v * gain + bias), 0, 65535).
/// Pure for fixed gain/bias; the seed is reserved for randomized ranges.
ThermalFrame intensity_jitter(const ThermalFrame& frame, double gain, double bias,
                              std::uint64_t seed);

/// K-means over box sizes with 1 - IoU distance (sizes co-centered).
///
/// Initial centroids are k distinct sizes picked by the seeded generator;
/// assignment ties break toward the lower anchor index; centroids update to
/// the member mean; iteration stops when assignments stabilize or after 100
/// rounds. An empty cluster keeps its previous centroid. Output anchors are
/// scaled to grid units and sorted by area ascending.
AnchorSet kmeans_anchors(const std::vector<std::pair<double, double>>& boxes, int k, int grid_w,
                         int grid_h, std::uint64_t seed);

/// Render a synthetic thermal scene plus its exact ground truth.
///
/// Draw order from the seed: one run-length draw per class-1 defect (in
/// list order), then one gaussian per pixel in row-major order when
/// noise_sigma > 0. Class-1 defects extend horizontally from the start
/// cell, falling back to vertical when fewer than two cells fit.
std::pair<ThermalFrame, AnnotationSet> synth_scene(const SynthParams& params);

struct ManifestEntry {
    std::string image_path;
    std::string annotation_path;  // may be empty for detection-only runs
};

/// Read a "image_path<TAB>annotation_path" manifest. Relative paths are kept
/// as written; callers resolve them against the manifest's directory.
std::vector<ManifestEntry> parse_manifest(const std::string& text);

std::string serialize_manifest(const std::vector<ManifestEntry>& entries);

}  // namespace solarspot
