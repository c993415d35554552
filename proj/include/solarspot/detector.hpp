#pragma once

#include <string>
#include <utility>
#include <vector>

#include "solarspot/geometry.hpp"
#include "solarspot/inference.hpp"
#include "solarspot/thermal_io.hpp"

namespace solarspot {

/// Region-head geometry plus the two decoding thresholds.
struct HeadParams {
    int grid_w = 0;  // S_w
    int grid_h = 0;  // S_h
    int num_anchors = 0;
    int classes = kNumClasses;
    std::vector<std::pair<double, double>> anchors;  // grid units
    double conf_threshold = 0.25;
    double nms_threshold = 0.45;
};

/// Read grid size, anchor set and class count off the model's region head.
HeadParams head_params_from_model(const NetworkModel& model, double conf_threshold = 0.25,
                                  double nms_threshold = 0.45);

/// A ground-truth box destined for one head slot, used to build raw tensors
/// with known content.
struct EncodedBox {
    int class_id = 0;
    double cx = 0.0;  // normalized center
    double cy = 0.0;
    double w = 0.0;  // normalized size
    double h = 0.0;
    double objectness = 0.9;  // must be strictly inside (0,1)
};

/// Decode a raw head tensor into thresholded detections in normalized
/// coordinates (no suppression). For cell (i,j) and anchor (p_w, p_h):
/// center = ((sigmoid(t_x)+j)/S_w, (sigmoid(t_y)+i)/S_h), size =
/// (p_w*exp(t_w)/S_w, p_h*exp(t_h)/S_h), per-class score =
/// sigmoid(t_o) * softmax(class logits).
std::vector<Detection> decode_head(const Tensor& raw, const HeadParams& params);

/// Exact inverse of decode_head for test tensors: each box lands in the cell
/// holding its center and its best-IoU anchor; empty slots get objectness
/// logit -20; the target class gets logit 10, the rest 0. Throws
/// SlotCollision when two boxes need the same slot.
Tensor encode_head(const std::vector<EncodedBox>& boxes, const HeadParams& params);

/// Full pipeline on one frame: contrast stretch, letterbox to the model
/// input, scale to [0,1], forward, decode, per-class NMS, map back to frame
/// pixels. Output is sorted by descending score, then class, then x.
std::vector<Detection> detect_image(const NetworkModel& model, const ThermalFrame& frame,
                                    const HeadParams& params, double lo_pct = 1.0,
                                    double hi_pct = 99.0);

/// Network-free reference detector: threshold at base_estimate +
/// delta_threshold, 4-connected components, class by component area
/// (<= 1.5 cell areas: single cell; <= half a module: multi cell; else
/// module), score = min(1, mean excess over base / (2 * delta_threshold)).
std::vector<Detection> baseline_detect(const ThermalFrame& frame, int base_estimate,
                                       int delta_threshold, int cell_px, int cells_x = 6,
                                       int cells_y = 10);

/// Per-image detection record as written by the detect command.
struct DetectionFile {
    std::string image;
    int width = 0;
    int height = 0;
    std::vector<Detection> detections;
};

/// Serialize to the detection JSON schema (scores to 6 decimals, detections
/// ordered by score descending, then class, then x).
std::string detections_to_json(const DetectionFile& file);

/// Parse the detection JSON schema; throws ParseError on malformed input.
DetectionFile parse_detection_json(const std::string& text);

}  // namespace solarspot
