#pragma once

#include <string_view>
#include <vector>

namespace solarspot {

/// Axis-aligned box, top-left origin, half-open [x, x+w) x [y, y+h).
/// Coordinates are pixels or normalized units depending on context.
struct BBox {
    double x = 0.0;
    double y = 0.0;
    double w = 0.0;
    double h = 0.0;

    double area() const { return w * h; }
    double right() const { return x + w; }
    double bottom() const { return y + h; }
};

struct LetterboxTransform {
    double scale = 1.0;
    int offset_x = 0;
    int offset_y = 0;
    int src_width = 0;
    int src_height = 0;
    int dst_width = 0;
    int dst_height = 0;
};

inline constexpr int kNumClasses = 3;

/// Fixed class table shared by every module.
std::string_view class_name_for(int class_id);

struct Detection {
    BBox bbox;
    int class_id = 0;
    double score = 0.0;

    std::string_view class_name() const { return class_name_for(class_id); }
};

/// Intersection-over-union. Returns 0 when the union is empty.
double iou(const BBox& a, const BBox& b);

/// Greedy per-class non-maximum suppression.
///
/// Within each class, boxes are visited in descending score (ties keep the
/// original list order); each kept box suppresses later boxes of the same
/// class whose IoU with it is >= iou_threshold. Output is ordered by
/// descending score, then original index. Classes never suppress each other.
std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_threshold);

/// Map a box from letterboxed (network) pixel coordinates back to the source
/// image, clipping to the source bounds.
BBox map_box_to_original(const BBox& box, const LetterboxTransform& t);

}  // namespace solarspot
