#include "solarspot/geometry.hpp"

#include <algorithm>
#include <array>
#include <numeric>

namespace solarspot {

std::string_view class_name_for(int class_id) {
    static constexpr std::array<std::string_view, kNumClasses> names = {
        "single_cell_hotspot",
        "multi_cell_hotspot",
        "module_hotspot",
    };
    if (class_id < 0 || class_id >= kNumClasses) return "unknown";
    return names[static_cast<std::size_t>(class_id)];
}

double iou(const BBox& a, const BBox& b) {
    const double ix = std::max(a.x, b.x);
    const double iy = std::max(a.y, b.y);
    const double ix2 = std::min(a.right(), b.right());
    const double iy2 = std::min(a.bottom(), b.bottom());
    const double iw = std::max(0.0, ix2 - ix);
    const double ih = std::max(0.0, iy2 - iy);
    const double inter = iw * ih;
    // areas from the same edge arithmetic as the intersection, so a box
    // against itself is exactly 1 and the ratio never exceeds 1
    const double area_a = (a.right() - a.x) * (a.bottom() - a.y);
    const double area_b = (b.right() - b.x) * (b.bottom() - b.y);
    const double uni = area_a + area_b - inter;
    if (uni <= 0.0) return 0.0;
    return inter / uni;
}

std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_threshold) {
    std::vector<std::size_t> order(dets.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return dets[a].score > dets[b].score;
    });

    std::vector<char> suppressed(dets.size(), 0);
    std::vector<Detection> kept;
    for (std::size_t oi = 0; oi < order.size(); ++oi) {
        const std::size_t i = order[oi];
        if (suppressed[i]) continue;
        kept.push_back(dets[i]);
        for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
            const std::size_t j = order[oj];
            if (suppressed[j] || dets[j].class_id != dets[i].class_id) continue;
            if (iou(dets[i].bbox, dets[j].bbox) >= iou_threshold) suppressed[j] = 1;
        }
    }
    return kept;
}

BBox map_box_to_original(const BBox& box, const LetterboxTransform& t) {
    BBox out;
    out.x = (box.x - t.offset_x) / t.scale;
    out.y = (box.y - t.offset_y) / t.scale;
    out.w = box.w / t.scale;
    out.h = box.h / t.scale;

    const double x0 = std::clamp(out.x, 0.0, static_cast<double>(t.src_width));
    const double x1 = std::clamp(out.right(), 0.0, static_cast<double>(t.src_width));
    const double y0 = std::clamp(out.y, 0.0, static_cast<double>(t.src_height));
    const double y1 = std::clamp(out.bottom(), 0.0, static_cast<double>(t.src_height));
    out.x = x0;
    out.y = y0;
    out.w = std::max(0.0, x1 - x0);
    out.h = std::max(0.0, y1 - y0);
    return out;
}

}  // namespace solarspot
