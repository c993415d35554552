#include "solarspot/detector.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "json.hpp"
#include "solarspot/errors.hpp"

namespace solarspot {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double logit(double p) { return std::log(p / (1.0 - p)); }

double clamp_unit_open(double p) { return std::clamp(p, 1e-12, 1.0 - 1e-12); }

double size_iou(double aw, double ah, double bw, double bh) {
    const double inter = std::min(aw, bw) * std::min(ah, bh);
    const double uni = aw * ah + bw * bh - inter;
    if (uni <= 0.0) return 0.0;
    return inter / uni;
}

void sort_for_output(std::vector<Detection>& dets) {
    std::stable_sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.class_id != b.class_id) return a.class_id < b.class_id;
        return a.bbox.x < b.bbox.x;
    });
}

double round6(double v) { return std::round(v * 1e6) / 1e6; }

}  // namespace

HeadParams head_params_from_model(const NetworkModel& model, double conf_threshold,
                                  double nms_threshold) {
    const LayerSpec& head = model.head();
    if (head.kind != LayerKind::RegionHead)
        throw ShapeMismatch("model does not end in a region head");
    HeadParams p;
    p.grid_w = head.in_width;
    p.grid_h = head.in_height;
    p.num_anchors = head.num_anchors;
    p.classes = head.classes;
    p.anchors = head.anchors;
    p.conf_threshold = conf_threshold;
    p.nms_threshold = nms_threshold;
    return p;
}

std::vector<Detection> decode_head(const Tensor& raw, const HeadParams& params) {
    const int B = params.num_anchors;
    const int C = params.classes;
    if (B < 1 || C < 1 || static_cast<int>(params.anchors.size()) != B)
        throw ShapeMismatch("head parameters need num_anchors >= 1 matching anchor sizes");
    if (raw.channels != B * (5 + C) || raw.height != params.grid_h || raw.width != params.grid_w)
        throw ShapeMismatch("raw tensor is " + std::to_string(raw.channels) + "x" +
                            std::to_string(raw.height) + "x" + std::to_string(raw.width) +
                            ", head expects " + std::to_string(B * (5 + C)) + "x" +
                            std::to_string(params.grid_h) + "x" + std::to_string(params.grid_w));

    std::vector<Detection> out;
    std::vector<double> probs(C);
    for (int i = 0; i < params.grid_h; ++i)
        for (int j = 0; j < params.grid_w; ++j)
            for (int a = 0; a < B; ++a) {
                const int base = a * (5 + C);
                const double tx = raw.at(base + 0, i, j);
                const double ty = raw.at(base + 1, i, j);
                const double tw = raw.at(base + 2, i, j);
                const double th = raw.at(base + 3, i, j);
                const double to = raw.at(base + 4, i, j);

                double max_logit = raw.at(base + 5, i, j);
                for (int k = 1; k < C; ++k)
                    max_logit = std::max(max_logit, double(raw.at(base + 5 + k, i, j)));
                double denom = 0.0;
                for (int k = 0; k < C; ++k) {
                    probs[k] = std::exp(raw.at(base + 5 + k, i, j) - max_logit);
                    denom += probs[k];
                }

                const double bx = (sigmoid(tx) + j) / params.grid_w;
                const double by = (sigmoid(ty) + i) / params.grid_h;
                const double bw = params.anchors[a].first * std::exp(tw) / params.grid_w;
                const double bh = params.anchors[a].second * std::exp(th) / params.grid_h;
                const double objectness = sigmoid(to);

                for (int k = 0; k < C; ++k) {
                    const double score = objectness * (probs[k] / denom);
                    if (score < params.conf_threshold) continue;
                    Detection d;
                    d.bbox = {bx - bw / 2, by - bh / 2, bw, bh};
                    d.class_id = k;
                    d.score = score;
                    out.push_back(d);
                }
            }
    return out;
}

Tensor encode_head(const std::vector<EncodedBox>& boxes, const HeadParams& params) {
    const int B = params.num_anchors;
    const int C = params.classes;
    if (B < 1 || C < 1 || static_cast<int>(params.anchors.size()) != B)
        throw ShapeMismatch("head parameters need num_anchors >= 1 matching anchor sizes");

    Tensor raw = Tensor::zeros(B * (5 + C), params.grid_h, params.grid_w);
    for (int i = 0; i < params.grid_h; ++i)
        for (int j = 0; j < params.grid_w; ++j)
            for (int a = 0; a < B; ++a) raw.at(a * (5 + C) + 4, i, j) = -20.0f;

    std::vector<bool> occupied(std::size_t(params.grid_h) * params.grid_w * B, false);
    for (const EncodedBox& box : boxes) {
        const int j = std::clamp(static_cast<int>(std::floor(box.cx * params.grid_w)), 0,
                                 params.grid_w - 1);
        const int i = std::clamp(static_cast<int>(std::floor(box.cy * params.grid_h)), 0,
                                 params.grid_h - 1);
        const double gw = box.w * params.grid_w;
        const double gh = box.h * params.grid_h;
        int a = 0;
        double best = -1.0;
        for (int cand = 0; cand < B; ++cand) {
            const double v =
                size_iou(gw, gh, params.anchors[cand].first, params.anchors[cand].second);
            if (v > best) {
                best = v;
                a = cand;
            }
        }
        const std::size_t slot = (std::size_t(i) * params.grid_w + j) * B + a;
        if (occupied[slot])
            throw SlotCollision("cell (" + std::to_string(i) + "," + std::to_string(j) +
                                ") anchor " + std::to_string(a) + " already holds a box");
        occupied[slot] = true;

        const int base = a * (5 + C);
        raw.at(base + 0, i, j) =
            static_cast<float>(logit(clamp_unit_open(box.cx * params.grid_w - j)));
        raw.at(base + 1, i, j) =
            static_cast<float>(logit(clamp_unit_open(box.cy * params.grid_h - i)));
        raw.at(base + 2, i, j) = static_cast<float>(std::log(gw / params.anchors[a].first));
        raw.at(base + 3, i, j) = static_cast<float>(std::log(gh / params.anchors[a].second));
        raw.at(base + 4, i, j) = static_cast<float>(logit(clamp_unit_open(box.objectness)));
        raw.at(base + 5 + box.class_id, i, j) = 10.0f;
    }
    return raw;
}

std::vector<Detection> detect_image(const NetworkModel& model, const ThermalFrame& frame,
                                    const HeadParams& params, double lo_pct, double hi_pct) {
    if (model.input_channels != 1)
        throw ShapeMismatch("detect_image expects a 1-channel model, got " +
                            std::to_string(model.input_channels) + " input channels");

    const Image8 stretched = contrast_stretch(frame, lo_pct, hi_pct);
    const auto [boxed, transform] = letterbox(stretched, model.input_width, model.input_height);

    Tensor input = Tensor::zeros(1, boxed.height, boxed.width);
    for (std::size_t i = 0; i < boxed.pixels.size(); ++i)
        input.data[i] = boxed.pixels[i] / 255.0f;

    const Tensor raw = forward(model, input);
    std::vector<Detection> dets = decode_head(raw, params);
    dets = nms(dets, params.nms_threshold);

    for (Detection& d : dets) {
        BBox net_px{d.bbox.x * model.input_width, d.bbox.y * model.input_height,
                    d.bbox.w * model.input_width, d.bbox.h * model.input_height};
        d.bbox = map_box_to_original(net_px, transform);
    }
    sort_for_output(dets);
    return dets;
}

std::vector<Detection> baseline_detect(const ThermalFrame& frame, int base_estimate,
                                       int delta_threshold, int cell_px, int cells_x,
                                       int cells_y) {
    const int w = frame.width;
    const int h = frame.height;
    const std::int64_t threshold = std::int64_t(base_estimate) + delta_threshold;

    std::vector<Detection> out;
    std::vector<std::uint8_t> visited(std::size_t(w) * h, 0);
    std::vector<std::size_t> stack;

    const double cell_area = double(cell_px) * cell_px;
    const double module_area = cell_area * cells_x * cells_y;

    for (std::size_t start = 0; start < visited.size(); ++start) {
        if (visited[start] || frame.pixels[start] <= threshold) continue;

        std::size_t count = 0;
        double excess_sum = 0.0;
        int min_x = w, max_x = -1, min_y = h, max_y = -1;
        visited[start] = 1;
        stack.assign(1, start);
        while (!stack.empty()) {
            const std::size_t idx = stack.back();
            stack.pop_back();
            const int x = static_cast<int>(idx % w);
            const int y = static_cast<int>(idx / w);
            ++count;
            excess_sum += double(frame.pixels[idx]) - base_estimate;
            min_x = std::min(min_x, x);
            max_x = std::max(max_x, x);
            min_y = std::min(min_y, y);
            max_y = std::max(max_y, y);

            const std::size_t neighbors[4] = {idx - 1, idx + 1, idx - w, idx + w};
            const bool valid[4] = {x > 0, x + 1 < w, y > 0, y + 1 < h};
            for (int n = 0; n < 4; ++n) {
                if (!valid[n]) continue;
                const std::size_t ni = neighbors[n];
                if (!visited[ni] && frame.pixels[ni] > threshold) {
                    visited[ni] = 1;
                    stack.push_back(ni);
                }
            }
        }

        Detection d;
        d.bbox = {double(min_x), double(min_y), double(max_x - min_x + 1),
                  double(max_y - min_y + 1)};
        const double area = static_cast<double>(count);
        if (area <= 1.5 * cell_area)
            d.class_id = 0;
        else if (area <= 0.5 * module_area)
            d.class_id = 1;
        else
            d.class_id = 2;
        d.score = std::min(1.0, (excess_sum / area) / (2.0 * delta_threshold));
        out.push_back(d);
    }
    sort_for_output(out);
    return out;
}

std::string detections_to_json(const DetectionFile& file) {
    nlohmann::ordered_json root;
    root["image"] = file.image;
    root["width"] = file.width;
    root["height"] = file.height;

    std::vector<Detection> dets = file.detections;
    sort_for_output(dets);

    auto& arr = root["detections"] = nlohmann::ordered_json::array();
    for (const Detection& d : dets) {
        nlohmann::ordered_json item;
        item["class_id"] = d.class_id;
        item["class_name"] = std::string(d.class_name());
        item["score"] = round6(d.score);
        item["bbox"] = {{"x", d.bbox.x}, {"y", d.bbox.y}, {"w", d.bbox.w}, {"h", d.bbox.h}};
        arr.push_back(std::move(item));
    }
    return root.dump(2) + "\n";
}

DetectionFile parse_detection_json(const std::string& text) {
    nlohmann::json root;
    try {
        root = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("detection JSON: ") + e.what());
    }
    DetectionFile file;
    try {
        file.image = root.at("image").get<std::string>();
        file.width = root.at("width").get<int>();
        file.height = root.at("height").get<int>();
        for (const auto& item : root.at("detections")) {
            Detection d;
            d.class_id = item.at("class_id").get<int>();
            d.score = item.at("score").get<double>();
            const auto& bb = item.at("bbox");
            d.bbox = {bb.at("x").get<double>(), bb.at("y").get<double>(),
                      bb.at("w").get<double>(), bb.at("h").get<double>()};
            file.detections.push_back(d);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("detection JSON: ") + e.what());
    }
    return file;
}

}  // namespace solarspot
