#include "solarspot/evalreport.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "json.hpp"
#include "solarspot/errors.hpp"

namespace solarspot {

namespace {

int clamp_class(int class_id) { return std::clamp(class_id, 0, kNumClasses - 1); }

}  // namespace

BBox annotation_to_bbox(const Annotation& a, int image_width, int image_height) {
    return {(a.cx - a.w / 2) * image_width, (a.cy - a.h / 2) * image_height, a.w * image_width,
            a.h * image_height};
}

std::vector<MatchRecord> match_detections(const std::vector<Detection>& dets,
                                          const AnnotationSet& truths, double iou_threshold) {
    std::vector<BBox> truth_boxes;
    truth_boxes.reserve(truths.items.size());
    for (const Annotation& a : truths.items)
        truth_boxes.push_back(annotation_to_bbox(a, truths.image_width, truths.image_height));

    std::vector<std::size_t> order(dets.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return dets[a].score > dets[b].score;
    });

    std::vector<bool> truth_used(truths.items.size(), false);
    std::vector<MatchRecord> records(dets.size());
    for (const std::size_t di : order) {
        const Detection& d = dets[di];
        MatchRecord rec;
        rec.image_id = truths.image_id;
        rec.class_id = d.class_id;
        rec.score = d.score;

        double best_iou = 0.0;
        std::size_t best_t = 0;
        bool found = false;
        for (std::size_t t = 0; t < truth_boxes.size(); ++t) {
            if (truth_used[t] || truths.items[t].class_id != d.class_id) continue;
            const double v = iou(d.bbox, truth_boxes[t]);
            if (v > best_iou) {
                best_iou = v;
                best_t = t;
                found = true;
            }
        }
        if (found && best_iou >= iou_threshold) {
            truth_used[best_t] = true;
            rec.is_tp = true;
            rec.matched_truth_index = best_t;
        }
        records[di] = std::move(rec);
    }
    return records;
}

double average_precision(const std::vector<MatchRecord>& records, int n_truth) {
    if (n_truth == 0) {
        for (const MatchRecord& r : records)
            if (!r.is_tp) return 0.0;
        return 1.0;
    }

    std::vector<MatchRecord> sorted = records;
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const MatchRecord& a, const MatchRecord& b) { return a.score > b.score; });

    std::vector<double> recalls(sorted.size()), precisions(sorted.size());
    int tp = 0, fp = 0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        sorted[i].is_tp ? ++tp : ++fp;
        recalls[i] = double(tp) / n_truth;
        precisions[i] = double(tp) / (tp + fp);
    }
    if (tp == 0) return 0.0;

    double ap = 0.0;
    double envelope = 0.0;
    for (std::size_t i = sorted.size(); i-- > 0;) {
        envelope = std::max(envelope, precisions[i]);
        const double prev = i == 0 ? 0.0 : recalls[i - 1];
        if (recalls[i] > prev) ap += (recalls[i] - prev) * envelope;
    }
    return ap;
}

EvalResult evaluate(
    const std::vector<std::pair<std::string, std::vector<Detection>>>& dets_per_image,
    const std::vector<AnnotationSet>& truths_per_image, double iou_threshold) {
    std::map<std::string, const AnnotationSet*> truth_by_id;
    for (const AnnotationSet& t : truths_per_image)
        if (!truth_by_id.emplace(t.image_id, &t).second)
            throw DuplicateImageId("annotation image id '" + t.image_id + "' appears twice");

    struct Pooled {
        MatchRecord rec;
        std::size_t index_in_image = 0;
    };
    std::array<std::vector<Pooled>, kNumClasses> pooled;

    std::set<std::string> seen_det_ids;
    for (const auto& [image_id, dets] : dets_per_image) {
        if (!seen_det_ids.insert(image_id).second)
            throw DuplicateImageId("detection image id '" + image_id + "' appears twice");

        AnnotationSet empty;
        empty.image_id = image_id;
        const auto it = truth_by_id.find(image_id);
        const AnnotationSet& truths = it != truth_by_id.end() ? *it->second : empty;

        auto records = match_detections(dets, truths, iou_threshold);
        for (std::size_t i = 0; i < records.size(); ++i) {
            MatchRecord& r = records[i];
            r.image_id = image_id;
            pooled[clamp_class(r.class_id)].push_back({std::move(r), i});
        }
    }

    EvalResult result;
    for (const AnnotationSet& t : truths_per_image)
        for (const Annotation& a : t.items) ++result.counts[clamp_class(a.class_id)].n_truth;

    double ap_sum = 0.0;
    for (int c = 0; c < kNumClasses; ++c) {
        auto& records = pooled[c];
        std::sort(records.begin(), records.end(), [](const Pooled& a, const Pooled& b) {
            if (a.rec.score != b.rec.score) return a.rec.score > b.rec.score;
            if (a.rec.image_id != b.rec.image_id) return a.rec.image_id < b.rec.image_id;
            return a.index_in_image < b.index_in_image;
        });

        std::vector<MatchRecord> flat;
        flat.reserve(records.size());
        for (auto& p : records) {
            p.rec.is_tp ? ++result.counts[c].n_tp : ++result.counts[c].n_fp;
            flat.push_back(std::move(p.rec));
        }

        const int n_truth = result.counts[c].n_truth;
        int tp = 0, fp = 0;
        for (const MatchRecord& r : flat) {
            r.is_tp ? ++tp : ++fp;
            result.pr_points[c].emplace_back(n_truth > 0 ? double(tp) / n_truth : 0.0,
                                             double(tp) / (tp + fp));
        }

        result.per_class_ap[c] = average_precision(flat, n_truth);
        ap_sum += result.per_class_ap[c];
    }
    result.mean_ap = ap_sum / kNumClasses;
    return result;
}

std::string eval_to_json(const EvalResult& result) {
    nlohmann::ordered_json root;
    root["per_class_ap"] = result.per_class_ap;
    root["map"] = result.mean_ap;
    auto& counts = root["counts"] = nlohmann::ordered_json::object();
    for (int c = 0; c < kNumClasses; ++c)
        counts[std::to_string(c)] = {{"n_truth", result.counts[c].n_truth},
                                     {"n_tp", result.counts[c].n_tp},
                                     {"n_fp", result.counts[c].n_fp}};
    auto& pr = root["pr"] = nlohmann::ordered_json::object();
    for (int c = 0; c < kNumClasses; ++c) {
        auto& points = pr[std::to_string(c)] = nlohmann::ordered_json::array();
        for (const auto& [r, p] : result.pr_points[c]) points.push_back({r, p});
    }
    return root.dump(2) + "\n";
}

std::string pr_to_csv(const EvalResult& result) {
    std::string out = "class,recall,precision\n";
    char buf[96];
    for (int c = 0; c < kNumClasses; ++c)
        for (const auto& [r, p] : result.pr_points[c]) {
            std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f\n", c, r, p);
            out += buf;
        }
    return out;
}

ReportConfig parse_report_config(const std::string& text) {
    nlohmann::json root;
    try {
        root = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("report config: ") + e.what());
    }
    ReportConfig config;
    try {
        const auto& losses = root.at("per_class_power_loss_watts");
        if (!losses.is_array() || losses.size() != kNumClasses)
            throw ParseError("report config: per_class_power_loss_watts must hold " +
                             std::to_string(kNumClasses) + " values");
        for (int c = 0; c < kNumClasses; ++c)
            config.per_class_power_loss_watts[c] = losses[c].get<double>();
        config.homes_equivalent_watts = root.at("homes_equivalent_watts").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("report config: ") + e.what());
    }
    for (const double w : config.per_class_power_loss_watts)
        if (!std::isfinite(w) || w < 0.0)
            throw ParseError("report config: per-class losses must be finite and nonnegative");
    if (!std::isfinite(config.homes_equivalent_watts) || config.homes_equivalent_watts <= 0.0)
        throw ParseError("report config: homes_equivalent_watts must be positive");
    return config;
}

std::string build_report(
    const std::vector<std::pair<std::string, std::vector<Detection>>>& dets_per_image,
    const ReportConfig& config) {
    nlohmann::ordered_json root;
    auto& images = root["images"] = nlohmann::ordered_json::array();

    std::array<long long, kNumClasses> total_counts{};
    double total_loss = 0.0;
    for (const auto& [image_id, dets] : dets_per_image) {
        std::array<long long, kNumClasses> counts{};
        for (const Detection& d : dets) ++counts[clamp_class(d.class_id)];

        double loss = 0.0;
        nlohmann::ordered_json counts_json;
        for (int c = 0; c < kNumClasses; ++c) {
            counts_json[std::to_string(c)] = counts[c];
            loss += counts[c] * config.per_class_power_loss_watts[c];
            total_counts[c] += counts[c];
        }
        total_loss += loss;

        images.push_back({{"image", image_id},
                          {"counts", std::move(counts_json)},
                          {"estimated_loss_watts", loss}});
    }

    nlohmann::ordered_json totals_counts;
    for (int c = 0; c < kNumClasses; ++c) totals_counts[std::to_string(c)] = total_counts[c];
    root["totals"] = {
        {"counts", std::move(totals_counts)},
        {"estimated_loss_watts", total_loss},
        {"homes_equivalent",
         std::round(total_loss / config.homes_equivalent_watts * 100.0) / 100.0}};
    root["config"] = {{"per_class_power_loss_watts", config.per_class_power_loss_watts},
                      {"homes_equivalent_watts", config.homes_equivalent_watts}};
    return root.dump(2) + "\n";
}

}  // namespace solarspot
