#include "solarspot/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "solarspot/errors.hpp"
#include "solarspot/rng.hpp"

namespace solarspot {

namespace {

std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

double parse_double_field(const std::string& tok, int line_no, const char* field) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || ptr != tok.data() + tok.size())
        throw ParseError("line " + std::to_string(line_no) + ": field '" + field +
                         "' is not a number: '" + tok + "'");
    return v;
}

double iou_of_sizes(double aw, double ah, double bw, double bh) {
    const double inter = std::min(aw, bw) * std::min(ah, bh);
    const double uni = aw * ah + bw * bh - inter;
    if (uni <= 0.0) return 0.0;
    return inter / uni;
}

}  // namespace

AnnotationSet parse_annotations(const std::string& text, const std::string& image_id,
                                int image_width, int image_height) {
    AnnotationSet set;
    set.image_id = image_id;
    set.image_width = image_width;
    set.image_height = image_height;

    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto fields = split_ws(line);
        if (fields.empty()) continue;
        if (fields.size() != 5)
            throw ParseError("line " + std::to_string(line_no) + ": expected 5 fields, got " +
                             std::to_string(fields.size()));

        Annotation a;
        {
            int cls = 0;
            const auto [ptr, ec] =
                std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), cls);
            if (ec != std::errc{} || ptr != fields[0].data() + fields[0].size())
                throw ParseError("line " + std::to_string(line_no) +
                                 ": field 'class' is not an integer: '" + fields[0] + "'");
            if (cls < 0 || cls > 2)
                throw ParseError("line " + std::to_string(line_no) + ": field 'class' is " +
                                 std::to_string(cls) + ", must be 0, 1 or 2");
            a.class_id = cls;
        }
        a.cx = parse_double_field(fields[1], line_no, "cx");
        a.cy = parse_double_field(fields[2], line_no, "cy");
        a.w = parse_double_field(fields[3], line_no, "w");
        a.h = parse_double_field(fields[4], line_no, "h");

        if (a.w <= 0.0 || a.h <= 0.0)
            throw ParseError("line " + std::to_string(line_no) + ": box size must be positive");
        constexpr double eps = 1e-9;
        if (a.cx - a.w / 2 < -eps || a.cx + a.w / 2 > 1.0 + eps || a.cy - a.h / 2 < -eps ||
            a.cy + a.h / 2 > 1.0 + eps)
            throw ParseError("line " + std::to_string(line_no) + ": box outside the unit square");
        set.items.push_back(a);
    }
    return set;
}

std::string serialize_annotations(const AnnotationSet& set) {
    std::string out;
    char buf[160];
    for (const Annotation& a : set.items) {
        std::snprintf(buf, sizeof(buf), "%d %.6f %.6f %.6f %.6f\n", a.class_id, a.cx, a.cy, a.w,
                      a.h);
        out += buf;
    }
    return out;
}

std::pair<std::vector<std::string>, std::vector<std::string>> split_dataset(
    const std::vector<std::string>& ids, double test_fraction, std::uint64_t seed) {
    std::vector<std::string> shuffled = ids;
    SeededRng rng(seed);
    rng.shuffle(shuffled);

    const std::size_t n_test = static_cast<std::size_t>(
        round_half_up(static_cast<double>(ids.size()) * test_fraction));
    std::vector<std::string> test(shuffled.begin(), shuffled.begin() + n_test);
    std::vector<std::string> train(shuffled.begin() + n_test, shuffled.end());
    return {std::move(train), std::move(test)};
}

std::pair<ThermalFrame, AnnotationSet> hflip_augment(const ThermalFrame& frame,
                                                     const AnnotationSet& ann) {
    if (ann.image_width != frame.width || ann.image_height != frame.height)
        throw DimensionMismatch("annotation set is " + std::to_string(ann.image_width) + "x" +
                                std::to_string(ann.image_height) + ", frame is " +
                                std::to_string(frame.width) + "x" + std::to_string(frame.height));

    ThermalFrame flipped;
    flipped.width = frame.width;
    flipped.height = frame.height;
    flipped.pixels.resize(frame.pixels.size());
    for (int y = 0; y < frame.height; ++y)
        for (int x = 0; x < frame.width; ++x)
            flipped.pixels[std::size_t(y) * frame.width + x] = frame.at(frame.width - 1 - x, y);

    AnnotationSet out = ann;
    for (Annotation& a : out.items) a.cx = 1.0 - a.cx;
    return {std::move(flipped), std::move(out)};
}

ThermalFrame intensity_jitter(const ThermalFrame& frame, double gain, double bias,
                              std::uint64_t /*seed*/) {
    ThermalFrame out;
    out.width = frame.width;
    out.height = frame.height;
    out.pixels.resize(frame.pixels.size());
    for (std::size_t i = 0; i < frame.pixels.size(); ++i) {
        const double v = frame.pixels[i] * gain + bias;
        out.pixels[i] =
            static_cast<std::uint16_t>(std::clamp<long long>(round_half_up(v), 0, 65535));
    }
    return out;
}

AnchorSet kmeans_anchors(const std::vector<std::pair<double, double>>& boxes, int k, int grid_w,
                         int grid_h, std::uint64_t seed) {
    std::set<std::pair<double, double>> distinct_set(boxes.begin(), boxes.end());
    if (static_cast<int>(distinct_set.size()) < k)
        throw InsufficientDistinctBoxes("need " + std::to_string(k) + " distinct sizes, have " +
                                        std::to_string(distinct_set.size()));

    std::vector<std::pair<double, double>> distinct(distinct_set.begin(), distinct_set.end());
    SeededRng rng(seed);
    rng.shuffle(distinct);
    std::vector<std::pair<double, double>> centroids(distinct.begin(), distinct.begin() + k);

    const std::size_t n = boxes.size();
    std::vector<int> assignment(n, -1);
    std::vector<double> trace;
    std::vector<std::pair<double, double>> prev_centroids = centroids;

    for (int iter = 0; iter < 100; ++iter) {
        std::vector<int> next(n);
        double total_dist = 0.0;
        for (std::size_t b = 0; b < n; ++b) {
            int best = 0;
            double best_dist = 2.0;
            for (int a = 0; a < k; ++a) {
                const double d = 1.0 - iou_of_sizes(boxes[b].first, boxes[b].second,
                                                    centroids[a].first, centroids[a].second);
                if (d < best_dist) {
                    best_dist = d;
                    best = a;
                }
            }
            next[b] = best;
            total_dist += best_dist;
        }
        const double objective = total_dist / static_cast<double>(n);

        // the mean update is not guaranteed to lower an IoU objective; when it
        // makes things worse, keep the previous centroids and stop
        if (!trace.empty() && objective > trace.back()) {
            centroids = prev_centroids;
            break;
        }
        trace.push_back(objective);

        if (next == assignment) break;
        assignment = std::move(next);
        prev_centroids = centroids;

        std::vector<double> base_w(k, 0.0), base_h(k, 0.0);
        std::vector<double> delta_w(k, 0.0), delta_h(k, 0.0);
        std::vector<std::size_t> count(k, 0);
        for (std::size_t b = 0; b < n; ++b) {
            const int a = assignment[b];
            if (count[a] == 0) {
                base_w[a] = boxes[b].first;
                base_h[a] = boxes[b].second;
            }
            // mean accumulated relative to the first member, so a cluster of
            // identical sizes keeps that size bit-for-bit
            delta_w[a] += boxes[b].first - base_w[a];
            delta_h[a] += boxes[b].second - base_h[a];
            ++count[a];
        }
        for (int a = 0; a < k; ++a) {
            if (count[a] > 0)
                centroids[a] = {base_w[a] + delta_w[a] / static_cast<double>(count[a]),
                                base_h[a] + delta_h[a] / static_cast<double>(count[a])};
            // an empty cluster keeps its previous centroid
        }
    }

    double iou_sum = 0.0;
    for (const auto& [bw, bh] : boxes) {
        double best = 0.0;
        for (const auto& [cw, chh] : centroids) best = std::max(best, iou_of_sizes(bw, bh, cw, chh));
        iou_sum += best;
    }

    AnchorSet out;
    for (const auto& [cw, chh] : centroids) out.anchors.emplace_back(cw * grid_w, chh * grid_h);
    std::sort(out.anchors.begin(), out.anchors.end(), [](const auto& a, const auto& b) {
        const double aa = a.first * a.second;
        const double ab = b.first * b.second;
        if (aa != ab) return aa < ab;
        return a < b;
    });
    out.mean_best_iou = iou_sum / static_cast<double>(boxes.size());
    out.objective_trace = std::move(trace);
    return out;
}

std::pair<ThermalFrame, AnnotationSet> synth_scene(const SynthParams& p) {
    const int W = p.frame_width();
    const int H = p.frame_height();
    const int mod_w = p.module_width_px();
    const int mod_h = p.module_height_px();
    const std::int32_t gap_value = p.base_counts / 2;

    std::vector<std::int32_t> canvas(std::size_t(W) * H, gap_value);

    auto module_origin = [&](int row, int col) -> std::pair<int, int> {
        return {2 + col * (mod_w + 2), 2 + row * (mod_h + 2)};
    };
    auto fill_rect = [&](int x0, int y0, int w, int h, std::int32_t value, bool add) {
        for (int y = y0; y < y0 + h; ++y)
            for (int x = x0; x < x0 + w; ++x) {
                auto& px = canvas[std::size_t(y) * W + x];
                px = add ? px + value : value;
            }
    };

    for (int r = 0; r < p.modules_y; ++r)
        for (int c = 0; c < p.modules_x; ++c) {
            const auto [x0, y0] = module_origin(r, c);
            fill_rect(x0, y0, mod_w, mod_h, p.base_counts, false);
        }

    SeededRng rng(p.seed);
    AnnotationSet ann;
    ann.image_width = W;
    ann.image_height = H;

    for (const DefectSpec& d : p.defects) {
        const auto [mx, my] = module_origin(d.module_row, d.module_col);
        int x0 = 0, y0 = 0, w = 0, h = 0;
        switch (d.class_id) {
            case 0:
                x0 = mx + d.cell_col * p.cell_px;
                y0 = my + d.cell_row * p.cell_px;
                w = p.cell_px;
                h = p.cell_px;
                break;
            case 1: {
                const int n = 2 + static_cast<int>(rng.uniform_index(3));
                int run = std::min(n, p.cells_x - d.cell_col);
                if (run >= 2) {
                    x0 = mx + d.cell_col * p.cell_px;
                    y0 = my + d.cell_row * p.cell_px;
                    w = run * p.cell_px;
                    h = p.cell_px;
                } else {
                    run = std::min(n, p.cells_y - d.cell_row);
                    x0 = mx + d.cell_col * p.cell_px;
                    y0 = my + d.cell_row * p.cell_px;
                    w = p.cell_px;
                    h = run * p.cell_px;
                }
                break;
            }
            default:
                x0 = mx;
                y0 = my;
                w = mod_w;
                h = mod_h;
                break;
        }
        fill_rect(x0, y0, w, h, p.hotspot_delta, true);

        Annotation a;
        a.class_id = d.class_id;
        a.cx = (x0 + w / 2.0) / W;
        a.cy = (y0 + h / 2.0) / H;
        a.w = static_cast<double>(w) / W;
        a.h = static_cast<double>(h) / H;
        ann.items.push_back(a);
    }

    if (p.glare) {
        const GlareSpec& g = *p.glare;
        const double r2 = g.radius_px * g.radius_px;
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const double dx = (x + 0.5) - g.center_x;
                const double dy = (y + 0.5) - g.center_y;
                if (dx * dx + dy * dy <= r2) canvas[std::size_t(y) * W + x] += g.delta_counts;
            }
    }

    ThermalFrame frame;
    frame.width = W;
    frame.height = H;
    frame.pixels.resize(canvas.size());
    if (p.noise_sigma > 0.0) {
        for (std::size_t i = 0; i < canvas.size(); ++i) {
            const double v = canvas[i] + rng.gaussian() * p.noise_sigma;
            frame.pixels[i] =
                static_cast<std::uint16_t>(std::clamp<long long>(round_half_up(v), 0, 65535));
        }
    } else {
        for (std::size_t i = 0; i < canvas.size(); ++i)
            frame.pixels[i] = static_cast<std::uint16_t>(std::clamp<std::int32_t>(canvas[i], 0, 65535));
    }
    return {std::move(frame), std::move(ann)};
}

std::vector<ManifestEntry> parse_manifest(const std::string& text) {
    std::vector<ManifestEntry> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ManifestEntry e;
        const std::size_t tab = line.find('\t');
        if (tab == std::string::npos) {
            e.image_path = line;
        } else {
            e.image_path = line.substr(0, tab);
            e.annotation_path = line.substr(tab + 1);
        }
        out.push_back(std::move(e));
    }
    return out;
}

std::string serialize_manifest(const std::vector<ManifestEntry>& entries) {
    std::string out;
    for (const ManifestEntry& e : entries) {
        out += e.image_path;
        if (!e.annotation_path.empty()) {
            out += '\t';
            out += e.annotation_path;
        }
        out += '\n';
    }
    return out;
}

}  // namespace solarspot
