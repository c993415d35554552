#include "solarspot/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "solarspot/dataset.hpp"
#include "solarspot/detector.hpp"
#include "solarspot/errors.hpp"
#include "solarspot/evalreport.hpp"
#include "solarspot/geometry.hpp"
#include "solarspot/inference.hpp"
#include "solarspot/rng.hpp"
#include "solarspot/thermal_io.hpp"

namespace fs = std::filesystem;

namespace solarspot::cli {

namespace {

std::vector<std::uint8_t> read_binary(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("cannot read " + path.string());
    return bytes;
}

std::string read_text(const fs::path& path) {
    const auto bytes = read_binary(path);
    return std::string(bytes.begin(), bytes.end());
}

void write_atomic(const fs::path& path, const void* data, std::size_t size) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
        if (!out) throw IoError("short write to " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " +
                          ec.message());
}

void write_atomic(const fs::path& path, const std::string& text) {
    write_atomic(path, text.data(), text.size());
}

void write_atomic(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
    write_atomic(path, bytes.data(), bytes.size());
}

fs::path resolve_against(const fs::path& base_dir, const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path : base_dir / path;
}

std::pair<double, double> parse_pair(const std::string& text, const std::string& flag) {
    double a = 0.0, b = 0.0;
    char extra = 0;
    if (std::sscanf(text.c_str(), "%lf,%lf%c", &a, &b, &extra) != 2)
        throw CLI::ValidationError(flag, "expected two comma-separated numbers, got '" + text +
                                             "'");
    return {a, b};
}

std::vector<std::pair<double, double>> parse_anchor_list(const std::string& text) {
    std::vector<std::pair<double, double>> anchors;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t end = text.find(';', start);
        if (end == std::string::npos) end = text.size();
        const std::string item = text.substr(start, end - start);
        if (!item.empty()) anchors.push_back(parse_pair(item, "--anchors"));
        if (end == text.size()) break;
        start = end + 1;
    }
    if (anchors.empty())
        throw CLI::ValidationError("--anchors", "expected \"w,h;w,h;...\", got '" + text + "'");
    return anchors;
}

std::string anchor_file_text(const AnchorSet& set) {
    std::string out;
    char buf[96];
    for (const auto& [w, h] : set.anchors) {
        std::snprintf(buf, sizeof(buf), "%.6f,%.6f\n", w, h);
        out += buf;
    }
    return out;
}

std::vector<std::pair<double, double>> parse_anchor_file(const std::string& text) {
    std::vector<std::pair<double, double>> anchors;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        double w = 0.0, h = 0.0;
        char extra = 0;
        if (std::sscanf(line.c_str(), "%lf,%lf%c", &w, &h, &extra) != 2)
            throw ParseError("anchor file line " + std::to_string(line_no) +
                             ": expected \"w,h\", got '" + line + "'");
        anchors.emplace_back(w, h);
    }
    if (anchors.empty()) throw ParseError("anchor file holds no anchors");
    return anchors;
}

struct ManifestImage {
    std::string id;  // image filename stem
    fs::path image_path;
    fs::path annotation_path;  // empty when absent
};

std::vector<ManifestImage> load_manifest(const fs::path& manifest_path) {
    const fs::path base = fs::absolute(manifest_path).parent_path();
    const auto entries = parse_manifest(read_text(manifest_path));
    std::vector<ManifestImage> images;
    images.reserve(entries.size());
    for (const ManifestEntry& e : entries) {
        ManifestImage m;
        m.image_path = resolve_against(base, e.image_path);
        m.id = m.image_path.stem().string();
        if (!e.annotation_path.empty()) m.annotation_path = resolve_against(base, e.annotation_path);
        images.push_back(std::move(m));
    }
    for (std::size_t i = 0; i < images.size(); ++i)
        for (std::size_t j = i + 1; j < images.size(); ++j)
            if (images[i].id == images[j].id)
                throw DuplicateImageId("manifest image id '" + images[i].id +
                                       "' appears more than once");
    return images;
}

/// Median of all pixel values via the 16-bit histogram (lower median for
/// even counts).
int median_counts(const ThermalFrame& frame) {
    std::vector<std::uint32_t> hist(65536, 0);
    for (const std::uint16_t v : frame.pixels) ++hist[v];
    const std::size_t target = (frame.pixels.size() + 1) / 2;
    std::size_t seen = 0;
    for (int v = 0; v < 65536; ++v) {
        seen += hist[v];
        if (seen >= target) return v;
    }
    return 0;
}

void run_jobs(std::size_t job_count, int threads, const std::function<void(std::size_t)>& job) {
    if (threads <= 1) {
        for (std::size_t i = 0; i < job_count; ++i) job(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> stop{false};
    std::mutex error_mutex;
    std::exception_ptr first_error;
    auto worker = [&] {
        while (!stop.load()) {
            const std::size_t i = next.fetch_add(1);
            if (i >= job_count) break;
            try {
                job(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                stop.store(true);
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

// ---- subcommand option blocks -------------------------------------------

struct StretchOpts {
    std::string in_path;
    std::string out_path;
    std::string stretch = "1,99";
};

struct AnchorsOpts {
    std::string manifest;
    std::string out_path;
    int k = 5;
    std::string grid = "13,13";
    std::uint64_t seed = 0;
};

struct SynthOpts {
    std::string out_dir;
    int count = 1;
    std::uint64_t seed = 0;
    double noise = 0.0;
    int delta = 800;
    int base = 3000;
    int defects = -1;  // -1: 1..3 drawn per scene
    bool glare = false;
};

struct DetectOpts {
    std::string manifest;
    std::string out_dir;
    std::string cfg;
    std::string weights;
    std::string anchors;
    std::string anchors_file;
    bool baseline = false;
    double conf = 0.25;
    double nms_iou = 0.45;
    std::string stretch = "1,99";
    int threads = 1;
    int base = -1;  // -1: per-image median
    int delta_threshold = 400;
    int cell_px = 8;
};

struct EvalOpts {
    std::string detections_dir;
    std::string manifest;
    double iou_threshold = 0.5;
    std::string out_path;
    std::string pr_csv;
};

struct ReportOpts {
    std::string detections_dir;
    std::string manifest;
    std::string config_path;
    std::string out_path;
};

// ---- subcommand bodies ---------------------------------------------------

int run_stretch(const StretchOpts& o) {
    const auto [lo, hi] = parse_pair(o.stretch, "--stretch");
    const ThermalFrame frame = load_tiff(read_binary(o.in_path));
    const Image8 image = contrast_stretch(frame, lo, hi);
    write_atomic(o.out_path, encode_pnm(image));

    nlohmann::ordered_json summary;
    summary["command"] = "stretch";
    summary["in"] = o.in_path;
    summary["out"] = o.out_path;
    summary["width"] = image.width;
    summary["height"] = image.height;
    std::cout << summary.dump() << "\n";
    return 0;
}

int run_anchors(const AnchorsOpts& o) {
    const auto [gw, gh] = parse_pair(o.grid, "--grid");
    if (gw < 1 || gh < 1) throw CLI::ValidationError("--grid", "grid dims must be >= 1");

    const auto images = load_manifest(o.manifest);
    std::vector<std::pair<double, double>> boxes;
    for (const ManifestImage& m : images) {
        if (m.annotation_path.empty()) continue;
        const auto set = parse_annotations(read_text(m.annotation_path), m.id, 0, 0);
        for (const Annotation& a : set.items) boxes.emplace_back(a.w, a.h);
    }
    const AnchorSet set =
        kmeans_anchors(boxes, o.k, static_cast<int>(gw), static_cast<int>(gh), o.seed);
    write_atomic(o.out_path, anchor_file_text(set));

    nlohmann::ordered_json summary;
    summary["command"] = "anchors";
    summary["out"] = o.out_path;
    summary["k"] = o.k;
    summary["boxes"] = boxes.size();
    summary["mean_best_iou"] = set.mean_best_iou;
    summary["iterations"] = set.objective_trace.size();
    std::cout << summary.dump() << "\n";
    return 0;
}

int run_synth(const SynthOpts& o) {
    const fs::path out_dir(o.out_dir);
    fs::create_directories(out_dir);

    SeededRng master(o.seed);
    std::vector<ManifestEntry> manifest;
    for (int i = 0; i < o.count; ++i) {
        SynthParams p;
        p.noise_sigma = o.noise;
        p.hotspot_delta = o.delta;
        p.base_counts = static_cast<std::uint16_t>(o.base);

        const int module_slots = p.modules_x * p.modules_y;
        const int wanted = o.defects >= 0 ? o.defects : 1 + static_cast<int>(master.uniform_index(3));
        const int n_defects = std::min(wanted, module_slots);

        std::vector<std::pair<int, int>> slots;
        for (int r = 0; r < p.modules_y; ++r)
            for (int c = 0; c < p.modules_x; ++c) slots.emplace_back(r, c);
        master.shuffle(slots);
        for (int d = 0; d < n_defects; ++d) {
            DefectSpec spec;
            spec.class_id = static_cast<int>(master.uniform_index(3));
            spec.module_row = slots[d].first;
            spec.module_col = slots[d].second;
            spec.cell_row = static_cast<int>(master.uniform_index(p.cells_y));
            spec.cell_col = static_cast<int>(master.uniform_index(p.cells_x));
            p.defects.push_back(spec);
        }
        if (o.glare) {
            GlareSpec g;
            g.center_x = master.uniform_real() * p.frame_width();
            g.center_y = master.uniform_real() * p.frame_height();
            g.radius_px = 6.0 + master.uniform_real() * 10.0;
            g.delta_counts = o.delta;
            p.glare = g;
        }
        p.seed = master.next_u64();

        auto [frame, ann] = synth_scene(p);
        char name[32];
        std::snprintf(name, sizeof(name), "scene_%04d", i);
        ann.image_id = name;

        const std::string tiff_name = std::string(name) + ".tiff";
        const std::string txt_name = std::string(name) + ".txt";
        write_atomic(out_dir / tiff_name, write_tiff(frame));
        write_atomic(out_dir / txt_name, serialize_annotations(ann));
        manifest.push_back({tiff_name, txt_name});
    }
    write_atomic(out_dir / "manifest.txt", serialize_manifest(manifest));

    nlohmann::ordered_json summary;
    summary["command"] = "synth";
    summary["out"] = o.out_dir;
    summary["count"] = o.count;
    summary["seed"] = o.seed;
    summary["manifest"] = (out_dir / "manifest.txt").string();
    std::cout << summary.dump() << "\n";
    return 0;
}

int run_detect(const DetectOpts& o) {
    const auto [lo, hi] = parse_pair(o.stretch, "--stretch");
    const auto images = load_manifest(o.manifest);
    const fs::path out_dir(o.out_dir);
    fs::create_directories(out_dir);

    NetworkModel model;
    HeadParams params;
    if (!o.baseline) {
        if (o.cfg.empty() || o.weights.empty())
            throw CLI::ValidationError("detect",
                                       "either --baseline or both --cfg and --weights required");
        model = parse_cfg(read_text(o.cfg));
        load_weights(model, read_binary(o.weights));
        params = head_params_from_model(model, o.conf, o.nms_iou);
        std::vector<std::pair<double, double>> override_anchors;
        if (!o.anchors.empty()) override_anchors = parse_anchor_list(o.anchors);
        if (!o.anchors_file.empty()) override_anchors = parse_anchor_file(read_text(o.anchors_file));
        if (!override_anchors.empty()) {
            if (override_anchors.size() != std::size_t(params.num_anchors))
                throw ParseError("anchor override has " + std::to_string(override_anchors.size()) +
                                 " sizes, the model head expects " +
                                 std::to_string(params.num_anchors));
            params.anchors = std::move(override_anchors);
        }
    }

    std::vector<std::size_t> det_counts(images.size(), 0);
    run_jobs(images.size(), o.threads, [&](std::size_t i) {
        const ManifestImage& m = images[i];
        const ThermalFrame frame = load_tiff(read_binary(m.image_path));

        DetectionFile file;
        file.image = m.id;
        file.width = frame.width;
        file.height = frame.height;
        if (o.baseline) {
            const int base = o.base >= 0 ? o.base : median_counts(frame);
            file.detections = baseline_detect(frame, base, o.delta_threshold, o.cell_px);
        } else {
            file.detections = detect_image(model, frame, params, lo, hi);
        }
        det_counts[i] = file.detections.size();
        write_atomic(out_dir / (m.id + ".json"), detections_to_json(file));
    });

    std::size_t total = 0;
    for (const std::size_t n : det_counts) total += n;
    nlohmann::ordered_json summary;
    summary["command"] = "detect";
    summary["mode"] = o.baseline ? "baseline" : "model";
    summary["images"] = images.size();
    summary["detections"] = total;
    summary["out"] = o.out_dir;
    std::cout << summary.dump() << "\n";
    return 0;
}

std::vector<std::pair<std::string, std::vector<Detection>>> load_detection_files(
    const fs::path& detections_dir, const std::vector<ManifestImage>& images,
    std::vector<DetectionFile>* files_out) {
    std::vector<std::pair<std::string, std::vector<Detection>>> dets;
    for (const ManifestImage& m : images) {
        const fs::path path = detections_dir / (m.id + ".json");
        DetectionFile file = parse_detection_json(read_text(path));
        dets.emplace_back(m.id, file.detections);
        if (files_out) files_out->push_back(std::move(file));
    }
    return dets;
}

int run_eval(const EvalOpts& o) {
    const auto images = load_manifest(o.manifest);
    std::vector<DetectionFile> files;
    const auto dets = load_detection_files(o.detections_dir, images, &files);

    std::vector<AnnotationSet> truths;
    for (std::size_t i = 0; i < images.size(); ++i) {
        const ManifestImage& m = images[i];
        AnnotationSet set;
        set.image_id = m.id;
        set.image_width = files[i].width;
        set.image_height = files[i].height;
        if (!m.annotation_path.empty() && fs::exists(m.annotation_path))
            set = parse_annotations(read_text(m.annotation_path), m.id, files[i].width,
                                    files[i].height);
        truths.push_back(std::move(set));
    }

    const EvalResult result = evaluate(dets, truths, o.iou_threshold);
    const std::string json = eval_to_json(result);
    if (!o.out_path.empty()) write_atomic(o.out_path, json);
    if (!o.pr_csv.empty()) write_atomic(o.pr_csv, pr_to_csv(result));
    std::cout << json;
    return 0;
}

int run_report(const ReportOpts& o) {
    const auto images = load_manifest(o.manifest);
    const auto dets = load_detection_files(o.detections_dir, images, nullptr);
    const ReportConfig config = parse_report_config(read_text(o.config_path));
    const std::string json = build_report(dets, config);
    if (!o.out_path.empty()) write_atomic(o.out_path, json);
    std::cout << json;
    return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"Thermal PV hotspot detection toolkit", "solarspot"};
    app.require_subcommand(1);

    StretchOpts stretch_opts;
    auto* stretch_cmd =
        app.add_subcommand("stretch", "Contrast-stretch a 16-bit TIFF to an 8-bit PGM");
    stretch_cmd->add_option("--in", stretch_opts.in_path, "input TIFF")->required();
    stretch_cmd->add_option("--out", stretch_opts.out_path, "output PGM")->required();
    stretch_cmd->add_option("--stretch", stretch_opts.stretch, "percentiles LO,HI")
        ->capture_default_str();

    AnchorsOpts anchors_opts;
    auto* anchors_cmd =
        app.add_subcommand("anchors", "Cluster annotation box sizes into anchors");
    anchors_cmd->add_option("--manifest", anchors_opts.manifest, "image/annotation manifest")
        ->required();
    anchors_cmd->add_option("--out", anchors_opts.out_path, "anchor file to write")->required();
    anchors_cmd->add_option("--k", anchors_opts.k, "number of anchors")
        ->check(CLI::Range(1, 64))
        ->capture_default_str();
    anchors_cmd->add_option("--grid", anchors_opts.grid, "head grid W,H")->capture_default_str();
    anchors_cmd->add_option("--seed", anchors_opts.seed, "clustering seed")->capture_default_str();

    SynthOpts synth_opts;
    auto* synth_cmd = app.add_subcommand("synth", "Generate synthetic scenes with ground truth");
    synth_cmd->add_option("--out", synth_opts.out_dir, "output directory")->required();
    synth_cmd->add_option("--count", synth_opts.count, "number of scenes")
        ->check(CLI::Range(1, 1000000))
        ->capture_default_str();
    synth_cmd->add_option("--seed", synth_opts.seed, "generator seed")->capture_default_str();
    synth_cmd->add_option("--noise", synth_opts.noise, "gaussian noise sigma in counts")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    synth_cmd->add_option("--delta", synth_opts.delta, "hotspot delta in counts")
        ->check(CLI::Range(1, 65535))
        ->capture_default_str();
    synth_cmd->add_option("--base", synth_opts.base, "background level in counts")
        ->check(CLI::Range(0, 65535))
        ->capture_default_str();
    synth_cmd->add_option("--defects", synth_opts.defects,
                          "defects per scene (-1 draws 1..3 at random)")
        ->check(CLI::Range(-1, 6))
        ->capture_default_str();
    synth_cmd->add_flag("--glare", synth_opts.glare, "add an unannotated glare circle");

    DetectOpts detect_opts;
    auto* detect_cmd = app.add_subcommand("detect", "Run detection over a manifest");
    detect_cmd->add_option("--manifest", detect_opts.manifest, "image manifest")->required();
    detect_cmd->add_option("--out", detect_opts.out_dir, "directory for detection JSON files")
        ->required();
    detect_cmd->add_option("--cfg", detect_opts.cfg, "network description");
    detect_cmd->add_option("--weights", detect_opts.weights, "darknet weight file");
    detect_cmd->add_flag("--baseline", detect_opts.baseline, "use the rule-based detector");
    detect_cmd->add_option("--conf", detect_opts.conf, "confidence threshold")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    detect_cmd->add_option("--nms", detect_opts.nms_iou, "NMS IoU threshold")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    detect_cmd->add_option("--stretch", detect_opts.stretch, "percentiles LO,HI")
        ->capture_default_str();
    detect_cmd->add_option("--anchors", detect_opts.anchors, "anchor override \"w,h;w,h;...\"");
    detect_cmd->add_option("--anchors-file", detect_opts.anchors_file, "anchor override file");
    detect_cmd->add_option("--threads", detect_opts.threads, "worker threads")
        ->check(CLI::Range(1, 256))
        ->capture_default_str();
    detect_cmd->add_option("--base", detect_opts.base,
                           "baseline background level (-1: per-image median)")
        ->check(CLI::Range(-1, 65535))
        ->capture_default_str();
    detect_cmd->add_option("--delta-threshold", detect_opts.delta_threshold,
                           "baseline excess threshold in counts")
        ->check(CLI::Range(1, 65535))
        ->capture_default_str();
    detect_cmd->add_option("--cell-px", detect_opts.cell_px, "baseline cell size in pixels")
        ->check(CLI::Range(1, 4096))
        ->capture_default_str();

    EvalOpts eval_opts;
    auto* eval_cmd = app.add_subcommand("eval", "Score detections against annotations");
    eval_cmd->add_option("--detections", eval_opts.detections_dir, "detection JSON directory")
        ->required();
    eval_cmd->add_option("--manifest", eval_opts.manifest, "image/annotation manifest")
        ->required();
    eval_cmd->add_option("--iou", eval_opts.iou_threshold, "matching IoU threshold")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    eval_cmd->add_option("--out", eval_opts.out_path, "write the result JSON here too");
    eval_cmd->add_option("--pr-csv", eval_opts.pr_csv, "write PR points as CSV");

    ReportOpts report_opts;
    auto* report_cmd = app.add_subcommand("report", "Summarize detections as a defect report");
    report_cmd->add_option("--detections", report_opts.detections_dir, "detection JSON directory")
        ->required();
    report_cmd->add_option("--manifest", report_opts.manifest, "image manifest")->required();
    report_cmd->add_option("--report-config", report_opts.config_path,
                           "JSON with per-class losses and the homes denominator")
        ->required();
    report_cmd->add_option("--out", report_opts.out_path, "write the report JSON here too");

    std::vector<const char*> argv;
    argv.reserve(args.size() + 1);
    argv.push_back("solarspot");
    for (const std::string& a : args) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (*stretch_cmd) return run_stretch(stretch_opts);
        if (*anchors_cmd) return run_anchors(anchors_opts);
        if (*synth_cmd) return run_synth(synth_opts);
        if (*detect_cmd) return run_detect(detect_opts);
        if (*eval_cmd) return run_eval(eval_opts);
        if (*report_cmd) return run_report(report_opts);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 3;
    }
    return 3;
}

}  // namespace solarspot::cli
