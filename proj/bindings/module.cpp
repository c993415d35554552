#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "solarspot/dataset.hpp"
#include "solarspot/detector.hpp"
#include "solarspot/errors.hpp"
#include "solarspot/evalreport.hpp"
#include "solarspot/geometry.hpp"
#include "solarspot/inference.hpp"
#include "solarspot/thermal_io.hpp"

namespace py = pybind11;
using namespace solarspot;

namespace {

using U16Array = py::array_t<std::uint16_t, py::array::c_style | py::array::forcecast>;
using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

ThermalFrame frame_from_array(const U16Array& array) {
    if (array.ndim() != 2) throw py::value_error("expected a 2-D uint16 array (height, width)");
    ThermalFrame frame;
    frame.height = static_cast<int>(array.shape(0));
    frame.width = static_cast<int>(array.shape(1));
    frame.pixels.resize(static_cast<std::size_t>(frame.width) * frame.height);
    std::memcpy(frame.pixels.data(), array.data(), frame.pixels.size() * sizeof(std::uint16_t));
    return frame;
}

py::array_t<std::uint16_t> array_from_frame(const ThermalFrame& frame) {
    py::array_t<std::uint16_t> array({frame.height, frame.width});
    std::memcpy(array.mutable_data(), frame.pixels.data(),
                frame.pixels.size() * sizeof(std::uint16_t));
    return array;
}

Image8 image_from_array(const U8Array& array) {
    if (array.ndim() != 2 && !(array.ndim() == 3 && array.shape(2) == 3))
        throw py::value_error("expected a (height, width) or (height, width, 3) uint8 array");
    Image8 image;
    image.height = static_cast<int>(array.shape(0));
    image.width = static_cast<int>(array.shape(1));
    image.channels = array.ndim() == 3 ? 3 : 1;
    image.pixels.resize(static_cast<std::size_t>(image.width) * image.height * image.channels);
    std::memcpy(image.pixels.data(), array.data(), image.pixels.size());
    return image;
}

py::array_t<std::uint8_t> array_from_image(const Image8& image) {
    py::array_t<std::uint8_t> array;
    if (image.channels == 1) {
        array = py::array_t<std::uint8_t>({image.height, image.width});
    } else {
        array = py::array_t<std::uint8_t>({image.height, image.width, image.channels});
    }
    std::memcpy(array.mutable_data(), image.pixels.data(), image.pixels.size());
    return array;
}

py::dict detection_to_dict(const Detection& d) {
    py::dict out;
    out["class_id"] = d.class_id;
    out["class_name"] = std::string(d.class_name());
    out["score"] = d.score;
    out["bbox"] = py::make_tuple(d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h);
    return out;
}

using DetTuple = std::tuple<int, double, double, double, double, double>;

Detection detection_from_tuple(const DetTuple& t) {
    Detection d;
    d.class_id = std::get<0>(t);
    d.score = std::get<1>(t);
    d.bbox = {std::get<2>(t), std::get<3>(t), std::get<4>(t), std::get<5>(t)};
    return d;
}

DetTuple tuple_from_detection(const Detection& d) {
    return {d.class_id, d.score, d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h};
}

/// cfg text plus weight bytes wrapped as a ready-to-run detector.
class Model {
  public:
    Model(const std::string& cfg_text, const py::bytes& weights, double conf_threshold,
          double nms_threshold) {
        model_ = parse_cfg(cfg_text);
        std::string raw = weights;
        std::vector<std::uint8_t> bytes(raw.begin(), raw.end());
        load_weights(model_, bytes);
        params_ = head_params_from_model(model_, conf_threshold, nms_threshold);
    }

    py::list detect(const U16Array& array, double lo_pct, double hi_pct) const {
        const ThermalFrame frame = frame_from_array(array);
        py::list out;
        for (const Detection& d : detect_image(model_, frame, params_, lo_pct, hi_pct))
            out.append(detection_to_dict(d));
        return out;
    }

    py::tuple input_size() const {
        return py::make_tuple(model_.input_width, model_.input_height);
    }
    py::tuple grid() const { return py::make_tuple(params_.grid_w, params_.grid_h); }
    std::vector<std::pair<double, double>> anchors() const { return params_.anchors; }

  private:
    NetworkModel model_;
    HeadParams params_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Thermal PV hotspot detection core";

    py::register_exception<Error>(m, "Error", PyExc_ValueError);

    m.def(
        "load_tiff",
        [](const py::bytes& data) {
            std::string raw = data;
            return array_from_frame(load_tiff({raw.begin(), raw.end()}));
        },
        py::arg("data"), "Decode a 16-bit grayscale TIFF into a (height, width) uint16 array.");

    m.def(
        "write_tiff",
        [](const U16Array& array) {
            const auto bytes = write_tiff(frame_from_array(array));
            return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
        },
        py::arg("frame"), "Serialize a (height, width) uint16 array as a little-endian TIFF.");

    m.def(
        "contrast_stretch",
        [](const U16Array& array, double lo_pct, double hi_pct) {
            return array_from_image(contrast_stretch(frame_from_array(array), lo_pct, hi_pct));
        },
        py::arg("frame"), py::arg("lo_pct") = 1.0, py::arg("hi_pct") = 99.0,
        "Percentile stretch to a uint8 array.");

    m.def(
        "letterbox",
        [](const U8Array& array, int width, int height) {
            const auto [image, t] = letterbox(image_from_array(array), width, height);
            py::dict transform;
            transform["scale"] = t.scale;
            transform["offset_x"] = t.offset_x;
            transform["offset_y"] = t.offset_y;
            return py::make_tuple(array_from_image(image), transform);
        },
        py::arg("image"), py::arg("width"), py::arg("height"),
        "Aspect-preserving resize onto a padded canvas; returns (image, transform).");

    m.def(
        "render_overlay",
        [](const U8Array& array, const std::vector<DetTuple>& dets) {
            std::vector<Detection> boxes;
            for (const DetTuple& t : dets) boxes.push_back(detection_from_tuple(t));
            return array_from_image(render_overlay(image_from_array(array), boxes));
        },
        py::arg("image"), py::arg("detections"),
        "Draw detections (class_id, score, x, y, w, h) as colored rectangles.");

    m.def(
        "encode_pnm",
        [](const U8Array& array) {
            const auto bytes = encode_pnm(image_from_array(array));
            return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
        },
        py::arg("image"), "Serialize a uint8 array as binary PGM/PPM.");

    m.def(
        "iou",
        [](std::tuple<double, double, double, double> a,
           std::tuple<double, double, double, double> b) {
            const BBox ba{std::get<0>(a), std::get<1>(a), std::get<2>(a), std::get<3>(a)};
            const BBox bb{std::get<0>(b), std::get<1>(b), std::get<2>(b), std::get<3>(b)};
            return iou(ba, bb);
        },
        py::arg("a"), py::arg("b"), "Intersection-over-union of two (x, y, w, h) boxes.");

    m.def(
        "nms",
        [](const std::vector<DetTuple>& dets, double iou_threshold) {
            std::vector<Detection> boxes;
            for (const DetTuple& t : dets) boxes.push_back(detection_from_tuple(t));
            std::vector<DetTuple> out;
            for (const Detection& d : nms(boxes, iou_threshold))
                out.push_back(tuple_from_detection(d));
            return out;
        },
        py::arg("detections"), py::arg("iou_threshold"),
        "Greedy per-class suppression over (class_id, score, x, y, w, h) tuples.");

    m.def("class_name", &class_name_for, py::arg("class_id"), "Name of a defect class id.");

    m.def(
        "kmeans_anchors",
        [](const std::vector<std::pair<double, double>>& boxes, int k, int grid_w, int grid_h,
           std::uint64_t seed) {
            const AnchorSet set = kmeans_anchors(boxes, k, grid_w, grid_h, seed);
            py::dict out;
            out["anchors"] = set.anchors;
            out["mean_best_iou"] = set.mean_best_iou;
            out["objective_trace"] = set.objective_trace;
            return out;
        },
        py::arg("boxes"), py::arg("k"), py::arg("grid_w") = 13, py::arg("grid_h") = 13,
        py::arg("seed") = 0,
        "Cluster normalized (w, h) box sizes into k anchors in grid units.");

    m.def(
        "split_dataset",
        [](const std::vector<std::string>& ids, double test_fraction, std::uint64_t seed) {
            return split_dataset(ids, test_fraction, seed);
        },
        py::arg("ids"), py::arg("test_fraction"), py::arg("seed"),
        "Shuffle ids and split off a test set; returns (train, test).");

    m.def(
        "synth_scene",
        [](const std::vector<std::tuple<int, int, int, int, int>>& defects,
           std::optional<std::tuple<double, double, double, int>> glare, double noise_sigma,
           int base_counts, int hotspot_delta, std::uint64_t seed) {
            SynthParams p;
            p.noise_sigma = noise_sigma;
            p.base_counts = static_cast<std::uint16_t>(base_counts);
            p.hotspot_delta = hotspot_delta;
            p.seed = seed;
            for (const auto& [cls, mr, mc, cr, cc] : defects)
                p.defects.push_back({cls, mr, mc, cr, cc});
            if (glare) {
                GlareSpec g;
                g.center_x = std::get<0>(*glare);
                g.center_y = std::get<1>(*glare);
                g.radius_px = std::get<2>(*glare);
                g.delta_counts = std::get<3>(*glare);
                p.glare = g;
            }
            const auto [frame, truths] = synth_scene(p);
            py::list annotations;
            for (const Annotation& a : truths.items)
                annotations.append(py::make_tuple(a.class_id, a.cx, a.cy, a.w, a.h));
            return py::make_tuple(array_from_frame(frame), annotations);
        },
        py::arg("defects") = std::vector<std::tuple<int, int, int, int, int>>{},
        py::arg("glare") = std::nullopt, py::arg("noise_sigma") = 0.0,
        py::arg("base_counts") = 3000, py::arg("hotspot_delta") = 800, py::arg("seed") = 0,
        "Render a synthetic plant scene; defects are (class_id, module_row, module_col, "
        "cell_row, cell_col). Returns (frame, [(class_id, cx, cy, w, h)]).");

    m.def(
        "baseline_detect",
        [](const U16Array& array, int base_estimate, int delta_threshold, int cell_px) {
            py::list out;
            for (const Detection& d :
                 baseline_detect(frame_from_array(array), base_estimate, delta_threshold, cell_px))
                out.append(detection_to_dict(d));
            return out;
        },
        py::arg("frame"), py::arg("base_estimate"), py::arg("delta_threshold") = 400,
        py::arg("cell_px") = 8, "Threshold-and-component detector; returns detection dicts.");

    m.def(
        "evaluate",
        [](const std::vector<std::pair<std::string, std::vector<DetTuple>>>& dets_per_image,
           const std::vector<std::tuple<std::string, int, int,
                                        std::vector<std::tuple<int, double, double, double,
                                                               double>>>>& truths_per_image,
           double iou_threshold) {
            std::vector<std::pair<std::string, std::vector<Detection>>> dets;
            for (const auto& [id, tuples] : dets_per_image) {
                std::vector<Detection> boxes;
                for (const DetTuple& t : tuples) boxes.push_back(detection_from_tuple(t));
                dets.emplace_back(id, std::move(boxes));
            }
            std::vector<AnnotationSet> truths;
            for (const auto& [id, width, height, items] : truths_per_image) {
                AnnotationSet set;
                set.image_id = id;
                set.image_width = width;
                set.image_height = height;
                for (const auto& [cls, cx, cy, w, h] : items) {
                    Annotation a;
                    a.class_id = cls;
                    a.cx = cx;
                    a.cy = cy;
                    a.w = w;
                    a.h = h;
                    set.items.push_back(a);
                }
                truths.push_back(std::move(set));
            }
            const EvalResult result = evaluate(dets, truths, iou_threshold);
            py::dict out;
            out["per_class_ap"] = result.per_class_ap;
            out["map"] = result.mean_ap;
            py::dict counts;
            for (int c = 0; c < kNumClasses; ++c) {
                py::dict entry;
                entry["n_truth"] = result.counts[std::size_t(c)].n_truth;
                entry["n_tp"] = result.counts[std::size_t(c)].n_tp;
                entry["n_fp"] = result.counts[std::size_t(c)].n_fp;
                counts[py::str(std::to_string(c))] = entry;
            }
            out["counts"] = counts;
            return out;
        },
        py::arg("detections_per_image"), py::arg("truths_per_image"),
        py::arg("iou_threshold") = 0.5,
        "Pooled VOC-style scoring. Detections are (image_id, [(class_id, score, x, y, w, h)]); "
        "truths are (image_id, width, height, [(class_id, cx, cy, w, h)]).");

    py::class_<Model>(m, "Model", "A cfg/weights pair ready to run on frames.")
        .def(py::init<const std::string&, const py::bytes&, double, double>(), py::arg("cfg"),
             py::arg("weights"), py::arg("conf_threshold") = 0.25, py::arg("nms_threshold") = 0.45)
        .def("detect", &Model::detect, py::arg("frame"), py::arg("lo_pct") = 1.0,
             py::arg("hi_pct") = 99.0, "Run the full pipeline on a uint16 frame.")
        .def_property_readonly("input_size", &Model::input_size)
        .def_property_readonly("grid", &Model::grid)
        .def_property_readonly("anchors", &Model::anchors);
}
