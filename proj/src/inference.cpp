#include "solarspot/inference.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <sstream>

#include "solarspot/errors.hpp"

namespace solarspot {

namespace {

struct KeyValue {
    std::string key;
    std::string value;
    int line = 0;
};

struct Section {
    std::string name;
    int line = 0;
    std::vector<KeyValue> entries;
};

std::string trim(const std::string& s) {
    const std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<Section> split_sections(const std::string& text) {
    std::vector<Section> sections;
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string line = trim(raw);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw CfgError("line " + std::to_string(line_no) + ": malformed section header '" +
                               line + "'");
            sections.push_back({line.substr(1, line.size() - 2), line_no, {}});
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw CfgError("line " + std::to_string(line_no) + ": expected key=value, got '" +
                           line + "'");
        if (sections.empty())
            throw CfgError("line " + std::to_string(line_no) + ": key outside any section");
        sections.back().entries.push_back(
            {trim(line.substr(0, eq)), trim(line.substr(eq + 1)), line_no});
    }
    return sections;
}

const KeyValue* find_key(const Section& s, const std::string& key) {
    const KeyValue* found = nullptr;
    for (const KeyValue& kv : s.entries)
        if (kv.key == key) found = &kv;  // last occurrence wins, as in darknet
    return found;
}

int require_int(const Section& s, const std::string& key) {
    const KeyValue* kv = find_key(s, key);
    if (!kv)
        throw CfgError("[" + s.name + "] at line " + std::to_string(s.line) + ": missing key '" +
                       key + "'");
    int v = 0;
    const auto [p, ec] = std::from_chars(kv->value.data(), kv->value.data() + kv->value.size(), v);
    if (ec != std::errc{} || p != kv->value.data() + kv->value.size())
        throw CfgError("line " + std::to_string(kv->line) + ": value of '" + key +
                       "' is not an integer: '" + kv->value + "'");
    return v;
}

int optional_int(const Section& s, const std::string& key, int fallback) {
    return find_key(s, key) ? require_int(s, key) : fallback;
}

std::string require_str(const Section& s, const std::string& key) {
    const KeyValue* kv = find_key(s, key);
    if (!kv)
        throw CfgError("[" + s.name + "] at line " + std::to_string(s.line) + ": missing key '" +
                       key + "'");
    return kv->value;
}

std::vector<double> require_number_list(const Section& s, const std::string& key) {
    const KeyValue* kv = find_key(s, key);
    if (!kv)
        throw CfgError("[" + s.name + "] at line " + std::to_string(s.line) + ": missing key '" +
                       key + "'");
    std::vector<double> out;
    const std::string& v = kv->value;
    std::size_t i = 0;
    while (i < v.size()) {
        while (i < v.size() && (v[i] == ' ' || v[i] == ',')) ++i;
        if (i >= v.size()) break;
        double d = 0.0;
        const auto [p, ec] = std::from_chars(v.data() + i, v.data() + v.size(), d);
        if (ec != std::errc{})
            throw CfgError("line " + std::to_string(kv->line) + ": value of '" + key +
                           "' is not a comma-separated number list: '" + v + "'");
        out.push_back(d);
        i = static_cast<std::size_t>(p - v.data());
    }
    return out;
}

std::uint32_t read_u32le(const std::uint8_t* p) {
    return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
           std::uint32_t(p[3]) << 24;
}

float read_f32le(const std::uint8_t* p) {
    const std::uint32_t u = read_u32le(p);
    float f;
    std::memcpy(&f, &u, 4);
    return f;
}

}  // namespace

NetworkModel parse_cfg(const std::string& text) {
    const auto sections = split_sections(text);
    if (sections.empty()) throw CfgError("empty network description");
    if (sections.front().name != "net")
        throw CfgError("line " + std::to_string(sections.front().line) +
                       ": first section must be [net], got [" + sections.front().name + "]");

    NetworkModel model;
    const Section& net = sections.front();
    model.input_width = require_int(net, "width");
    model.input_height = require_int(net, "height");
    model.input_channels = require_int(net, "channels");
    if (model.input_width < 1 || model.input_height < 1 || model.input_channels < 1)
        throw CfgError("[net] at line " + std::to_string(net.line) +
                       ": width, height and channels must be positive");

    int c = model.input_channels;
    int h = model.input_height;
    int w = model.input_width;
    bool saw_head = false;

    for (std::size_t si = 1; si < sections.size(); ++si) {
        const Section& s = sections[si];
        if (saw_head)
            throw CfgError("line " + std::to_string(s.line) +
                           ": [region] must be the last section, found [" + s.name + "] after it");

        LayerSpec layer;
        layer.in_channels = c;
        layer.in_height = h;
        layer.in_width = w;

        if (s.name == "convolutional") {
            layer.kind = LayerKind::Convolutional;
            layer.filters = require_int(s, "filters");
            layer.size = require_int(s, "size");
            layer.stride = require_int(s, "stride");
            layer.pad = require_int(s, "pad") != 0;
            layer.batch_normalize = optional_int(s, "batch_normalize", 0) != 0;
            layer.activation = require_str(s, "activation");
            if (layer.filters < 1 || layer.size < 1 || layer.stride < 1)
                throw CfgError("[convolutional] at line " + std::to_string(s.line) +
                               ": filters, size and stride must be positive");
            if (layer.activation != "leaky" && layer.activation != "linear")
                throw CfgError("[convolutional] at line " + std::to_string(s.line) +
                               ": unsupported activation '" + layer.activation + "'");
            const int p = layer.pad ? (layer.size - 1) / 2 : 0;
            if (h + 2 * p < layer.size || w + 2 * p < layer.size)
                throw CfgError("[convolutional] at line " + std::to_string(s.line) +
                               ": kernel does not fit the " + std::to_string(w) + "x" +
                               std::to_string(h) + " input");
            layer.out_channels = layer.filters;
            layer.out_height = (h + 2 * p - layer.size) / layer.stride + 1;
            layer.out_width = (w + 2 * p - layer.size) / layer.stride + 1;
        } else if (s.name == "maxpool") {
            layer.kind = LayerKind::MaxPool;
            layer.size = require_int(s, "size");
            layer.stride = require_int(s, "stride");
            if (layer.size < 1 || layer.stride != layer.size)
                throw CfgError("[maxpool] at line " + std::to_string(s.line) +
                               ": only exact tiling (size == stride >= 1) is supported");
            if (h % layer.size != 0 || w % layer.size != 0)
                throw CfgError("[maxpool] at line " + std::to_string(s.line) + ": input " +
                               std::to_string(w) + "x" + std::to_string(h) +
                               " is not divisible by size " + std::to_string(layer.size));
            layer.out_channels = c;
            layer.out_height = h / layer.size;
            layer.out_width = w / layer.size;
        } else if (s.name == "region") {
            layer.kind = LayerKind::RegionHead;
            layer.num_anchors = require_int(s, "num");
            layer.classes = require_int(s, "classes");
            if (layer.num_anchors < 1 || layer.classes < 1)
                throw CfgError("[region] at line " + std::to_string(s.line) +
                               ": num and classes must be positive");
            const auto values = require_number_list(s, "anchors");
            if (values.size() != std::size_t(2 * layer.num_anchors))
                throw CfgError("[region] at line " + std::to_string(s.line) + ": anchors has " +
                               std::to_string(values.size()) + " values, expected " +
                               std::to_string(2 * layer.num_anchors));
            for (std::size_t i = 0; i + 1 < values.size(); i += 2)
                layer.anchors.emplace_back(values[i], values[i + 1]);
            const int expected = layer.num_anchors * (5 + layer.classes);
            if (c != expected)
                throw CfgError("[region] at line " + std::to_string(s.line) +
                               ": incoming channels " + std::to_string(c) + " != num*(5+classes) = " +
                               std::to_string(expected));
            layer.out_channels = c;
            layer.out_height = h;
            layer.out_width = w;
            saw_head = true;
        } else {
            throw CfgError("line " + std::to_string(s.line) + ": unknown section [" + s.name +
                           "]");
        }

        c = layer.out_channels;
        h = layer.out_height;
        w = layer.out_width;
        model.layers.push_back(std::move(layer));
    }

    if (!saw_head) throw CfgError("network has no [region] section");
    return model;
}

void load_weights(NetworkModel& model, const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 12)
        throw BadHeader("weight file is " + std::to_string(bytes.size()) +
                        " bytes, shorter than the 12-byte version header");
    const auto major = static_cast<std::int32_t>(read_u32le(&bytes[0]));
    const auto minor = static_cast<std::int32_t>(read_u32le(&bytes[4]));
    const std::size_t seen_bytes = (major * 10 + minor < 2) ? 4 : 8;
    if (bytes.size() < 12 + seen_bytes)
        throw BadHeader("weight file ends inside the seen-images counter");
    std::size_t off = 12 + seen_bytes;

    std::size_t expected_floats = 0;
    for (const LayerSpec& l : model.layers) {
        if (l.kind != LayerKind::Convolutional) continue;
        const std::size_t f = l.filters;
        const std::size_t kernel = f * l.in_channels * l.size * l.size;
        expected_floats += (l.batch_normalize ? 4 * f : f) + kernel;
    }
    const std::size_t payload = bytes.size() - off;
    if (payload % 4 != 0)
        throw WeightSizeMismatch("weight payload is " + std::to_string(payload) +
                                 " bytes, not a whole number of 4-byte floats");
    const std::size_t actual_floats = payload / 4;
    if (actual_floats != expected_floats)
        throw WeightSizeMismatch("expected " + std::to_string(expected_floats) +
                                 " floats after the header, file has " +
                                 std::to_string(actual_floats));

    for (std::size_t li = 0; li < model.layers.size(); ++li) {
        LayerSpec& l = model.layers[li];
        if (l.kind != LayerKind::Convolutional) continue;

        std::size_t layer_float = 0;
        auto take = [&](std::size_t count) {
            std::vector<float> out(count);
            for (std::size_t i = 0; i < count; ++i, ++layer_float, off += 4) {
                out[i] = read_f32le(&bytes[off]);
                if (!std::isfinite(out[i]))
                    throw NonFiniteWeight("layer " + std::to_string(li) + ", float " +
                                          std::to_string(layer_float));
            }
            return out;
        };

        const std::size_t f = l.filters;
        const std::size_t kernel_per_filter =
            std::size_t(l.in_channels) * l.size * l.size;
        if (l.batch_normalize) {
            auto biases = take(f);
            const auto scales = take(f);
            const auto means = take(f);
            const auto vars = take(f);
            auto weights = take(f * kernel_per_filter);
            for (std::size_t i = 0; i < f; ++i) {
                const float sigma = std::sqrt(vars[i] + 1e-5f);
                const float gain = scales[i] / sigma;
                for (std::size_t j = 0; j < kernel_per_filter; ++j)
                    weights[i * kernel_per_filter + j] *= gain;
                biases[i] -= scales[i] * means[i] / sigma;
                if (!std::isfinite(gain) || !std::isfinite(biases[i]))
                    throw NonFiniteWeight("layer " + std::to_string(li) + ", filter " +
                                          std::to_string(i) + " after batch-norm folding");
            }
            l.weights = std::move(weights);
            l.biases = std::move(biases);
        } else {
            l.biases = take(f);
            l.weights = take(f * kernel_per_filter);
        }
    }
    model.loaded = true;
}

Tensor conv_forward(const Tensor& input, const LayerSpec& layer) {
    if (layer.kind != LayerKind::Convolutional)
        throw ShapeMismatch("conv_forward called on a non-convolutional layer");
    const int c = input.channels;
    const int h = input.height;
    const int w = input.width;
    const int k = layer.size;
    const int stride = layer.stride;
    const int f = layer.filters;
    if (k < 1 || stride < 1 || f < 1) throw ShapeMismatch("degenerate convolution geometry");
    if (layer.in_channels != 0 && layer.in_channels != c)
        throw ShapeMismatch("input has " + std::to_string(c) + " channels, layer expects " +
                            std::to_string(layer.in_channels));
    const int p = layer.pad ? (k - 1) / 2 : 0;
    if (h + 2 * p < k || w + 2 * p < k)
        throw ShapeMismatch("kernel size " + std::to_string(k) + " does not fit the padded " +
                            std::to_string(w) + "x" + std::to_string(h) + " input");
    const int oh = (h + 2 * p - k) / stride + 1;
    const int ow = (w + 2 * p - k) / stride + 1;

    const std::size_t kdim = std::size_t(c) * k * k;
    if (layer.weights.size() != kdim * f)
        throw ShapeMismatch("layer holds " + std::to_string(layer.weights.size()) +
                            " weights, geometry needs " + std::to_string(kdim * f));
    if (layer.biases.size() != std::size_t(f))
        throw ShapeMismatch("layer holds " + std::to_string(layer.biases.size()) +
                            " biases, geometry needs " + std::to_string(f));
    const bool leaky = layer.activation == "leaky";
    if (!leaky && layer.activation != "linear")
        throw CfgError("unsupported activation '" + layer.activation + "'");

    // Patch matrix: row (ci, ky, kx), column (oy, ox). A 1x1 stride-1 kernel
    // reads the input planes as-is.
    const std::size_t n = std::size_t(oh) * ow;
    std::vector<float> col;
    const float* colp = input.data.data();
    if (!(k == 1 && stride == 1)) {
        col.assign(kdim * n, 0.0f);
        for (int ci = 0; ci < c; ++ci)
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                    float* row = &col[((std::size_t(ci) * k + ky) * k + kx) * n];
                    for (int oy = 0; oy < oh; ++oy) {
                        const int iy = oy * stride + ky - p;
                        if (iy < 0 || iy >= h) continue;  // padding rows stay zero
                        const float* src = &input.data[(std::size_t(ci) * h + iy) * w];
                        float* dst = row + std::size_t(oy) * ow;
                        for (int ox = 0; ox < ow; ++ox) {
                            const int ix = ox * stride + kx - p;
                            if (ix >= 0 && ix < w) dst[ox] = src[ix];
                        }
                    }
                }
        colp = col.data();
    }

    Tensor out = Tensor::zeros(f, oh, ow);
    for (int fi = 0; fi < f; ++fi) {
        float* dst = &out.data[std::size_t(fi) * n];
        const float* wrow = &layer.weights[std::size_t(fi) * kdim];
        std::size_t kk = 0;
        for (; kk + 4 <= kdim; kk += 4) {
            const float w0 = wrow[kk];
            const float w1 = wrow[kk + 1];
            const float w2 = wrow[kk + 2];
            const float w3 = wrow[kk + 3];
            const float* c0 = colp + kk * n;
            const float* c1 = colp + (kk + 1) * n;
            const float* c2 = colp + (kk + 2) * n;
            const float* c3 = colp + (kk + 3) * n;
            for (std::size_t i = 0; i < n; ++i)
                dst[i] += w0 * c0[i] + w1 * c1[i] + w2 * c2[i] + w3 * c3[i];
        }
        for (; kk < kdim; ++kk) {
            const float wv = wrow[kk];
            const float* cr = colp + kk * n;
            for (std::size_t i = 0; i < n; ++i) dst[i] += wv * cr[i];
        }
        const float b = layer.biases[fi];
        if (leaky) {
            for (std::size_t i = 0; i < n; ++i) {
                const float v = dst[i] + b;
                dst[i] = v > 0.0f ? v : 0.1f * v;
            }
        } else {
            for (std::size_t i = 0; i < n; ++i) dst[i] += b;
        }
    }
    return out;
}

Tensor maxpool_forward(const Tensor& input, const LayerSpec& layer) {
    if (layer.kind != LayerKind::MaxPool)
        throw ShapeMismatch("maxpool_forward called on a non-maxpool layer");
    const int k = layer.size;
    if (k < 1 || layer.stride != k)
        throw ShapeMismatch("max pooling supports exact tiling only (size == stride >= 1)");
    if (input.height % k != 0 || input.width % k != 0)
        throw ShapeMismatch("input " + std::to_string(input.width) + "x" +
                            std::to_string(input.height) + " is not divisible by pool size " +
                            std::to_string(k));
    const int oh = input.height / k;
    const int ow = input.width / k;
    Tensor out = Tensor::zeros(input.channels, oh, ow);
    for (int c = 0; c < input.channels; ++c)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                float best = input.at(c, oy * k, ox * k);
                for (int dy = 0; dy < k; ++dy)
                    for (int dx = 0; dx < k; ++dx)
                        best = std::max(best, input.at(c, oy * k + dy, ox * k + dx));
                out.at(c, oy, ox) = best;
            }
    return out;
}

Tensor forward(const NetworkModel& model, const Tensor& input) {
    if (!model.loaded) throw NotLoaded("model weights have not been loaded");
    if (input.channels != model.input_channels || input.height != model.input_height ||
        input.width != model.input_width)
        throw ShapeMismatch("input is " + std::to_string(input.channels) + "x" +
                            std::to_string(input.height) + "x" + std::to_string(input.width) +
                            ", model expects " + std::to_string(model.input_channels) + "x" +
                            std::to_string(model.input_height) + "x" +
                            std::to_string(model.input_width));
    Tensor cur = input;
    for (const LayerSpec& l : model.layers) {
        switch (l.kind) {
            case LayerKind::Convolutional:
                cur = conv_forward(cur, l);
                break;
            case LayerKind::MaxPool:
                cur = maxpool_forward(cur, l);
                break;
            case LayerKind::RegionHead:
                return cur;
        }
    }
    return cur;
}

}  // namespace solarspot
