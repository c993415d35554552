#include "solarspot/thermal_io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <string>

#include "solarspot/errors.hpp"
#include "solarspot/rng.hpp"

namespace solarspot {

namespace {

// TIFF 6.0 baseline tag and type ids, the subset we traffic in.
enum Tag : std::uint16_t {
    kImageWidth = 256,
    kImageLength = 257,
    kBitsPerSample = 258,
    kCompression = 259,
    kPhotometric = 262,
    kStripOffsets = 273,
    kSamplesPerPixel = 277,
    kRowsPerStrip = 278,
    kStripByteCounts = 279,
    kTileWidth = 322,
    kTileLength = 323,
    kTileOffsets = 324,
};

enum FieldType : std::uint16_t {
    kByte = 1,
    kAscii = 2,
    kShort = 3,
    kLong = 4,
};

std::size_t type_size(std::uint16_t type) {
    switch (type) {
        case kByte:
        case kAscii:
            return 1;
        case kShort:
            return 2;
        case kLong:
            return 4;
        default:
            return 0;
    }
}

class TiffReader {
public:
    TiffReader(const std::vector<std::uint8_t>& bytes, bool big_endian)
        : bytes_(bytes), big_(big_endian) {}

    std::uint8_t u8(std::size_t at) const {
        require(at, 1);
        return bytes_[at];
    }

    std::uint16_t u16(std::size_t at) const {
        require(at, 2);
        if (big_) return static_cast<std::uint16_t>(bytes_[at] << 8 | bytes_[at + 1]);
        return static_cast<std::uint16_t>(bytes_[at + 1] << 8 | bytes_[at]);
    }

    std::uint32_t u32(std::size_t at) const {
        require(at, 4);
        if (big_)
            return (std::uint32_t(bytes_[at]) << 24) | (std::uint32_t(bytes_[at + 1]) << 16) |
                   (std::uint32_t(bytes_[at + 2]) << 8) | std::uint32_t(bytes_[at + 3]);
        return (std::uint32_t(bytes_[at + 3]) << 24) | (std::uint32_t(bytes_[at + 2]) << 16) |
               (std::uint32_t(bytes_[at + 1]) << 8) | std::uint32_t(bytes_[at]);
    }

    void require(std::size_t at, std::size_t n) const {
        if (at + n > bytes_.size() || at + n < at)
            throw MalformedTiff("TIFF truncated: need " + std::to_string(n) + " bytes at offset " +
                                std::to_string(at));
    }

private:
    const std::vector<std::uint8_t>& bytes_;
    bool big_;
};

struct IfdEntry {
    std::uint16_t tag = 0;
    std::uint16_t type = 0;
    std::uint32_t count = 0;
    std::size_t value_at = 0;  // position of the 4-byte value/offset field
};

// Fetch the entry's values as unsigned integers, following the offset
// indirection when the payload does not fit the inline field.
std::vector<std::uint32_t> read_values(const TiffReader& r, const IfdEntry& e) {
    const std::size_t elem = type_size(e.type);
    if (elem == 0)
        throw UnsupportedTiff("tag " + std::to_string(e.tag) + ": unsupported field type " +
                              std::to_string(e.type));
    const std::size_t total = elem * e.count;
    std::size_t at = e.value_at;
    if (total > 4) at = r.u32(e.value_at);
    std::vector<std::uint32_t> out;
    out.reserve(e.count);
    for (std::uint32_t i = 0; i < e.count; ++i) {
        switch (e.type) {
            case kByte:
            case kAscii:
                out.push_back(r.u8(at + i));
                break;
            case kShort:
                out.push_back(r.u16(at + i * 2));
                break;
            case kLong:
                out.push_back(r.u32(at + i * 4));
                break;
        }
    }
    return out;
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xFF));
}

void put_entry(std::vector<std::uint8_t>& out, std::uint16_t tag, std::uint16_t type,
               std::uint32_t value) {
    put_u16(out, tag);
    put_u16(out, type);
    put_u32(out, 1);
    if (type == kShort) {
        put_u16(out, static_cast<std::uint16_t>(value));
        put_u16(out, 0);
    } else {
        put_u32(out, value);
    }
}

}  // namespace

ThermalFrame load_tiff(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 8) throw MalformedTiff("TIFF shorter than the 8-byte header");
    bool big = false;
    if (bytes[0] == 'I' && bytes[1] == 'I')
        big = false;
    else if (bytes[0] == 'M' && bytes[1] == 'M')
        big = true;
    else
        throw MalformedTiff("bad byte-order mark (expected II or MM)");

    TiffReader r(bytes, big);
    if (r.u16(2) != 42) throw MalformedTiff("bad TIFF magic (expected 42)");

    const std::uint32_t ifd_offset = r.u32(4);
    r.require(ifd_offset, 2);
    const std::uint16_t n_entries = r.u16(ifd_offset);
    if (n_entries == 0) throw MalformedTiff("IFD holds no entries");
    r.require(ifd_offset + 2, std::size_t(n_entries) * 12 + 4);

    std::vector<IfdEntry> entries;
    entries.reserve(n_entries);
    for (std::uint16_t i = 0; i < n_entries; ++i) {
        const std::size_t at = ifd_offset + 2 + std::size_t(i) * 12;
        IfdEntry e;
        e.tag = r.u16(at);
        e.type = r.u16(at + 2);
        e.count = r.u32(at + 4);
        e.value_at = at + 8;
        entries.push_back(e);
    }

    auto find = [&](std::uint16_t tag) -> const IfdEntry* {
        for (const auto& e : entries)
            if (e.tag == tag) return &e;
        return nullptr;
    };
    auto scalar = [&](const IfdEntry* e) -> std::uint32_t {
        auto vals = read_values(r, *e);
        if (vals.empty()) throw MalformedTiff("tag " + std::to_string(e->tag) + " has no value");
        return vals[0];
    };

    if (find(kTileWidth) || find(kTileLength) || find(kTileOffsets))
        throw UnsupportedTiff("TileWidth: tiled organization is not supported");

    const IfdEntry* e_width = find(kImageWidth);
    const IfdEntry* e_height = find(kImageLength);
    const IfdEntry* e_strip_offsets = find(kStripOffsets);
    const IfdEntry* e_strip_counts = find(kStripByteCounts);
    if (!e_width) throw MalformedTiff("missing ImageWidth");
    if (!e_height) throw MalformedTiff("missing ImageLength");
    if (!e_strip_offsets) throw MalformedTiff("missing StripOffsets");
    if (!e_strip_counts) throw MalformedTiff("missing StripByteCounts");

    if (const IfdEntry* e = find(kCompression)) {
        const std::uint32_t v = scalar(e);
        if (v != 1)
            throw UnsupportedTiff("Compression=" + std::to_string(v) + ": only uncompressed data");
    }
    if (const IfdEntry* e = find(kSamplesPerPixel)) {
        const std::uint32_t v = scalar(e);
        if (v != 1)
            throw UnsupportedTiff("SamplesPerPixel=" + std::to_string(v) +
                                  ": only single-sample grayscale");
    }
    if (const IfdEntry* e = find(kPhotometric)) {
        const std::uint32_t v = scalar(e);
        if (v > 1)
            throw UnsupportedTiff("PhotometricInterpretation=" + std::to_string(v) +
                                  ": only grayscale");
    }
    {
        const IfdEntry* e = find(kBitsPerSample);
        const std::uint32_t v = e ? scalar(e) : 1;  // TIFF default is 1 bit
        if (v != 16)
            throw UnsupportedTiff("BitsPerSample=" + std::to_string(v) + ": only 16-bit samples");
    }

    const std::uint32_t width = scalar(e_width);
    const std::uint32_t height = scalar(e_height);
    if (width == 0 || height == 0) throw MalformedTiff("zero ImageWidth or ImageLength");

    const auto offsets = read_values(r, *e_strip_offsets);
    const auto counts = read_values(r, *e_strip_counts);
    if (offsets.size() != counts.size())
        throw MalformedTiff("StripOffsets and StripByteCounts disagree in count");

    const std::size_t expected = std::size_t(width) * height * 2;
    std::size_t total = 0;
    for (auto c : counts) total += c;
    if (total != expected)
        throw MalformedTiff("strip bytes (" + std::to_string(total) + ") do not match " +
                            std::to_string(width) + "x" + std::to_string(height) + "x16bit (" +
                            std::to_string(expected) + ")");

    std::vector<std::uint8_t> data;
    data.reserve(expected);
    for (std::size_t s = 0; s < offsets.size(); ++s) {
        r.require(offsets[s], counts[s]);
        data.insert(data.end(), bytes.begin() + offsets[s], bytes.begin() + offsets[s] + counts[s]);
    }

    ThermalFrame frame;
    frame.width = static_cast<int>(width);
    frame.height = static_cast<int>(height);
    frame.pixels.resize(std::size_t(width) * height);
    for (std::size_t i = 0; i < frame.pixels.size(); ++i) {
        const std::uint8_t b0 = data[i * 2];
        const std::uint8_t b1 = data[i * 2 + 1];
        frame.pixels[i] = big ? static_cast<std::uint16_t>(b0 << 8 | b1)
                              : static_cast<std::uint16_t>(b1 << 8 | b0);
    }
    return frame;
}

std::vector<std::uint8_t> write_tiff(const ThermalFrame& frame) {
    const std::uint32_t w = static_cast<std::uint32_t>(frame.width);
    const std::uint32_t h = static_cast<std::uint32_t>(frame.height);
    const std::uint32_t n_tags = 9;
    const std::uint32_t ifd_size = 2 + n_tags * 12 + 4;
    const std::uint32_t data_offset = 8 + ifd_size;

    std::vector<std::uint8_t> out;
    out.reserve(data_offset + frame.pixels.size() * 2);

    out.push_back('I');
    out.push_back('I');
    put_u16(out, 42);
    put_u32(out, 8);  // IFD immediately after the header

    put_u16(out, static_cast<std::uint16_t>(n_tags));
    put_entry(out, kImageWidth, kLong, w);
    put_entry(out, kImageLength, kLong, h);
    put_entry(out, kBitsPerSample, kShort, 16);
    put_entry(out, kCompression, kShort, 1);
    put_entry(out, kPhotometric, kShort, 1);
    put_entry(out, kStripOffsets, kLong, data_offset);
    put_entry(out, kSamplesPerPixel, kShort, 1);
    put_entry(out, kRowsPerStrip, kLong, h);
    put_entry(out, kStripByteCounts, kLong, w * h * 2);
    put_u32(out, 0);  // no further IFD

    for (std::uint16_t v : frame.pixels) put_u16(out, v);
    return out;
}

Image8 contrast_stretch(const ThermalFrame& frame, double lo_pct, double hi_pct) {
    if (!(lo_pct >= 0.0 && lo_pct < hi_pct && hi_pct <= 100.0))
        throw InvalidPercentiles("need 0 <= lo (" + std::to_string(lo_pct) + ") < hi (" +
                                 std::to_string(hi_pct) + ") <= 100");

    const std::size_t n = frame.pixels.size();
    std::array<std::size_t, 65536> hist{};
    for (std::uint16_t v : frame.pixels) ++hist[v];

    auto nearest_rank = [&](double pct) -> std::uint16_t {
        std::size_t rank = static_cast<std::size_t>(std::ceil(pct * static_cast<double>(n) / 100.0));
        rank = std::clamp<std::size_t>(rank, 1, n);
        std::size_t cum = 0;
        for (std::size_t v = 0; v < hist.size(); ++v) {
            cum += hist[v];
            if (cum >= rank) return static_cast<std::uint16_t>(v);
        }
        return 65535;
    };

    const std::uint16_t lo = nearest_rank(lo_pct);
    const std::uint16_t hi = nearest_rank(hi_pct);

    std::array<std::uint8_t, 65536> lut{};
    if (hi > lo) {
        const double span = static_cast<double>(hi) - static_cast<double>(lo);
        for (std::size_t v = 0; v < lut.size(); ++v) {
            const double mapped = (static_cast<double>(v) - lo) * 255.0 / span;
            lut[v] = static_cast<std::uint8_t>(std::clamp<long long>(round_half_up(mapped), 0, 255));
        }
    }

    Image8 out;
    out.width = frame.width;
    out.height = frame.height;
    out.channels = 1;
    out.pixels.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.pixels[i] = lut[frame.pixels[i]];
    return out;
}

std::pair<Image8, LetterboxTransform> letterbox(const Image8& image, int dst_width,
                                                int dst_height) {
    const int sw = image.width;
    const int sh = image.height;
    const int ch = image.channels;

    LetterboxTransform t;
    t.src_width = sw;
    t.src_height = sh;
    t.dst_width = dst_width;
    t.dst_height = dst_height;
    t.scale = std::min(static_cast<double>(dst_width) / sw, static_cast<double>(dst_height) / sh);
    const int scaled_w = static_cast<int>(round_half_up(sw * t.scale));
    const int scaled_h = static_cast<int>(round_half_up(sh * t.scale));
    t.offset_x = (dst_width - scaled_w) / 2;
    t.offset_y = (dst_height - scaled_h) / 2;

    Image8 out;
    out.width = dst_width;
    out.height = dst_height;
    out.channels = ch;
    out.pixels.assign(std::size_t(dst_width) * dst_height * ch, 128);

    auto src_at = [&](int x, int y, int c) -> double {
        return image.pixels[(std::size_t(y) * sw + x) * ch + c];
    };

    for (int dy = 0; dy < scaled_h; ++dy) {
        double sy = (dy + 0.5) / t.scale - 0.5;
        sy = std::clamp(sy, 0.0, static_cast<double>(sh - 1));
        const int y0 = static_cast<int>(sy);
        const int y1 = std::min(y0 + 1, sh - 1);
        const double fy = sy - y0;
        for (int dx = 0; dx < scaled_w; ++dx) {
            double sx = (dx + 0.5) / t.scale - 0.5;
            sx = std::clamp(sx, 0.0, static_cast<double>(sw - 1));
            const int x0 = static_cast<int>(sx);
            const int x1 = std::min(x0 + 1, sw - 1);
            const double fx = sx - x0;
            for (int c = 0; c < ch; ++c) {
                // lerp form keeps constant regions bit-exact
                const double top = src_at(x0, y0, c) + fx * (src_at(x1, y0, c) - src_at(x0, y0, c));
                const double bot = src_at(x0, y1, c) + fx * (src_at(x1, y1, c) - src_at(x0, y1, c));
                const double val = top + fy * (bot - top);
                const std::size_t at =
                    (std::size_t(t.offset_y + dy) * dst_width + t.offset_x + dx) * ch + c;
                out.pixels[at] =
                    static_cast<std::uint8_t>(std::clamp<long long>(round_half_up(val), 0, 255));
            }
        }
    }
    return {std::move(out), t};
}

Image8 render_overlay(const Image8& image, const std::vector<Detection>& detections) {
    static constexpr std::array<std::array<std::uint8_t, 3>, 3> colors = {{
        {255, 0, 0},    // single_cell_hotspot
        {255, 255, 0},  // multi_cell_hotspot
        {255, 0, 255},  // module_hotspot
    }};

    Image8 out;
    out.width = image.width;
    out.height = image.height;
    out.channels = 3;
    out.pixels.resize(std::size_t(image.width) * image.height * 3);
    for (std::size_t i = 0; i < std::size_t(image.width) * image.height; ++i) {
        const std::uint8_t g = image.channels == 1 ? image.pixels[i] : image.pixels[i * 3];
        out.pixels[i * 3 + 0] = g;
        out.pixels[i * 3 + 1] = image.channels == 1 ? g : image.pixels[i * 3 + 1];
        out.pixels[i * 3 + 2] = image.channels == 1 ? g : image.pixels[i * 3 + 2];
    }

    auto paint = [&](int x, int y, const std::array<std::uint8_t, 3>& c) {
        if (x < 0 || y < 0 || x >= out.width || y >= out.height) return;
        const std::size_t at = (std::size_t(y) * out.width + x) * 3;
        out.pixels[at + 0] = c[0];
        out.pixels[at + 1] = c[1];
        out.pixels[at + 2] = c[2];
    };

    for (const Detection& det : detections) {
        const auto& color = colors[static_cast<std::size_t>(((det.class_id % 3) + 3) % 3)];
        const int x0 = static_cast<int>(std::llround(det.bbox.x));
        const int y0 = static_cast<int>(std::llround(det.bbox.y));
        const int x1 = static_cast<int>(std::llround(det.bbox.right())) - 1;
        const int y1 = static_cast<int>(std::llround(det.bbox.bottom())) - 1;
        if (x1 < x0 || y1 < y0) continue;
        for (int y = y0; y <= y1; ++y) {
            if (y <= y0 + 1 || y >= y1 - 1) {
                for (int x = x0; x <= x1; ++x) paint(x, y, color);
            } else {
                paint(x0, y, color);
                paint(x0 + 1, y, color);
                paint(x1 - 1, y, color);
                paint(x1, y, color);
            }
        }
    }
    return out;
}

std::vector<std::uint8_t> encode_pnm(const Image8& image) {
    const std::string header = std::string(image.channels == 3 ? "P6" : "P5") + "\n" +
                               std::to_string(image.width) + " " + std::to_string(image.height) +
                               "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), image.pixels.begin(), image.pixels.end());
    return out;
}

}  // namespace solarspot
