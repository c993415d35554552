#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "solarspot/geometry.hpp"

namespace solarspot {

/// One radiometric frame as it comes off the camera: raw 16-bit counts,
/// row-major, no calibration applied.
struct ThermalFrame {
    int width = 0;
    int height = 0;
    std::vector<std::uint16_t> pixels;  // width * height values

    std::uint16_t at(int x, int y) const {
        return pixels[static_cast<std::size_t>(y) * width + x];
    }
};

/// 8-bit display image, 1 channel (gray) or 3 (RGB overlay), interleaved.
struct Image8 {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<std::uint8_t> pixels;  // width * height * channels values
};

/// Parse a baseline TIFF: single image, grayscale, 16 bits per sample,
/// one sample per pixel, uncompressed, strip-organized. Both byte orders
/// are accepted; multi-strip files are concatenated in row order.
///
/// Throws MalformedTiff on structural damage (magic, IFD layout, offsets,
/// strip sizes that disagree with the dimensions) and UnsupportedTiff when
/// the file is valid TIFF but outside the subset; the message names the
/// offending tag.
ThermalFrame load_tiff(const std::vector<std::uint8_t>& bytes);

/// Serialize a frame as little-endian, single-strip, uncompressed, 16-bit
/// grayscale baseline TIFF. load_tiff reads the result back bit-exactly.
std::vector<std::uint8_t> write_tiff(const ThermalFrame& frame);

/// Percentile min-max stretch to 8 bits.
///
/// lo/hi are nearest-rank percentiles of the pixel population; each output
/// pixel is clamp(round((v - lo) * 255 / (hi - lo)), 0, 255) with half-up
/// rounding. A degenerate window (hi == lo) maps everything to 0.
/// Throws InvalidPercentiles unless 0 <= lo_pct < hi_pct <= 100.
Image8 contrast_stretch(const ThermalFrame& frame, double lo_pct, double hi_pct);

/// Aspect-preserving bilinear resize onto a dst-sized canvas padded with 128.
/// Sampling is center-aligned: src = (dst_index + 0.5) / scale - 0.5, with
/// edge clamping. Returns the transform needed to map boxes back.
std::pair<Image8, LetterboxTransform> letterbox(const Image8& image, int dst_width,
                                                int dst_height);

/// Replicate a gray image to RGB and draw each detection as a 2-px-wide
/// rectangle in its class color (red / yellow / magenta), clipped to bounds.
Image8 render_overlay(const Image8& image, const std::vector<Detection>& detections);

/// Binary PGM (P5) for 1-channel images, binary PPM (P6) for 3-channel.
std::vector<std::uint8_t> encode_pnm(const Image8& image);

}  // namespace solarspot
