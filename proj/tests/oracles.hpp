#pragma once

#include <cstdint>
#include <vector>

#include "solarspot/evalreport.hpp"
#include "solarspot/geometry.hpp"
#include "solarspot/inference.hpp"
#include "solarspot/thermal_io.hpp"

/// Independent reference implementations the products are checked against.
/// Everything here favors obviousness over speed.
namespace oracles {

/// Direct six-loop cross-correlation with zero padding, bias and activation.
solarspot::Tensor naive_conv(const solarspot::Tensor& input, const solarspot::LayerSpec& layer);

/// Direct windowed max over non-overlapping size x size tiles.
solarspot::Tensor naive_maxpool(const solarspot::Tensor& input, int size);

/// Convolution with raw (unfolded) kernel weights and no bias, followed by
/// explicit per-filter batch normalization and the layer's activation.
/// Normalization is computed in double precision.
solarspot::Tensor conv_then_bn(const solarspot::Tensor& input, const solarspot::LayerSpec& layer,
                               const std::vector<float>& raw_weights,
                               const std::vector<float>& beta, const std::vector<float>& gamma,
                               const std::vector<float>& mean, const std::vector<float>& variance);

/// Greedy per-class suppression restated from scratch.
std::vector<solarspot::Detection> brute_nms(const std::vector<solarspot::Detection>& dets,
                                            double iou_threshold);

/// Greedy VOC-style matching restated from scratch; record i describes
/// detection i.
std::vector<solarspot::MatchRecord> brute_match(const std::vector<solarspot::Detection>& dets,
                                                const solarspot::AnnotationSet& truths,
                                                double iou_threshold);

/// Minimal binary PGM/PPM reader for round-trip checks.
solarspot::Image8 decode_pnm(const std::vector<std::uint8_t>& bytes);

/// Hand-assembled baseline TIFF in the chosen byte order, with the pixel
/// rows split over `strips` strips.
std::vector<std::uint8_t> build_tiff(const solarspot::ThermalFrame& frame, bool big_endian,
                                     int strips = 1);

/// Largest |a-b| / max(|a|, |b|, 1) over two equally shaped tensors.
double max_rel_err(const solarspot::Tensor& a, const solarspot::Tensor& b);

}  // namespace oracles
