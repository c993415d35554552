#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace solarspot {

/// Channel-major float volume: index = c * height * width + y * width + x.
struct Tensor {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<float> data;

    static Tensor zeros(int channels, int height, int width) {
        Tensor t;
        t.channels = channels;
        t.height = height;
        t.width = width;
        t.data.assign(std::size_t(channels) * height * width, 0.0f);
        return t;
    }

    float at(int c, int y, int x) const {
        return data[(std::size_t(c) * height + y) * width + x];
    }
    float& at(int c, int y, int x) {
        return data[(std::size_t(c) * height + y) * width + x];
    }
};

enum class LayerKind { Convolutional, MaxPool, RegionHead };

struct LayerSpec {
    LayerKind kind = LayerKind::Convolutional;

    // convolutional
    int filters = 0;
    int size = 0;
    int stride = 0;
    bool pad = false;
    bool batch_normalize = false;
    std::string activation = "linear";  // "leaky" or "linear"

    // region head
    std::vector<std::pair<double, double>> anchors;  // grid units
    int num_anchors = 0;
    int classes = 0;

    // shapes resolved by parse_cfg
    int in_channels = 0;
    int in_height = 0;
    int in_width = 0;
    int out_channels = 0;
    int out_height = 0;
    int out_width = 0;

    // convolutional weights after batch-norm folding
    std::vector<float> weights;  // filters * in_channels * size * size
    std::vector<float> biases;   // filters
};

/// A linear conv/maxpool chain ending in one region head.
struct NetworkModel {
    int input_width = 0;
    int input_height = 0;
    int input_channels = 0;
    std::vector<LayerSpec> layers;
    bool loaded = false;

    /// The region head (always the last layer).
    const LayerSpec& head() const { return layers.back(); }
};

/// Parse an INI-like network description: "[net]" first with width, height
/// and channels, then "[convolutional]" / "[maxpool]" sections in chain
/// order, ending with exactly one "[region]". Output shapes are resolved;
/// weights stay empty. Throws CfgError naming the offending line.
NetworkModel parse_cfg(const std::string& text);

/// Fill the model's convolution weights from a darknet-format weight file:
/// int32 major, minor, revision, a seen counter (32-bit when
/// major * 10 + minor < 2, 64-bit otherwise), then per convolutional layer
/// biases, optional batch-norm parameters and kernel weights, all
/// little-endian float32. Batch norm is folded into the kernel and bias.
/// The byte count must match exactly.
void load_weights(NetworkModel& model, const std::vector<std::uint8_t>& bytes);

/// Cross-correlation with zero padding (size-1)/2 when the pad flag is set,
/// then bias and activation. Output height = (H + 2p - size) / stride + 1.
Tensor conv_forward(const Tensor& input, const LayerSpec& layer);

/// Exact-tiling max pooling; requires size == stride and divisible dims.
Tensor maxpool_forward(const Tensor& input, const LayerSpec& layer);

/// Run the chain on a normalized input ([0,1] values) and return the raw
/// tensor entering the region head, shape (B*(5+C), S_h, S_w).
Tensor forward(const NetworkModel& model, const Tensor& input);

}  // namespace solarspot
