#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "solarspot/errors.hpp"
#include "solarspot/inference.hpp"
#include "support.hpp"

using namespace solarspot;

namespace {

Tensor random_tensor(int c, int h, int w, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t = Tensor::zeros(c, h, w);
    std::uniform_real_distribution<double> dist(lo, hi);
    for (float& v : t.data) v = float(dist(rng));
    return t;
}

LayerSpec conv_spec(int in_c, int in_h, int in_w, int filters, int size, int stride, bool pad,
                    const std::string& activation) {
    LayerSpec l;
    l.kind = LayerKind::Convolutional;
    l.in_channels = in_c;
    l.in_height = in_h;
    l.in_width = in_w;
    l.filters = filters;
    l.size = size;
    l.stride = stride;
    l.pad = pad;
    l.activation = activation;
    const int p = pad ? (size - 1) / 2 : 0;
    l.out_channels = filters;
    l.out_height = (in_h + 2 * p - size) / stride + 1;
    l.out_width = (in_w + 2 * p - size) / stride + 1;
    l.weights.assign(std::size_t(filters) * in_c * size * size, 0.0f);
    l.biases.assign(std::size_t(filters), 0.0f);
    return l;
}

LayerSpec pool_spec(int in_c, int in_h, int in_w, int size) {
    LayerSpec l;
    l.kind = LayerKind::MaxPool;
    l.in_channels = in_c;
    l.in_height = in_h;
    l.in_width = in_w;
    l.size = size;
    l.stride = size;
    l.out_channels = in_c;
    l.out_height = in_h / size;
    l.out_width = in_w / size;
    return l;
}

const std::string kSmallCfg =
    "[net]\n"
    "width=4\n"
    "height=4\n"
    "channels=1\n"
    "\n"
    "[convolutional]\n"
    "filters=6\n"
    "size=1\n"
    "stride=1\n"
    "pad=0\n"
    "activation=linear\n"
    "\n"
    "[region]\n"
    "anchors=1.0,1.0\n"
    "num=1\n"
    "classes=1\n";

}  // namespace

TEST_CASE("network descriptions parse") {
    SUBCASE("a one-conv detector resolves its shapes") {
        const std::string cfg =
            "[net]\n"
            "width=416\nheight=416\nchannels=1\n"
            "[convolutional]\n"
            "filters=18\nsize=1\nstride=1\npad=1\nactivation=linear\n"
            "[region]\n"
            "anchors=1.0,1.0, 2.0,2.0, 3.5,3.5\n"
            "num=3\nclasses=1\n";
        const NetworkModel model = parse_cfg(cfg);
        CHECK(model.input_width == 416);
        CHECK(model.input_channels == 1);
        REQUIRE(model.layers.size() == 2);
        CHECK(model.layers[0].out_channels == 18);
        CHECK(model.layers[0].out_width == 416);
        CHECK(model.head().kind == LayerKind::RegionHead);
        CHECK(model.head().num_anchors == 3);
        CHECK(model.head().classes == 1);
        REQUIRE(model.head().anchors.size() == 3);
        CHECK(model.head().anchors[2].first == 3.5);
        CHECK(model.head().out_width == 416);
    }
    SUBCASE("padded kernels keep the grid, pooling halves it") {
        const std::string cfg =
            "[net]\n"
            "width=416\nheight=416\nchannels=1\n"
            "[convolutional]\n"
            "filters=6\nsize=3\nstride=1\npad=1\nactivation=leaky\nbatch_normalize=1\n"
            "[maxpool]\n"
            "size=2\nstride=2\n"
            "[region]\n"
            "anchors=1,1\nnum=1\nclasses=1\n";
        const NetworkModel model = parse_cfg(cfg);
        CHECK(model.layers[0].out_height == 416);
        CHECK(model.layers[0].batch_normalize);
        CHECK(model.layers[1].out_height == 208);
        CHECK(model.head().out_height == 208);
    }
    SUBCASE("comments and blank lines are ignored") {
        const NetworkModel model = parse_cfg("# top note\n; alt comment\n" + kSmallCfg);
        CHECK(model.layers.size() == 2);
    }
    SUBCASE("rejections name the problem") {
        CHECK_THROWS_WITH_AS(parse_cfg(""), doctest::Contains("empty"), CfgError);
        CHECK_THROWS_WITH_AS(parse_cfg("[convolutional]\nfilters=1\n"),
                             doctest::Contains("[net]"), CfgError);
        CHECK_THROWS_WITH_AS(parse_cfg("width=4\n[net]\n"), doctest::Contains("outside"),
                             CfgError);
        CHECK_THROWS_WITH_AS(parse_cfg("[net]\nwidth=4\nheight=4\nchannels=1\nhello\n"),
                             doctest::Contains("key=value"), CfgError);
        CHECK_THROWS_WITH_AS(parse_cfg("[net]\nwidth=abc\nheight=4\nchannels=1\n"),
                             doctest::Contains("width"), CfgError);
        CHECK_THROWS_WITH_AS(
            parse_cfg("[net]\nwidth=4\nheight=4\nchannels=1\n[convolutional]\nsize=1\n"
                      "stride=1\npad=0\nactivation=linear\n"),
            doctest::Contains("filters"), CfgError);
        CHECK_THROWS_WITH_AS(
            parse_cfg("[net]\nwidth=4\nheight=4\nchannels=6\n[convolutional]\nfilters=6\n"
                      "size=1\nstride=1\npad=0\nactivation=relu\n[region]\nanchors=1,1\n"
                      "num=1\nclasses=1\n"),
            doctest::Contains("unsupported activation"), CfgError);
        CHECK_THROWS_WITH_AS(
            parse_cfg("[net]\nwidth=4\nheight=4\nchannels=6\n[maxpool]\nsize=2\nstride=1\n"
                      "[region]\nanchors=1,1\nnum=1\nclasses=1\n"),
            doctest::Contains("exact tiling"), CfgError);
        CHECK_THROWS_WITH_AS(
            parse_cfg("[net]\nwidth=5\nheight=5\nchannels=6\n[maxpool]\nsize=2\nstride=2\n"
                      "[region]\nanchors=1,1\nnum=1\nclasses=1\n"),
            doctest::Contains("not divisible"), CfgError);
        CHECK_THROWS_WITH_AS(
            parse_cfg("[net]\nwidth=4\nheight=4\nchannels=6\n[region]\nanchors=1,1,2,2\n"
                      "num=1\nclasses=1\n"),
            doctest::Contains("anchors"), CfgError);
        CHECK_THROWS_WITH_AS(
            parse_cfg("[net]\nwidth=4\nheight=4\nchannels=7\n[region]\nanchors=1,1\n"
                      "num=1\nclasses=1\n"),
            doctest::Contains("num*(5+classes)"), CfgError);
        CHECK_THROWS_WITH_AS(parse_cfg(kSmallCfg + "[maxpool]\nsize=2\nstride=2\n"),
                             doctest::Contains("last"), CfgError);
        CHECK_THROWS_WITH_AS(
            parse_cfg("[net]\nwidth=4\nheight=4\nchannels=1\n[convolutional]\nfilters=6\n"
                      "size=1\nstride=1\npad=0\nactivation=linear\n"),
            doctest::Contains("no [region]"), CfgError);
        CHECK_THROWS_WITH_AS(parse_cfg("[net]\nwidth=4\nheight=4\nchannels=1\n[wave]\nk=1\n"),
                             doctest::Contains("unknown section"), CfgError);
    }
    SUBCASE("the last assignment of a repeated key wins") {
        const NetworkModel model = parse_cfg(
            "[net]\nwidth=8\nwidth=4\nheight=4\nchannels=6\n[region]\nanchors=1,1\n"
            "num=1\nclasses=1\n");
        CHECK(model.input_width == 4);
    }
}

TEST_CASE("weight files load in declaration order") {
    SUBCASE("biases come before kernels") {
        NetworkModel model = parse_cfg(kSmallCfg);
        std::vector<float> floats;
        for (int i = 0; i < 6; ++i) floats.push_back(float(i) * 0.1f);
        for (int i = 0; i < 6; ++i) floats.push_back(float(i + 1));
        load_weights(model, testsupport::weight_file_bytes(0, 1, 1000, floats));
        CHECK(model.loaded);

        Tensor input = Tensor::zeros(1, 4, 4);
        input.at(0, 2, 3) = 0.5f;
        const Tensor out = forward(model, input);
        REQUIRE(out.channels == 6);
        for (int ch = 0; ch < 6; ++ch) {
            CHECK(out.at(ch, 2, 3) ==
                  doctest::Approx(float(ch + 1) * 0.5f + float(ch) * 0.1f).epsilon(1e-6));
            CHECK(out.at(ch, 0, 0) == doctest::Approx(float(ch) * 0.1f).epsilon(1e-6));
        }
    }
    SUBCASE("an all-zero file yields an all-zero response") {
        NetworkModel model = parse_cfg(kSmallCfg);
        load_weights(model, testsupport::weight_file_bytes(0, 0, 0, std::vector<float>(12, 0.0f)));
        std::mt19937_64 rng(4001);
        const Tensor out = forward(model, random_tensor(1, 4, 4, rng, 0.0, 1.0));
        for (const float v : out.data) CHECK(v == 0.0f);
    }
    SUBCASE("both seen-counter widths are understood") {
        const std::vector<float> floats(12, 0.25f);
        NetworkModel narrow = parse_cfg(kSmallCfg);
        load_weights(narrow, testsupport::weight_file_bytes(0, 1, 7, floats));
        CHECK(narrow.loaded);

        NetworkModel wide = parse_cfg(kSmallCfg);
        const auto bytes = testsupport::weight_file_bytes(2, 0, (std::uint64_t(3) << 32) | 9,
                                                          floats);
        CHECK(bytes.size() == std::size_t(12 + 8 + 12 * 4));
        load_weights(wide, bytes);
        CHECK(wide.loaded);
        CHECK(narrow.layers[0].weights == wide.layers[0].weights);
    }
    SUBCASE("a short or bloated payload is rejected with the float counts") {
        NetworkModel model = parse_cfg(kSmallCfg);
        CHECK_THROWS_WITH_AS(
            load_weights(model, testsupport::weight_file_bytes(0, 1, 0,
                                                               std::vector<float>(11, 0.0f))),
            doctest::Contains("expected 12 floats"), WeightSizeMismatch);
        CHECK_THROWS_WITH_AS(
            load_weights(model, testsupport::weight_file_bytes(0, 1, 0,
                                                               std::vector<float>(13, 0.0f))),
            doctest::Contains("file has 13"), WeightSizeMismatch);
        auto ragged = testsupport::weight_file_bytes(0, 1, 0, std::vector<float>(12, 0.0f));
        ragged.push_back(0);
        CHECK_THROWS_AS(load_weights(model, ragged), WeightSizeMismatch);
    }
    SUBCASE("truncated headers are rejected") {
        NetworkModel model = parse_cfg(kSmallCfg);
        CHECK_THROWS_AS(load_weights(model, std::vector<std::uint8_t>(5, 0)), BadHeader);
        CHECK_THROWS_WITH_AS(load_weights(model, std::vector<std::uint8_t>(11, 0)),
                             doctest::Contains("12-byte"), BadHeader);
        auto bytes = testsupport::weight_file_bytes(2, 0, 0, {});
        bytes.resize(14);
        CHECK_THROWS_WITH_AS(load_weights(model, bytes), doctest::Contains("seen"), BadHeader);
    }
    SUBCASE("non-finite values are located") {
        NetworkModel model = parse_cfg(kSmallCfg);
        std::vector<float> floats(12, 0.5f);
        floats[7] = std::numeric_limits<float>::quiet_NaN();
        CHECK_THROWS_WITH_AS(load_weights(model, testsupport::weight_file_bytes(0, 1, 0, floats)),
                             doctest::Contains("layer 0"), NonFiniteWeight);
    }
    SUBCASE("a zero-variance batch-norm channel is caught after folding") {
        NetworkModel model = parse_cfg(
            "[net]\nwidth=4\nheight=4\nchannels=1\n"
            "[convolutional]\nfilters=6\nsize=1\nstride=1\npad=0\nactivation=linear\n"
            "batch_normalize=1\n"
            "[region]\nanchors=1,1\nnum=1\nclasses=1\n");
        std::vector<float> floats;
        for (int i = 0; i < 6; ++i) floats.push_back(0.0f);     // biases
        for (int i = 0; i < 6; ++i) floats.push_back(1.0f);     // scales
        for (int i = 0; i < 6; ++i) floats.push_back(0.0f);     // means
        for (int i = 0; i < 6; ++i) floats.push_back(-1e-5f);   // variances
        for (int i = 0; i < 6; ++i) floats.push_back(1.0f);     // kernels
        CHECK_THROWS_WITH_AS(load_weights(model, testsupport::weight_file_bytes(0, 2, 0, floats)),
                             doctest::Contains("after batch-norm folding"), NonFiniteWeight);
    }
}

TEST_CASE("batch-norm folding matches explicit normalization") {
    std::mt19937_64 rng(4002);
    std::uniform_real_distribution<double> small(-1.0, 1.0);
    std::uniform_real_distribution<double> gamma_dist(0.5, 1.5);
    std::uniform_real_distribution<double> var_dist(0.05, 2.0);

    for (int trial = 0; trial < 12; ++trial) {
        const int c_in = 1 + int(rng() % 3);
        const int k = (trial % 2 == 0) ? 1 : 3;
        const int f = 6;
        const std::string activation = (trial % 3 == 0) ? "linear" : "leaky";
        const std::string cfg =
            "[net]\nwidth=8\nheight=8\nchannels=" + std::to_string(c_in) +
            "\n[convolutional]\nfilters=6\nsize=" + std::to_string(k) +
            "\nstride=1\npad=1\nactivation=" + activation +
            "\nbatch_normalize=1\n[region]\nanchors=1,1\nnum=1\nclasses=1\n";
        NetworkModel model = parse_cfg(cfg);

        std::vector<float> beta(f), gamma(f), mean(f), variance(f);
        std::vector<float> raw(std::size_t(f) * c_in * k * k);
        for (float& v : raw) v = float(small(rng));
        for (int i = 0; i < f; ++i) {
            beta[i] = float(small(rng));
            gamma[i] = float(gamma_dist(rng));
            mean[i] = float(small(rng));
            variance[i] = float(var_dist(rng));
        }
        std::vector<float> floats;
        floats.insert(floats.end(), beta.begin(), beta.end());
        floats.insert(floats.end(), gamma.begin(), gamma.end());
        floats.insert(floats.end(), mean.begin(), mean.end());
        floats.insert(floats.end(), variance.begin(), variance.end());
        floats.insert(floats.end(), raw.begin(), raw.end());
        load_weights(model, testsupport::weight_file_bytes(0, 2, 0, floats));

        const Tensor input = random_tensor(c_in, 8, 8, rng);
        const Tensor folded = forward(model, input);
        const Tensor explicit_bn =
            oracles::conv_then_bn(input, model.layers[0], raw, beta, gamma, mean, variance);
        CHECK(oracles::max_rel_err(folded, explicit_bn) <= 1e-4);
    }
}

TEST_CASE("convolution forward") {
    std::mt19937_64 rng(4003);

    SUBCASE("a unit 1x1 kernel is the identity") {
        const Tensor input = random_tensor(1, 5, 7, rng);
        LayerSpec l = conv_spec(1, 5, 7, 1, 1, 1, false, "linear");
        l.weights = {1.0f};
        const Tensor out = conv_forward(input, l);
        CHECK(out.data == input.data);
    }
    SUBCASE("a 3x3 box kernel counts covered pixels") {
        Tensor input = Tensor::zeros(1, 4, 5);
        for (float& v : input.data) v = 1.0f;
        LayerSpec l = conv_spec(1, 4, 5, 1, 3, 1, true, "linear");
        l.weights.assign(9, 1.0f);
        const Tensor out = conv_forward(input, l);
        CHECK(out.at(0, 0, 0) == 4.0f);
        CHECK(out.at(0, 0, 2) == 6.0f);
        CHECK(out.at(0, 1, 0) == 6.0f);
        CHECK(out.at(0, 1, 2) == 9.0f);
        CHECK(out.at(0, 3, 4) == 4.0f);
    }
    SUBCASE("random shapes agree with the six-loop reference") {
        for (int trial = 0; trial < 30; ++trial) {
            const int c = 1 + int(rng() % 4);
            const int f = 1 + int(rng() % 5);
            const int k = (rng() % 2 == 0) ? 1 : 3;
            const int s = 1 + int(rng() % 2);
            const bool pad = rng() % 2 == 0;
            const int p = pad ? (k - 1) / 2 : 0;
            const int h = k + int(rng() % 10);
            const int w = k + int(rng() % 10);
            LayerSpec l = conv_spec(c, h, w, f, k, s, pad, (rng() % 2 == 0) ? "leaky" : "linear");
            (void)p;
            std::uniform_real_distribution<double> small(-1.0, 1.0);
            for (float& v : l.weights) v = float(small(rng));
            for (float& v : l.biases) v = float(small(rng));
            const Tensor input = random_tensor(c, h, w, rng);
            const Tensor fast = conv_forward(input, l);
            const Tensor slow = oracles::naive_conv(input, l);
            CHECK(fast.channels == slow.channels);
            CHECK(fast.height == slow.height);
            CHECK(fast.width == slow.width);
            CHECK(oracles::max_rel_err(fast, slow) <= 1e-4);
        }
    }
    SUBCASE("the linear response scales with its input") {
        LayerSpec l = conv_spec(2, 6, 6, 3, 3, 1, true, "linear");
        std::uniform_real_distribution<double> small(-1.0, 1.0);
        for (float& v : l.weights) v = float(small(rng));
        Tensor input = random_tensor(2, 6, 6, rng);
        Tensor scaled = input;
        for (float& v : scaled.data) v *= 2.5f;
        const Tensor base = conv_forward(input, l);
        const Tensor big = conv_forward(scaled, l);
        for (std::size_t i = 0; i < base.data.size(); ++i)
            CHECK(big.data[i] == doctest::Approx(2.5f * base.data[i]).epsilon(1e-5));
    }
    SUBCASE("leaky activation keeps a tenth of negative responses") {
        Tensor input = Tensor::zeros(1, 1, 2);
        input.at(0, 0, 0) = -2.0f;
        input.at(0, 0, 1) = 3.0f;
        LayerSpec l = conv_spec(1, 1, 2, 1, 1, 1, false, "leaky");
        l.weights = {1.0f};
        const Tensor out = conv_forward(input, l);
        CHECK(out.at(0, 0, 0) == 0.1f * -2.0f);
        CHECK(out.at(0, 0, 1) == 3.0f);
    }
    SUBCASE("shape violations are rejected") {
        LayerSpec l = conv_spec(2, 4, 4, 1, 3, 1, true, "linear");
        const Tensor wrong_c = Tensor::zeros(3, 4, 4);
        CHECK_THROWS_AS(conv_forward(wrong_c, l), ShapeMismatch);
        LayerSpec bare = conv_spec(1, 2, 2, 1, 3, 1, false, "linear");
        CHECK_THROWS_AS(conv_forward(Tensor::zeros(1, 2, 2), bare), ShapeMismatch);
        LayerSpec short_weights = conv_spec(1, 4, 4, 2, 3, 1, true, "linear");
        short_weights.weights.pop_back();
        CHECK_THROWS_AS(conv_forward(Tensor::zeros(1, 4, 4), short_weights), ShapeMismatch);
    }
}

TEST_CASE("max pooling") {
    std::mt19937_64 rng(4004);

    SUBCASE("a 2x2 window picks the largest value") {
        Tensor input = Tensor::zeros(1, 2, 2);
        input.data = {1.0f, 2.0f, 3.0f, 4.0f};
        const Tensor out = maxpool_forward(input, pool_spec(1, 2, 2, 2));
        REQUIRE(out.data.size() == 1);
        CHECK(out.data[0] == 4.0f);
    }
    SUBCASE("constant fields stay constant") {
        Tensor input = Tensor::zeros(3, 8, 8);
        for (float& v : input.data) v = -0.75f;
        const Tensor out = maxpool_forward(input, pool_spec(3, 8, 8, 2));
        for (const float v : out.data) CHECK(v == -0.75f);
    }
    SUBCASE("random inputs match the reference exactly") {
        for (int trial = 0; trial < 20; ++trial) {
            const int c = 1 + int(rng() % 3);
            const int size = 1 + int(rng() % 3);
            const int h = size * (1 + int(rng() % 5));
            const int w = size * (1 + int(rng() % 5));
            const Tensor input = random_tensor(c, h, w, rng);
            const Tensor fast = maxpool_forward(input, pool_spec(c, h, w, size));
            const Tensor slow = oracles::naive_maxpool(input, size);
            CHECK(fast.data == slow.data);
        }
    }
    SUBCASE("inputs that do not tile are rejected") {
        CHECK_THROWS_AS(maxpool_forward(Tensor::zeros(1, 5, 4), pool_spec(1, 5, 4, 2)),
                        ShapeMismatch);
        LayerSpec l = pool_spec(1, 4, 4, 2);
        l.stride = 1;
        CHECK_THROWS_AS(maxpool_forward(Tensor::zeros(1, 4, 4), l), ShapeMismatch);
    }
}

TEST_CASE("full forward pass") {
    SUBCASE("layers chain through pooling to the head") {
        NetworkModel model = parse_cfg(
            "[net]\nwidth=4\nheight=4\nchannels=1\n"
            "[convolutional]\nfilters=6\nsize=1\nstride=1\npad=0\nactivation=linear\n"
            "[maxpool]\nsize=2\nstride=2\n"
            "[region]\nanchors=1,1\nnum=1\nclasses=1\n");
        load_weights(model, testsupport::weight_file_bytes(0, 1, 0, std::vector<float>(12, 1.0f)));
        Tensor input = Tensor::zeros(1, 4, 4);
        input.at(0, 0, 0) = 0.5f;
        const Tensor out = forward(model, input);
        CHECK(out.channels == 6);
        CHECK(out.height == 2);
        CHECK(out.width == 2);
        CHECK(out.at(0, 0, 0) == 1.5f);
        CHECK(out.at(0, 1, 1) == 1.0f);
    }
    SUBCASE("two runs produce bit-identical tensors") {
        NetworkModel model = parse_cfg(kSmallCfg);
        std::mt19937_64 rng(4005);
        std::vector<float> floats;
        std::uniform_real_distribution<double> small(-1.0, 1.0);
        for (int i = 0; i < 12; ++i) floats.push_back(float(small(rng)));
        load_weights(model, testsupport::weight_file_bytes(0, 1, 0, floats));
        const Tensor input = random_tensor(1, 4, 4, rng);
        const Tensor a = forward(model, input);
        const Tensor b = forward(model, input);
        CHECK(a.data == b.data);
    }
    SUBCASE("an unloaded model refuses to run") {
        NetworkModel model = parse_cfg(kSmallCfg);
        CHECK_THROWS_AS(forward(model, Tensor::zeros(1, 4, 4)), NotLoaded);
    }
    SUBCASE("input shape is checked") {
        NetworkModel model = parse_cfg(kSmallCfg);
        load_weights(model, testsupport::weight_file_bytes(0, 1, 0, std::vector<float>(12, 0.0f)));
        CHECK_THROWS_AS(forward(model, Tensor::zeros(1, 4, 5)), ShapeMismatch);
        CHECK_THROWS_AS(forward(model, Tensor::zeros(2, 4, 4)), ShapeMismatch);
    }
}
