#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "owslr/image.hpp"
#include "owslr/ops.hpp"

namespace owslr {

/// EDSR-baseline style residual encoder layout.
struct BackboneConfig {
    std::size_t num_blocks = 4;
    std::size_t width = 16;
    std::size_t in_channels = 3;
    double residual_scale = 1.0;
    /// Add the head output to the body output (the usual EDSR long skip).
    bool global_skip = true;

    void validate() const {
        if (num_blocks < 1) {
            throw ConfigError("num_blocks: must be >= 1");
        }
        if (width < 1) {
            throw ConfigError("D: must be >= 1");
        }
        if (in_channels != 1 && in_channels != 3) {
            throw ConfigError("channels: must be 1 or 3");
        }
        if (!(residual_scale > 0.0 && residual_scale <= 1.0)) {
            throw ConfigError("residual_scale: must lie in (0, 1]");
        }
    }

    /// Closed-form count: 3x3 conv weights plus biases for head, 2 per block, tail.
    std::size_t parameter_count() const {
        const std::size_t head = 9 * in_channels * width + width;
        const std::size_t conv = 9 * width * width + width;
        return head + 2 * num_blocks * conv + conv;
    }
};

template <typename Scalar>
struct ConvLayer {
    TensorPtr<Scalar> kernel; // [3,3,Cin,Cout]
    TensorPtr<Scalar> bias;   // [Cout]
};

template <typename Scalar>
struct BackboneWeights {
    BackboneConfig config;
    ConvLayer<Scalar> head;
    std::vector<std::pair<ConvLayer<Scalar>, ConvLayer<Scalar>>> blocks;
    ConvLayer<Scalar> tail;

    std::vector<std::pair<std::string, TensorPtr<Scalar>>> named_parameters() const {
        std::vector<std::pair<std::string, TensorPtr<Scalar>>> out;
        out.emplace_back("backbone.head.w", head.kernel);
        out.emplace_back("backbone.head.b", head.bias);
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            const std::string prefix = "backbone.block." + std::to_string(i) + ".";
            out.emplace_back(prefix + "conv1.w", blocks[i].first.kernel);
            out.emplace_back(prefix + "conv1.b", blocks[i].first.bias);
            out.emplace_back(prefix + "conv2.w", blocks[i].second.kernel);
            out.emplace_back(prefix + "conv2.b", blocks[i].second.bias);
        }
        out.emplace_back("backbone.tail.w", tail.kernel);
        out.emplace_back("backbone.tail.b", tail.bias);
        return out;
    }
};

/// P x Q x D latent grid; P, Q equal the input image height and width.
template <typename Scalar>
struct FeatureMap {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t depth = 0;
    TensorPtr<Scalar> values; // [P,Q,D]
};

namespace detail {

template <typename Scalar>
ConvLayer<Scalar> init_conv(std::size_t cin, std::size_t cout, std::uint64_t seed) {
    const double bound = 1.0 / std::sqrt(9.0 * static_cast<double>(cin));
    return {init_tensor<Scalar>({3, 3, cin, cout}, Uniform{seed, -bound, bound}, true),
            init_tensor<Scalar>({cout}, Uniform{seed + 1, -bound, bound}, true)};
}

// splitmix64; decorrelates per-layer seeds derived from one user seed
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

} // namespace detail

template <typename Scalar>
BackboneWeights<Scalar> init_backbone(const BackboneConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    BackboneWeights<Scalar> w;
    w.config = cfg;
    std::uint64_t salt = 0;
    w.head = detail::init_conv<Scalar>(cfg.in_channels, cfg.width, detail::mix_seed(seed, salt++));
    for (std::size_t b = 0; b < cfg.num_blocks; ++b) {
        auto first = detail::init_conv<Scalar>(cfg.width, cfg.width, detail::mix_seed(seed, salt++));
        auto second = detail::init_conv<Scalar>(cfg.width, cfg.width, detail::mix_seed(seed, salt++));
        w.blocks.emplace_back(std::move(first), std::move(second));
    }
    w.tail = detail::init_conv<Scalar>(cfg.width, cfg.width, detail::mix_seed(seed, salt++));
    return w;
}

/// Image as a constant [H,W,C] tensor.
template <typename Scalar>
TensorPtr<Scalar> image_tensor(const ImageBuffer& img) {
    return std::make_shared<Tensor<Scalar>>(Shape{img.height, img.width, img.channels},
                                            img.data.template cast<Scalar>(), false);
}

template <typename Scalar>
TensorPtr<Scalar> conv_layer(Graph<Scalar>& g, const TensorPtr<Scalar>& x, const ConvLayer<Scalar>& layer) {
    return bias_add(g, conv2d(g, x, layer.kernel), layer.bias);
}

/// Head conv, residual body (conv-relu-conv with scaled skip, no
/// normalization), tail conv. No upsampling stage: the map stays at input
/// resolution.
template <typename Scalar>
FeatureMap<Scalar> extract_features(Graph<Scalar>& g, const BackboneWeights<Scalar>& w, const TensorPtr<Scalar>& input) {
    const auto& cfg = w.config;
    if (input->rank() != 3 || input->dim(2) != cfg.in_channels) {
        throw ShapeError("extract_features: backbone expects " + std::to_string(cfg.in_channels) +
                         " channels, input is " + shape_string(input->shape()));
    }
    const auto head = conv_layer(g, input, w.head);
    auto x = head;
    for (const auto& [first, second] : w.blocks) {
        auto r = conv_layer(g, relu(g, conv_layer(g, x, first)), second);
        if (cfg.residual_scale != 1.0) {
            r = scale(g, r, static_cast<Scalar>(cfg.residual_scale));
        }
        x = add(g, x, r);
    }
    x = conv_layer(g, x, w.tail);
    if (cfg.global_skip) {
        x = add(g, x, head);
    }
    return {input->dim(0), input->dim(1), cfg.width, x};
}

template <typename Scalar>
FeatureMap<Scalar> extract_features(Graph<Scalar>& g, const BackboneWeights<Scalar>& w, const ImageBuffer& img) {
    return extract_features(g, w, image_tensor<Scalar>(img));
}

} // namespace owslr
