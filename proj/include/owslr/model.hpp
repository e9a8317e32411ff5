#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "owslr/backbone.hpp"
#include "owslr/decoder.hpp"
#include "owslr/sampler.hpp"

namespace owslr {

struct ModelConfig {
    BackboneConfig backbone;
    DecoderConfig decoder;

    void validate() const {
        backbone.validate();
        decoder.validate();
        if (decoder.D != backbone.width) {
            throw ConfigError("D: decoder depth " + std::to_string(decoder.D) + " differs from backbone width " +
                              std::to_string(backbone.width));
        }
        if (decoder.out_channels != backbone.in_channels) {
            throw ConfigError("channels: decoder emits " + std::to_string(decoder.out_channels) +
                              " channels but the backbone reads " + std::to_string(backbone.in_channels));
        }
    }
};

/// Backbone and decoder weights behind one parameter list.
template <typename Scalar>
struct Model {
    ModelConfig config;
    BackboneWeights<Scalar> backbone;
    DecoderWeights<Scalar> decoder;

    std::vector<std::pair<std::string, TensorPtr<Scalar>>> named_parameters() const {
        auto out = backbone.named_parameters();
        auto dec = decoder.named_parameters();
        out.insert(out.end(), dec.begin(), dec.end());
        return out;
    }

    std::vector<TensorPtr<Scalar>> parameters() const {
        std::vector<TensorPtr<Scalar>> out;
        for (auto& [name, t] : named_parameters()) {
            out.push_back(t);
        }
        return out;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& [name, t] : named_parameters()) {
            n += t->size();
        }
        return n;
    }
};

template <typename Scalar>
Model<Scalar> init_model(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    return {cfg, init_backbone<Scalar>(cfg.backbone, seed), init_decoder<Scalar>(cfg.decoder, seed ^ 0x5DEECE66DULL)};
}

/// Decodes every query coordinate against one feature map -> [N, C].
template <typename Scalar>
TensorPtr<Scalar> predict(Graph<Scalar>& g, const Model<Scalar>& model, const FeatureMap<Scalar>& psi,
                          std::span<const NormCoord> queries) {
    return decode(g, extract_regions(g, queries, model.config.decoder.M, psi), model.decoder);
}

} // namespace owslr
