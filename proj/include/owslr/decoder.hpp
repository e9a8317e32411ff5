#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "owslr/backbone.hpp"
#include "owslr/sampler.hpp"

namespace owslr {

/// Overlapping-window aggregator plus MLP readout.
struct DecoderConfig {
    std::size_t M = 4;
    std::size_t D = 16;
    std::vector<std::size_t> mlp_hidden{64, 64};
    std::size_t out_channels = 3;
    /// Append the query's in-cell offset (dx, dy) to the MLP input.
    bool rel_offset_input = false;

    void validate() const {
        if (M % 2 != 0) {
            throw ConfigError("M: must be even, got " + std::to_string(M));
        }
        if (M < 4) {
            throw ConfigError("M: must be >= 4 so the final window is at least 2x2, got " + std::to_string(M));
        }
        if (D < 1) {
            throw ConfigError("D: must be >= 1");
        }
        for (auto w : mlp_hidden) {
            if (w < 1) {
                throw ConfigError("mlp_hidden: layer widths must be >= 1");
            }
        }
        if (out_channels != 1 && out_channels != 3) {
            throw ConfigError("channels: output must have 1 or 3 channels");
        }
    }

    /// Window side per iteration: M-1, M-2, ..., M/2.
    std::vector<std::size_t> window_sizes() const {
        std::vector<std::size_t> sizes;
        for (std::size_t k = M - 1; k >= M / 2; --k) {
            sizes.push_back(k);
        }
        return sizes;
    }

    std::size_t mlp_input_width() const { return 4 * D + (rel_offset_input ? 2 : 0); }
};

enum class Corner : std::size_t { TopLeft = 0, TopRight = 1, BottomLeft = 2, BottomRight = 3 };

inline constexpr std::array<const char*, 4> corner_names{"tl", "tr", "bl", "br"};

template <typename Scalar>
struct WindowLevel {
    std::size_t size = 0;
    std::array<TensorPtr<Scalar>, 4> corners; // each [k,k,D], ordered TL, TR, BL, BR
};

template <typename Scalar>
struct DenseLayer {
    TensorPtr<Scalar> weight; // [in, out]
    TensorPtr<Scalar> bias;   // [out]
};

template <typename Scalar>
struct DecoderWeights {
    DecoderConfig config;
    std::vector<WindowLevel<Scalar>> windows;
    std::vector<DenseLayer<Scalar>> mlp;

    std::vector<std::pair<std::string, TensorPtr<Scalar>>> named_parameters() const {
        std::vector<std::pair<std::string, TensorPtr<Scalar>>> out;
        for (const auto& level : windows) {
            for (std::size_t c = 0; c < 4; ++c) {
                out.emplace_back("owd.win." + std::to_string(level.size) + "." + corner_names[c], level.corners[c]);
            }
        }
        for (std::size_t i = 0; i < mlp.size(); ++i) {
            out.emplace_back("owd.mlp." + std::to_string(i) + ".w", mlp[i].weight);
            out.emplace_back("owd.mlp." + std::to_string(i) + ".b", mlp[i].bias);
        }
        return out;
    }
};

/// Corner weights start at 1/4 so the untrained chain is a plain corner
/// average; dense layers use uniform +-1/sqrt(fan_in).
template <typename Scalar>
DecoderWeights<Scalar> init_decoder(const DecoderConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    DecoderWeights<Scalar> w;
    w.config = cfg;
    for (auto k : cfg.window_sizes()) {
        WindowLevel<Scalar> level;
        level.size = k;
        for (auto& corner : level.corners) {
            corner = init_tensor<Scalar>({k, k, cfg.D}, Constant{0.25}, true);
        }
        w.windows.push_back(std::move(level));
    }
    std::size_t fan_in = cfg.mlp_input_width();
    std::vector<std::size_t> widths = cfg.mlp_hidden;
    widths.push_back(cfg.out_channels);
    std::uint64_t salt = 1000;
    for (auto fan_out : widths) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        w.mlp.push_back({init_tensor<Scalar>({fan_in, fan_out}, Uniform{detail::mix_seed(seed, salt), -bound, bound}, true),
                         init_tensor<Scalar>({fan_out}, Uniform{detail::mix_seed(seed, salt + 1), -bound, bound}, true)});
        salt += 2;
        fan_in = fan_out;
    }
    return w;
}

namespace detail {

/// Row indices of the k x k corner sub-window in each of n stacked
/// side x side grids.
inline std::vector<std::size_t> corner_indices(std::size_t n, std::size_t side, std::size_t k, Corner corner) {
    const std::size_t shift = side - k;
    const std::size_t r0 = (corner == Corner::BottomLeft || corner == Corner::BottomRight) ? shift : 0;
    const std::size_t c0 = (corner == Corner::TopRight || corner == Corner::BottomRight) ? shift : 0;
    std::vector<std::size_t> idx;
    idx.reserve(n * k * k);
    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t r = 0; r < k; ++r) {
            for (std::size_t c = 0; c < k; ++c) {
                idx.push_back((b * side + r0 + r) * side + c0 + c);
            }
        }
    }
    return idx;
}

/// (N, side, D) of a [side,side,D] or [N,side,side,D] grid.
template <typename Scalar>
std::array<std::size_t, 3> grid_dims(const Tensor<Scalar>& grid) {
    if (grid.rank() == 3 && grid.dim(0) == grid.dim(1)) {
        return {1, grid.dim(0), grid.dim(2)};
    }
    if (grid.rank() == 4 && grid.dim(1) == grid.dim(2)) {
        return {grid.dim(0), grid.dim(1), grid.dim(3)};
    }
    throw ShapeError("expected a square [S,S,D] or [N,S,S,D] grid, got " + shape_string(grid.shape()));
}

} // namespace detail

/// One overlapping-window iteration: the four k x k corner sub-windows of a
/// (k+1)-sided grid, each multiplied elementwise by its own weight tensor,
/// summed. Accepts a single grid or a batch with a leading N dimension.
template <typename Scalar>
TensorPtr<Scalar> shrink_step(Graph<Scalar>& g, const TensorPtr<Scalar>& grid,
                              const std::array<TensorPtr<Scalar>, 4>& weights) {
    const auto [n, side, depth] = detail::grid_dims(*grid);
    const bool batched = grid->rank() == 4;
    const std::size_t k = weights[0]->dim(0);
    for (const auto& w : weights) {
        if (w->shape() != Shape{k, k, depth}) {
            throw ShapeError("shrink_step: corner weights must all be " + shape_string({k, k, depth}) + ", got " +
                             shape_string(w->shape()));
        }
    }
    if (side != k + 1) {
        throw ShapeError("shrink_step: grid side " + std::to_string(side) + " does not match window size " +
                         std::to_string(k) + " + 1");
    }
    const Shape out_shape = batched ? Shape{n, k, k, depth} : Shape{k, k, depth};
    TensorPtr<Scalar> acc;
    for (std::size_t c = 0; c < 4; ++c) {
        auto window = gather_rows(g, grid, detail::corner_indices(n, side, k, static_cast<Corner>(c)), out_shape);
        auto w = batched ? tile(g, weights[c], n) : weights[c];
        auto term = mul(g, window, w);
        acc = acc ? add(g, acc, term) : term;
    }
    return acc;
}

/// Shrinks an M-sided region down to M/2 through the configured levels.
template <typename Scalar>
TensorPtr<Scalar> run_windows(Graph<Scalar>& g, const TensorPtr<Scalar>& region, const DecoderWeights<Scalar>& w) {
    const auto [n, side, depth] = detail::grid_dims(*region);
    (void)n;
    if (side != w.config.M || depth != w.config.D) {
        throw ShapeError("run_windows: region " + shape_string(region->shape()) + " does not match M=" +
                         std::to_string(w.config.M) + ", D=" + std::to_string(w.config.D));
    }
    auto x = region;
    for (const auto& level : w.windows) {
        x = shrink_step(g, x, level.corners);
    }
    return x;
}

/// Top-left index of the 2x2 window nearest the grid center displaced by
/// `offset` cells; ties go to the smaller index.
inline std::size_t final_window_origin(std::size_t side, double offset) {
    const double target = (static_cast<double>(side) - 1.0) / 2.0 + offset;
    std::size_t best = 0;
    double best_dist = std::abs(0.5 - target);
    for (std::size_t r = 1; r + 1 < side; ++r) {
        const double d = std::abs(static_cast<double>(r) + 0.5 - target);
        if (d < best_dist) {
            best = r;
            best_dist = d;
        }
    }
    return best;
}

/// Picks the 2x2 window centered on the query from each (M/2)-sided grid.
template <typename Scalar>
TensorPtr<Scalar> select_final_window(Graph<Scalar>& g, const TensorPtr<Scalar>& grid,
                                      std::span<const std::array<double, 2>> rel_offsets) {
    const auto [n, side, depth] = detail::grid_dims(*grid);
    if (side < 2) {
        throw ShapeError("select_final_window: grid side must be >= 2");
    }
    if (rel_offsets.size() != n) {
        throw ShapeError("select_final_window: " + std::to_string(rel_offsets.size()) + " offsets for " +
                         std::to_string(n) + " grids");
    }
    if (side == 2) {
        return grid;
    }
    std::vector<std::size_t> idx;
    idx.reserve(n * 4);
    for (std::size_t b = 0; b < n; ++b) {
        const std::size_t c0 = final_window_origin(side, rel_offsets[b][0]);
        const std::size_t r0 = final_window_origin(side, rel_offsets[b][1]);
        for (std::size_t r = 0; r < 2; ++r) {
            for (std::size_t c = 0; c < 2; ++c) {
                idx.push_back((b * side + r0 + r) * side + c0 + c);
            }
        }
    }
    const Shape out_shape = grid->rank() == 4 ? Shape{n, 2, 2, depth} : Shape{2, 2, depth};
    return gather_rows(g, grid, std::move(idx), out_shape);
}

/// Dense layers with relu between them; no output activation.
template <typename Scalar>
TensorPtr<Scalar> mlp_forward(Graph<Scalar>& g, TensorPtr<Scalar> x, const std::vector<DenseLayer<Scalar>>& layers) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
        x = bias_add(g, matmul(g, x, layers[i].weight), layers[i].bias);
        if (i + 1 < layers.size()) {
            x = relu(g, x);
        }
    }
    return x;
}

/// Batched decode: [N,M,M,D] regions -> [N, out_channels] predictions
/// (unclamped).
template <typename Scalar>
TensorPtr<Scalar> decode(Graph<Scalar>& g, const RegionBatch<Scalar>& batch, const DecoderWeights<Scalar>& w) {
    const std::size_t n = batch.count();
    if (batch.values->rank() != 4 || batch.values->dim(0) != n) {
        throw ShapeError("decode: region batch values " + shape_string(batch.values->shape()) + " for " +
                         std::to_string(n) + " offsets");
    }
    auto grid = run_windows(g, batch.values, w);
    auto final = select_final_window(g, grid, std::span<const std::array<double, 2>>(batch.rel_offsets));
    auto x = reshape(g, final, {n, 4 * w.config.D});
    if (w.config.rel_offset_input) {
        std::vector<Scalar> offs;
        offs.reserve(2 * n);
        for (const auto& o : batch.rel_offsets) {
            offs.push_back(static_cast<Scalar>(o[0]));
            offs.push_back(static_cast<Scalar>(o[1]));
        }
        x = concat_columns(g, x, make_tensor<Scalar>({n, 2}, std::move(offs)));
    }
    return mlp_forward(g, x, w.mlp);
}

/// Single-region decode -> [out_channels].
template <typename Scalar>
TensorPtr<Scalar> decode(Graph<Scalar>& g, const SemiLocalRegion<Scalar>& region, const DecoderWeights<Scalar>& w) {
    const auto& v = region.values;
    if (v->rank() != 3) {
        throw ShapeError("decode: region must be [M,M,D], got " + shape_string(v->shape()));
    }
    RegionBatch<Scalar> batch{reshape(g, v, {1, v->dim(0), v->dim(1), v->dim(2)}),
                              {{region.geometry.dx, region.geometry.dy}}};
    return reshape(g, decode(g, batch, w), {w.config.out_channels});
}

} // namespace owslr
