#include "owslr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "owslr/parallel.hpp"

namespace owslr {

namespace {

std::size_t floor_dim(double v) {
    // tolerate products like 24 * 2.0000000000000004
    return static_cast<std::size_t>(std::floor(v + 1e-9));
}

TensorPtr<float> target_tensor(const TrainPair& pair) {
    const std::size_t c = pair.lr_image.channels;
    std::vector<float> t(pair.targets.begin(), pair.targets.end());
    return make_tensor<float>({pair.coords.size(), c}, std::move(t));
}

void check_batch(std::span<const TrainPair> batch) {
    if (batch.empty()) {
        throw ShapeError("train_step: empty batch");
    }
    for (const auto& p : batch) {
        if (p.coords.empty()) {
            throw ShapeError("train_step: training pair has no query points");
        }
        if (p.targets.size() != p.coords.size() * p.lr_image.channels) {
            throw ShapeError("train_step: target count does not match query count");
        }
    }
}

// Flat mean over all points: each per-image mean is weighted by its share
// of the batch's target values.
TensorPtr<float> batch_objective(Graph<float>& g, std::span<const TrainPair> batch, const Model<float>& model) {
    check_batch(batch);
    double total = 0.0;
    for (const auto& p : batch) {
        total += static_cast<double>(p.targets.size());
    }
    TensorPtr<float> loss;
    for (const auto& p : batch) {
        const auto psi = extract_features(g, model.backbone, p.lr_image);
        const auto pred = predict(g, model, psi, std::span<const NormCoord>(p.coords));
        auto term = l1_loss(g, pred, target_tensor(p));
        if (batch.size() > 1) {
            term = scale(g, term, static_cast<float>(static_cast<double>(p.targets.size()) / total));
        }
        loss = loss ? add(g, loss, term) : term;
    }
    return loss;
}

} // namespace

TrainingSession new_session(const RunConfig& cfg) {
    cfg.validate();
    auto model = init_model<float>(cfg.model, cfg.train.seed);
    AdamState<float> opt(model.parameters());
    return {cfg, std::move(model), std::move(opt), 0, std::mt19937_64(cfg.train.seed)};
}

TrainPair make_pair(const ImageBuffer& hr_crop, double scale, std::size_t n_points, std::mt19937_64& rng) {
    if (!std::isfinite(scale) || scale < 1.0) {
        throw ShapeError("make_pair: scale must be a finite value >= 1");
    }
    const auto need = static_cast<std::size_t>(std::ceil(scale)) * 2;
    if (hr_crop.height < need || hr_crop.width < need) {
        throw ShapeError("make_pair: crop " + std::to_string(hr_crop.height) + "x" + std::to_string(hr_crop.width) +
                         " too small for scale " + std::to_string(scale));
    }
    if (n_points == 0) {
        throw ShapeError("make_pair: n_points must be >= 1");
    }
    const std::size_t lr_h = std::max<std::size_t>(1, floor_dim(static_cast<double>(hr_crop.height) / scale));
    const std::size_t lr_w = std::max<std::size_t>(1, floor_dim(static_cast<double>(hr_crop.width) / scale));

    TrainPair pair;
    pair.scale = scale;
    pair.lr_image = bicubic_resize(hr_crop, lr_h, lr_w);

    const std::size_t total = hr_crop.height * hr_crop.width;
    std::vector<std::size_t> picks;
    if (n_points <= total) {
        std::vector<std::size_t> pool(total);
        std::iota(pool.begin(), pool.end(), std::size_t{0});
        for (std::size_t i = 0; i < n_points; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, total - 1);
            std::swap(pool[i], pool[pick(rng)]);
        }
        pool.resize(n_points);
        picks = std::move(pool);
    } else {
        std::uniform_int_distribution<std::size_t> pick(0, total - 1);
        for (std::size_t i = 0; i < n_points; ++i) {
            picks.push_back(pick(rng));
        }
    }

    pair.coords.reserve(n_points);
    pair.targets.reserve(n_points * hr_crop.channels);
    for (auto p : picks) {
        const std::size_t r = p / hr_crop.width, c = p % hr_crop.width;
        pair.coords.push_back(hr_to_norm(r, c, hr_crop.height, hr_crop.width));
        for (std::size_t ch = 0; ch < hr_crop.channels; ++ch) {
            pair.targets.push_back(hr_crop.at(r, c, ch));
        }
    }
    return pair;
}

double batch_loss(std::span<const TrainPair> batch, const Model<float>& model) {
    Graph<float> g(false);
    return batch_objective(g, batch, model)->item();
}

double train_step(std::span<const TrainPair> batch, Model<float>& model, AdamState<float>& opt, double lr) {
    Graph<float> g;
    const auto loss = batch_objective(g, batch, model);
    const double value = loss->item();
    if (!std::isfinite(value)) {
        throw NumericError("train_step: non-finite loss");
    }
    g.backward(loss);
    adam_step(model.parameters(), opt, lr);
    return value;
}

double run_epoch(TrainingSession& session, std::span<const ImageBuffer> images) {
    if (images.empty()) {
        throw ShapeError("run_epoch: no training images");
    }
    const auto& cfg = session.config.train;
    auto& rng = session.rng;
    const double lr = lr_schedule(session.epoch, cfg);

    std::vector<std::size_t> order(images.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_images) {
        std::vector<TrainPair> batch;
        for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_images); ++i) {
            const auto& img = images[order[i]];
            const std::size_t ch = std::min(cfg.crop, img.height);
            const std::size_t cw = std::min(cfg.crop, img.width);
            std::uniform_int_distribution<std::size_t> top(0, img.height - ch);
            std::uniform_int_distribution<std::size_t> left(0, img.width - cw);
            const std::size_t t = top(rng);
            const std::size_t l = left(rng);
            const auto hr = crop(img, t, l, ch, cw);
            // largest scale the crop supports under the 2*ceil(scale) rule
            const double max_scale = std::floor(static_cast<double>(std::min(ch, cw)) / 2.0);
            if (max_scale < 1.0) {
                throw ShapeError("run_epoch: training image smaller than 2x2");
            }
            const double s = std::min(uniform_real(rng, cfg.scale_lo, cfg.scale_hi), max_scale);
            batch.push_back(make_pair(hr, s, cfg.points_per_image, rng));
        }
        loss_sum += train_step(batch, session.model, session.optimizer, lr);
        ++steps;
    }
    ++session.epoch;
    return loss_sum / static_cast<double>(steps);
}

std::pair<std::size_t, std::size_t> output_dims(std::size_t h, std::size_t w, double scale) {
    if (!std::isfinite(scale) || scale <= 0.0) {
        throw ShapeError("scale must be a positive finite number");
    }
    const auto oh = floor_dim(static_cast<double>(h) * scale);
    const auto ow = floor_dim(static_cast<double>(w) * scale);
    if (oh == 0 || ow == 0) {
        throw ShapeError("scale " + std::to_string(scale) + " yields an empty output");
    }
    return {oh, ow};
}

ImageBuffer infer_to_size(const Model<float>& model, const ImageBuffer& lr_image, std::size_t out_h,
                          std::size_t out_w) {
    if (out_h == 0 || out_w == 0) {
        throw ShapeError("infer: output dimensions must be >= 1");
    }
    Graph<float> g(false);
    const auto psi = extract_features(g, model.backbone, lr_image);
    const std::size_t c = model.config.decoder.out_channels;
    ImageBuffer out(out_h, out_w, c);

    constexpr std::size_t chunk = 2048;
    const std::size_t total = out_h * out_w;
    const std::size_t chunks = (total + chunk - 1) / chunk;
    parallel_for(chunks, [&](std::size_t k) {
        const std::size_t begin = k * chunk;
        const std::size_t end = std::min(total, begin + chunk);
        std::vector<NormCoord> coords;
        coords.reserve(end - begin);
        for (std::size_t p = begin; p < end; ++p) {
            coords.push_back(hr_to_norm(p / out_w, p % out_w, out_h, out_w));
        }
        Graph<float> local(false);
        const auto pred = predict(local, model, psi, std::span<const NormCoord>(coords));
        for (std::size_t i = 0; i < coords.size(); ++i) {
            for (std::size_t ch = 0; ch < c; ++ch) {
                out.data[static_cast<Eigen::Index>((begin + i) * c + ch)] = std::clamp<double>((*pred)[i * c + ch], 0.0, 1.0);
            }
        }
    });
    return out;
}

ImageBuffer infer_full(const Model<float>& model, const ImageBuffer& lr_image, double scale) {
    const auto [h, w] = output_dims(lr_image.height, lr_image.width, scale);
    return infer_to_size(model, lr_image, h, w);
}

} // namespace owslr
