#pragma once

#include <random>
#include <span>
#include <vector>

#include "owslr/adam.hpp"
#include "owslr/config.hpp"
#include "owslr/image.hpp"
#include "owslr/model.hpp"

namespace owslr {

/// One training example: an LR image and sampled HR pixels to predict.
struct TrainPair {
    ImageBuffer lr_image;
    std::vector<NormCoord> coords;
    std::vector<double> targets; // coords.size() x channels, interleaved
    double scale = 1.0;
};

/// Mutable training state; everything a checkpoint captures.
struct TrainingSession {
    RunConfig config;
    Model<float> model;
    AdamState<float> optimizer;
    std::size_t epoch = 0;
    std::mt19937_64 rng;
};

TrainingSession new_session(const RunConfig& cfg);

/// Bicubic-downscales an HR crop by `scale` (floor rule) and samples
/// n_points HR pixels, without replacement when the crop has enough pixels.
TrainPair make_pair(const ImageBuffer& hr_crop, double scale, std::size_t n_points, std::mt19937_64& rng);

/// Flat mean L1 over every sampled point of the batch, without updating.
double batch_loss(std::span<const TrainPair> batch, const Model<float>& model);

/// Forward, backward and one Adam step. Returns the loss before the update.
double train_step(std::span<const TrainPair> batch, Model<float>& model, AdamState<float>& opt, double lr);

/// One pass over `images` in shuffled order: random crop, random scale,
/// pair synthesis and train steps. Returns the mean step loss and advances
/// session.epoch.
double run_epoch(TrainingSession& session, std::span<const ImageBuffer> images);

/// (floor(h * scale), floor(w * scale)).
std::pair<std::size_t, std::size_t> output_dims(std::size_t h, std::size_t w, double scale);

/// Decodes every pixel of an out_h x out_w grid from one feature map.
ImageBuffer infer_to_size(const Model<float>& model, const ImageBuffer& lr_image, std::size_t out_h,
                          std::size_t out_w);

ImageBuffer infer_full(const Model<float>& model, const ImageBuffer& lr_image, double scale);

} // namespace owslr
