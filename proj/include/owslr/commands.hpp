#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <vector>

#include "owslr/config.hpp"

namespace owslr {

/// Image files (.png, .pgm, .ppm) directly inside `dir`, sorted by name.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

/// Trains from cfg.train_dir, writing cfg.checkpoint after every epoch and
/// one `epoch,loss,lr` CSV row per epoch to `out`.
int cmd_train(const RunConfig& cfg, std::ostream& out);

/// Upscales one image with the checkpoint's weights.
int cmd_upscale(const RunConfig& cfg, const std::filesystem::path& input, double scale,
                const std::filesystem::path& output, std::ostream& out);

/// Downscales each HR image by `scale`, restores it with the model and with
/// bicubic, and prints `image,model_psnr,bicubic_psnr` rows plus a mean row.
int cmd_eval(const RunConfig& cfg, const std::filesystem::path& folder, double scale, std::ostream& out);

/// Finite-difference gradient suite at f64; nonzero when any check fails.
int cmd_gradcheck(std::uint64_t seed, std::size_t instances, std::ostream& out);

} // namespace owslr
