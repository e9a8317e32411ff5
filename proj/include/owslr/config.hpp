#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "owslr/model.hpp"

namespace owslr {

struct TrainConfig {
    std::size_t epochs = 30;
    std::size_t batch_images = 4;
    std::size_t points_per_image = 256;
    double lr0 = 1e-4;
    std::vector<std::size_t> milestones{12, 18, 21};
    double gamma = 0.3;
    double scale_lo = 1.0;
    double scale_hi = 4.0;
    std::size_t crop = 48;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Everything a command needs: model layout, training recipe and paths.
struct RunConfig {
    std::string preset = "desk";
    ModelConfig model;
    TrainConfig train;
    std::string train_dir;
    std::string val_dir;
    std::string checkpoint = "owslr.ckpt";
    std::string output;

    void validate() const {
        model.validate();
        train.validate();
    }
};

/// Defaults for a named preset: "desk" (CPU-sized) or "paper".
RunConfig preset_config(const std::string& name);

/// Parses `key = value` lines (`#` starts a comment) on top of the preset
/// named by a `preset` key (default desk). `overrides` are applied last, in
/// order, each as "key=value". Errors name the offending key.
RunConfig parse_config(const std::string& text, const std::vector<std::string>& overrides = {});

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

/// Canonical `key = value` rendering; parse_config(to_text(c)) == c.
std::string to_text(const RunConfig& cfg);

/// Learning rate for a 0-based epoch: lr0 decayed by gamma at each milestone <= epoch.
double lr_schedule(std::size_t epoch, const TrainConfig& cfg);

} // namespace owslr
