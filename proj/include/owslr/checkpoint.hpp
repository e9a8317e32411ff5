#pragma once

#include <filesystem>

#include "owslr/trainer.hpp"

// Checkpoint layout (all integers little-endian u32):
//
//   "OWSLR1\n"
//   "config <n>\n"  n bytes of `key = value` text (see to_text)
//   "state <n>\n"   n bytes: adam_t, epoch and rng lines
//   "tensors <k>\n" then k records:
//       key length, key bytes, rank, dims..., f32 payload
//
// Records hold every model parameter under its dotted key followed by the
// Adam moments under "adam.m.<key>" and "adam.v.<key>".

namespace owslr {

void save_checkpoint(const TrainingSession& session, const std::filesystem::path& path);

/// Rebuilds a session from the configuration stored in the file.
TrainingSession load_checkpoint(const std::filesystem::path& path);

/// Loads parameters (and, when given, optimizer moments) into an existing
/// model, checking every key and shape against it.
void load_checkpoint_into(const std::filesystem::path& path, Model<float>& model, AdamState<float>* opt = nullptr);

} // namespace owslr
