#pragma once

// Binary checkpoints, little-endian throughout.
//
// Base file:
//   "FQGBASE\0"  u32 version (1)
//   arch: u32 image_channels, image_size, base_width, time_dim, emb_dim,
//         groups, mid_blocks, n_subjects, n_actions; u8 coord_channels, u8 input_skip
//   u32 block count, then per block: u32 name length, name bytes,
//         u64 element count, f32 values
//   u8 has_state; if 1: u64 epoch, u64 adam steps, u32 moment count, then
//         per entry: name, u64 count, f32 m[count], f32 v[count];
//         u64 loss count, f64 per-epoch mean losses
//
// Adapter file:
//   "FQGLORA\0"  u32 version (1)  arch (as above)  u64 base checksum
//   u32 rank, u32 layer count, then per layer: name, u32 out, u32 in,
//         f32 A[rank * in], f32 B[out * rank]

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "freqguide/denoiser.hpp"
#include "freqguide/nn/adam.hpp"

namespace freqguide::checkpoint {

struct TrainingState {
    std::uint64_t epoch = 0;
    nn::AdamState adam;
    std::vector<double> epoch_losses;
};

struct LoadedBase {
    denoiser::DenoiserModel<float> model;
    std::optional<TrainingState> state;
};

/// Writes base parameters only; attached adapters are ignored.
void save_base(const std::filesystem::path& path, const denoiser::DenoiserModel<float>& model,
               const TrainingState* state = nullptr);
[[nodiscard]] LoadedBase load_base(const std::filesystem::path& path);

/// Requires attached adapters.
void save_adapters(const std::filesystem::path& path, const denoiser::DenoiserModel<float>& model);
/// Attaches the stored adapters to `model`. The file must match the model's
/// architecture and base checksum.
void load_adapters(const std::filesystem::path& path, denoiser::DenoiserModel<float>& model);

}  // namespace freqguide::checkpoint
