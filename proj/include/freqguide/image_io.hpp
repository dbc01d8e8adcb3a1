#pragma once

#include <filesystem>

#include "freqguide/tensor.hpp"

namespace freqguide::io {

/// Writes a 3-channel [0,1] tensor as an 8-bit RGB PNG (values rounded and
/// clamped). One-channel tensors are written as grey RGB.
void write_png(const std::filesystem::path& path, const ImageTensor& img);

/// Reads an 8-bit PNG as a 3 x H x W tensor in [0,1]. Grey and alpha
/// variants are converted to RGB.
[[nodiscard]] ImageTensor read_png(const std::filesystem::path& path);

/// Image space [0,1] to the [-1,1] latent the diffusion model works in.
[[nodiscard]] ImageTensor encode_latent(const ImageTensor& img);
/// Inverse of encode_latent, clamped to [0,1].
[[nodiscard]] ImageTensor decode_latent(const ImageTensor& latent);

}  // namespace freqguide::io
