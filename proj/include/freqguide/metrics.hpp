#pragma once

#include "freqguide/tensor.hpp"

namespace freqguide::metrics {

/// PSNR reported for identical images (and the ceiling for all others).
inline constexpr double kPsnrCap = 99.0;
/// A pixel belongs to the figure when any channel exceeds this value.
inline constexpr double kFigureThreshold = 0.1;

/// Histogram-intersection similarity of the figure-pixel colour
/// distributions: 16 bins per channel, intersection averaged over R, G, B.
/// The figure is everything brighter than the black background. Returns 0
/// when either image has no figure pixels.
[[nodiscard]] double subject_fidelity(const ImageTensor& generated, const ImageTensor& source);

/// PSNR in dB against the ground-truth render, peak value 1, capped at 99.
[[nodiscard]] double oracle_target_error(const ImageTensor& generated, const ImageTensor& target);

}  // namespace freqguide::metrics
