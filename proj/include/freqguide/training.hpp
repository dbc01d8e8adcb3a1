#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "freqguide/checkpoint.hpp"
#include "freqguide/condition.hpp"
#include "freqguide/denoiser.hpp"
#include "freqguide/diffusion.hpp"

namespace freqguide::training {

/// One image of the base training set, in [0,1] image space.
struct LabeledImage {
    ImageTensor image;
    ConditionCode code;
};

struct BaseTrainingOptions {
    std::size_t epochs = 200;
    std::size_t batch_size = 8;
    double lr = 1e-3;
    /// Probability of replacing the condition with the null embedding.
    double cond_dropout = 0.1;
    /// Each example is shifted by a uniform offset in [-max_shift, max_shift]
    /// per axis (zero fill).
    int max_shift = 2;
    std::uint64_t seed = 0;
};

/// Called after every completed epoch with the updated state.
using EpochCallback =
    std::function<void(const checkpoint::TrainingState&, const denoiser::DenoiserModel<float>&)>;

/// Trains the base weights from `state.epoch` up to `options.epochs`,
/// continuing the optimizer from `state.adam`. Each epoch draws from its own
/// stream derive_seed(seed, {"epoch", epoch}), so stopping and resuming from
/// a saved state reproduces an uninterrupted run bit-exactly.
void train_base(denoiser::DenoiserModel<float>& model, const std::vector<LabeledImage>& data,
                const diffusion::NoiseSchedule& sched, const BaseTrainingOptions& options,
                checkpoint::TrainingState& state, const EpochCallback& on_epoch = {});

/// Every subject x action render at zero jitter.
[[nodiscard]] std::vector<LabeledImage> vocabulary_renders(std::size_t n_subjects, std::size_t n_actions);

}  // namespace freqguide::training
