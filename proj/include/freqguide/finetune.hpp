#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "freqguide/condition.hpp"
#include "freqguide/denoiser.hpp"
#include "freqguide/diffusion.hpp"
#include "freqguide/sprites.hpp"

namespace freqguide::finetune {

/// Source and driving examples of one pair, images in [0,1].
struct PairSpec {
    ImageTensor source_image;
    ImageTensor driving_image;
    ConditionCode source_code;
    ConditionCode driving_code;

    [[nodiscard]] PairCodes codes() const { return {source_code, driving_code}; }
    /// Source subject, driving action.
    [[nodiscard]] ConditionCode target_code() const { return codes().target(); }
};

[[nodiscard]] PairSpec pair_spec(const sprites::RenderedTriple& triple);

struct FinetuneOptions {
    double lr = 1e-4;
};

struct FinetuneTrace {
    std::vector<double> source_loss;
    std::vector<double> driving_loss;
};

/// Runs n_tr iterations; each takes one adapter-only optimizer step on the
/// source example and then one on the driving example, with independent
/// timestep and noise draws from `rng`. Conditions are never dropped.
/// Base weights are left bit-identical. Throws ConfigError when the model has
/// no adapters.
[[nodiscard]] denoiser::DenoiserModel<float> finetune_pair(denoiser::DenoiserModel<float> model,
                                                           const PairSpec& pair, std::size_t n_tr,
                                                           const diffusion::NoiseSchedule& sched, Rng& rng,
                                                           const FinetuneOptions& options = {},
                                                           FinetuneTrace* trace = nullptr);

struct PairAdaptation {
    std::size_t rank = 4;
    /// Empty selects the model's default targets for `rank`.
    std::vector<std::string> targets;
    std::size_t n_tr = 500;
    double lr = 1e-4;
};

/// Attaches fresh adapters to a copy of `base` and finetunes them on the
/// pair. Adapter init and finetuning draw from streams derived from `seed`.
[[nodiscard]] denoiser::DenoiserModel<float> adapt_to_pair(const denoiser::DenoiserModel<float>& base,
                                                           const PairSpec& pair, const PairAdaptation& adaptation,
                                                           const diffusion::NoiseSchedule& sched, std::uint64_t seed);

/// Mean denoising loss of `image` under `code` over `draws` fixed draws
/// derived from `seed`; used to compare a model before and after finetuning.
[[nodiscard]] double reconstruction_loss(const denoiser::DenoiserModel<float>& model, const ImageTensor& image,
                                         const ConditionCode& code, const diffusion::NoiseSchedule& sched,
                                         std::uint64_t seed, std::size_t draws = 64);

}  // namespace freqguide::finetune
