#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

#include "freqguide/condition.hpp"
#include "freqguide/denoiser.hpp"
#include "freqguide/diffusion.hpp"
#include "freqguide/fourier.hpp"

namespace freqguide::guidance {

enum class SamplerKind { ddim, ddpm };

[[nodiscard]] SamplerKind parse_sampler_kind(std::string_view name);
[[nodiscard]] std::string_view to_string(SamplerKind kind);

struct GuidanceConfig {
    double s_a = 1e-6;
    double s_p = 1e-3;
    /// Number of leading steps conditioned on the driving code.
    std::size_t k = 5;
    std::size_t T = 50;
    double cfg_scale = 3.0;
    SamplerKind sampler = SamplerKind::ddim;
    double eta = 0.0;
    /// Amplitude of the source latent and phase of the driving latent.
    std::optional<fourier::AmplitudeMap> ref_amp;
    std::optional<fourier::PhaseMap> ref_phase;

    /// Throws ConfigError for k > T, T = 0, negative scales or eta, and for a
    /// positive scale whose reference is missing.
    void validate() const;
};

/// Sets ref_amp from the source image and ref_phase from the driving image,
/// both taken in the model's [-1,1] latent space.
void set_references(GuidanceConfig& cfg, const ImageTensor& source_image, const ImageTensor& driving_image);

/// Classifier-free guidance: eps_u + scale (eps_c - eps_u). Scale 1 returns
/// the conditional prediction and scale 0 the unconditional one, exactly.
/// `t` is a training timestep.
[[nodiscard]] ImageTensor cfg_noise(const denoiser::DenoiserModel<float>& model, const ImageTensor& z, std::size_t t,
                                    const ConditionEmbedding& cond, double cfg_scale);

/// z - s_a grad G_a(z) - s_p grad G_p(z). Terms with a zero scale are
/// skipped, so zero scales return z unchanged.
[[nodiscard]] ImageTensor frequency_correct(const ImageTensor& z, const GuidanceConfig& cfg);

/// Seeded standard normal starting latent shared by every sampler here.
[[nodiscard]] ImageTensor initial_latent(const Shape& shape, std::uint64_t seed);

/// Stepwise-conditioned, frequency-guided sampling. Steps 1..k use the
/// driving code and steps k+1..T the target code; after every sampler step
/// the latent is corrected by frequency_correct. Returns an image in [0,1].
[[nodiscard]] ImageTensor stepwise_sample(const denoiser::DenoiserModel<float>& model, const PairCodes& codes,
                                          const GuidanceConfig& cfg, const diffusion::NoiseSchedule& sched,
                                          std::uint64_t seed);

/// Plain conditional sampling with classifier-free guidance, no stepwise
/// schedule and no frequency correction. Returns an image in [0,1].
[[nodiscard]] ImageTensor sample_conditional(const denoiser::DenoiserModel<float>& model, const ConditionCode& code,
                                             std::size_t T, double cfg_scale, const diffusion::NoiseSchedule& sched,
                                             std::uint64_t seed, SamplerKind sampler = SamplerKind::ddim,
                                             double eta = 0.0);

}  // namespace freqguide::guidance
