#include "freqguide/guidance.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

#include "freqguide/errors.hpp"
#include "freqguide/image_io.hpp"

namespace freqguide::guidance {

SamplerKind parse_sampler_kind(std::string_view name) {
    if (name == "ddim") return SamplerKind::ddim;
    if (name == "ddpm") return SamplerKind::ddpm;
    throw ConfigError("unknown sampler '" + std::string(name) + "' (expected ddim or ddpm)");
}

std::string_view to_string(SamplerKind kind) { return kind == SamplerKind::ddim ? "ddim" : "ddpm"; }

void GuidanceConfig::validate() const {
    if (T == 0) throw ConfigError("guidance: T must be >= 1");
    if (k > T) throw ConfigError("guidance: k must not exceed T");
    if (!(s_a >= 0.0) || !(s_p >= 0.0)) throw ConfigError("guidance: s_a and s_p must be >= 0");
    if (!(eta >= 0.0)) throw ConfigError("guidance: eta must be >= 0");
    if (!std::isfinite(cfg_scale)) throw ConfigError("guidance: cfg_scale must be finite");
    if (s_a > 0.0 && !ref_amp) throw ConfigError("guidance: s_a > 0 needs a reference amplitude");
    if (s_p > 0.0 && !ref_phase) throw ConfigError("guidance: s_p > 0 needs a reference phase");
}

void set_references(GuidanceConfig& cfg, const ImageTensor& source_image, const ImageTensor& driving_image) {
    cfg.ref_amp = fourier::amplitude(fourier::fft2(io::encode_latent(source_image)));
    cfg.ref_phase = fourier::phase(fourier::fft2(io::encode_latent(driving_image)));
}

ImageTensor cfg_noise(const denoiser::DenoiserModel<float>& model, const ImageTensor& z, std::size_t t,
                      const ConditionEmbedding& cond, double cfg_scale) {
    if (cfg_scale == 1.0) return model.predict_noise(z, t, cond);
    const auto uncond = model.embed(std::nullopt);
    if (cfg_scale == 0.0) return model.predict_noise(z, t, uncond);
    const std::array<ImageTensor, 2> xs{z, z};
    const std::array<std::size_t, 2> ts{t, t};
    const std::array<ConditionEmbedding, 2> cs{cond, uncond};
    auto eps = model.predict_noise_batch(xs, ts, cs);
    ImageTensor out = std::move(eps[1]);
    auto o = out.data();
    const auto c = eps[0].data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += cfg_scale * (c[i] - o[i]);
    return out;
}

ImageTensor frequency_correct(const ImageTensor& z, const GuidanceConfig& cfg) {
    ImageTensor out = z;
    if (cfg.s_a > 0.0) {
        if (!cfg.ref_amp) throw ConfigError("frequency_correct: missing reference amplitude");
        const auto g = fourier::grad_amp_distance(z, *cfg.ref_amp);
        out -= g * cfg.s_a;
    }
    if (cfg.s_p > 0.0) {
        if (!cfg.ref_phase) throw ConfigError("frequency_correct: missing reference phase");
        const auto g = fourier::grad_phase_distance(z, *cfg.ref_phase);
        out -= g * cfg.s_p;
    }
    return out;
}

ImageTensor initial_latent(const Shape& shape, std::uint64_t seed) {
    Rng rng(derive_seed(seed, {label_hash("initial_latent")}));
    return standard_normal(shape, rng);
}

namespace {

diffusion::DiffusionState sampler_step(const diffusion::DiffusionState& state, const ImageTensor& eps,
                                       const diffusion::InferenceSchedule& inf, SamplerKind sampler, double eta) {
    return sampler == SamplerKind::ddim ? diffusion::ddim_step(state, eps, inf, eta)
                                        : diffusion::ddpm_step(state, eps, inf);
}

}  // namespace

ImageTensor stepwise_sample(const denoiser::DenoiserModel<float>& model, const PairCodes& codes,
                            const GuidanceConfig& cfg, const diffusion::NoiseSchedule& sched, std::uint64_t seed) {
    cfg.validate();
    const auto inf = diffusion::make_inference_schedule(sched, cfg.T);
    const auto e_driving = model.embed(codes.driving);
    const auto e_target = model.embed(codes.target());
    diffusion::DiffusionState state{initial_latent(model.arch().image_shape(), seed), cfg.T, seed};
    for (std::size_t step = 1; step <= cfg.T; ++step) {
        const auto& cond = step <= cfg.k ? e_driving : e_target;
        const auto eps = cfg_noise(model, state.z, inf.timestep[state.t], cond, cfg.cfg_scale);
        state = sampler_step(state, eps, inf, cfg.sampler, cfg.eta);
        state.z = frequency_correct(state.z, cfg);
        if (!all_finite(state.z)) throw std::runtime_error("stepwise_sample: latent became non-finite");
    }
    return io::decode_latent(state.z);
}

ImageTensor sample_conditional(const denoiser::DenoiserModel<float>& model, const ConditionCode& code, std::size_t T,
                               double cfg_scale, const diffusion::NoiseSchedule& sched, std::uint64_t seed,
                               SamplerKind sampler, double eta) {
    if (T == 0) throw ConfigError("sample_conditional: T must be >= 1");
    const auto inf = diffusion::make_inference_schedule(sched, T);
    const auto cond = model.embed(code);
    diffusion::DiffusionState state{initial_latent(model.arch().image_shape(), seed), T, seed};
    while (state.t > 0) {
        const auto eps = cfg_noise(model, state.z, inf.timestep[state.t], cond, cfg_scale);
        state = sampler_step(state, eps, inf, sampler, eta);
    }
    return io::decode_latent(state.z);
}

}  // namespace freqguide::guidance
