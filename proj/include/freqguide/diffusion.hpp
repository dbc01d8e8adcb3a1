#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "freqguide/condition.hpp"
#include "freqguide/rng.hpp"
#include "freqguide/tensor.hpp"

/// Noise schedules, the forward corruption process, the epsilon-prediction
/// objective and the DDPM / DDIM reverse steps.
namespace freqguide::diffusion {

enum class ScheduleKind { linear, cosine };

/// "linear" or "cosine"; anything else throws ConfigError.
[[nodiscard]] ScheduleKind parse_schedule_kind(std::string_view name);
[[nodiscard]] std::string_view to_string(ScheduleKind kind);

struct NoiseSchedule {
    ScheduleKind kind = ScheduleKind::linear;
    std::size_t num_train_steps = 0;
    std::vector<double> beta;
    std::vector<double> alpha;
    std::vector<double> alpha_bar;
};

/// Linear: beta evenly spaced in [beta_start, beta_end].
/// Cosine: alpha_bar(t) = f(t)/f(0), f(t) = cos^2(((t+1)/N + s)/(1+s) * pi/2),
/// s = 0.008, with beta capped at 0.999. Throws ConfigError when the result
/// would start with alpha_bar_0 <= 0.99 (cosine below 18 steps).
[[nodiscard]] NoiseSchedule make_schedule(std::size_t num_train_steps, ScheduleKind kind, double beta_start = 1e-4,
                                          double beta_end = 0.02);

/// sqrt(alpha_bar) x0 + sqrt(1 - alpha_bar) noise.
[[nodiscard]] ImageTensor q_sample_at(const ImageTensor& x0, double alpha_bar, const ImageTensor& noise);
[[nodiscard]] ImageTensor q_sample(const ImageTensor& x0, std::size_t t, const ImageTensor& noise,
                                   const NoiseSchedule& sched);

/// Anything that predicts the injected noise from (x_t, t, condition).
class NoisePredictor {
public:
    virtual ~NoisePredictor() = default;
    [[nodiscard]] virtual ImageTensor predict_noise(const ImageTensor& x_t, std::size_t t,
                                                    const ConditionEmbedding& cond) const = 0;
};

/// The random part of one training example: a uniformly drawn timestep and
/// standard normal noise, in that order from `rng`.
struct TrainingDraw {
    std::size_t t = 0;
    ImageTensor noise;
};

[[nodiscard]] TrainingDraw draw_training_example(const Shape& shape, const NoiseSchedule& sched, Rng& rng);

/// Mean squared error between predicted and injected noise for one draw.
[[nodiscard]] double denoising_loss(const NoisePredictor& model, const ImageTensor& x0, const ConditionEmbedding& cond,
                                    const NoiseSchedule& sched, Rng& rng);

/// Uniformly strided subset of training timesteps for sampling. State t runs
/// from T (pure noise) down to 0 (clean); state t >= 1 sits at training
/// timestep floor(t N / T) - 1, and state 0 has alpha_bar = 1.
struct InferenceSchedule {
    std::size_t num_steps = 0;
    std::vector<std::size_t> timestep;  // index by state, entry 0 unused
    std::vector<double> alpha_bar;      // index by state, alpha_bar[0] = 1
};

[[nodiscard]] InferenceSchedule make_inference_schedule(const NoiseSchedule& sched, std::size_t num_steps);

struct DiffusionState {
    ImageTensor z;
    std::size_t t = 0;
    std::uint64_t rng_seed = 0;
};

struct StepOptions {
    /// Clamp the predicted clean sample to [-1, 1] (and re-derive epsilon
    /// from it) before stepping.
    bool clip_x0 = true;
};

/// DDIM update from state t to t-1. With eta = 0 no noise is drawn; for
/// eta > 0 the noise comes from a stream derived from (rng_seed, t).
[[nodiscard]] DiffusionState ddim_step(const DiffusionState& state, const ImageTensor& eps_pred,
                                       const InferenceSchedule& sched, double eta, StepOptions opts = {});

/// Ancestral DDPM update (posterior mean plus posterior-variance noise);
/// the final step to t = 0 adds no noise.
[[nodiscard]] DiffusionState ddpm_step(const DiffusionState& state, const ImageTensor& eps_pred,
                                       const InferenceSchedule& sched, StepOptions opts = {});

}  // namespace freqguide::diffusion
