#include "freqguide/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "freqguide/errors.hpp"

namespace freqguide::diffusion {

ScheduleKind parse_schedule_kind(std::string_view name) {
    if (name == "linear") return ScheduleKind::linear;
    if (name == "cosine") return ScheduleKind::cosine;
    throw ConfigError("unknown schedule kind '" + std::string(name) + "' (expected linear or cosine)");
}

std::string_view to_string(ScheduleKind kind) { return kind == ScheduleKind::linear ? "linear" : "cosine"; }

NoiseSchedule make_schedule(std::size_t num_train_steps, ScheduleKind kind, double beta_start, double beta_end) {
    if (num_train_steps < 10) throw ConfigError("make_schedule: num_train_steps must be >= 10");
    NoiseSchedule s;
    s.kind = kind;
    s.num_train_steps = num_train_steps;
    s.beta.resize(num_train_steps);
    const auto n = static_cast<double>(num_train_steps);
    if (kind == ScheduleKind::linear) {
        if (!(beta_start > 0.0 && beta_end < 1.0 && beta_start < beta_end)) {
            throw ConfigError("make_schedule: need 0 < beta_start < beta_end < 1");
        }
        for (std::size_t t = 0; t < num_train_steps; ++t) {
            s.beta[t] = beta_start + (beta_end - beta_start) * static_cast<double>(t) / (n - 1.0);
        }
    } else {
        constexpr double offset = 0.008;
        auto f = [&](double t) {
            const double c = std::cos((t / n + offset) / (1.0 + offset) * std::numbers::pi / 2.0);
            return c * c;
        };
        for (std::size_t t = 0; t < num_train_steps; ++t) {
            const auto td = static_cast<double>(t);
            s.beta[t] = std::min(1.0 - f(td + 1.0) / f(td), 0.999);
        }
    }
    s.alpha.resize(num_train_steps);
    s.alpha_bar.resize(num_train_steps);
    double running = 1.0;
    for (std::size_t t = 0; t < num_train_steps; ++t) {
        s.alpha[t] = 1.0 - s.beta[t];
        running *= s.alpha[t];
        s.alpha_bar[t] = running;
    }
    if (s.alpha_bar[0] <= 0.99) {
        throw ConfigError("make_schedule: first step too coarse (alpha_bar_0 = " + std::to_string(s.alpha_bar[0]) +
                          "); use more training steps");
    }
    return s;
}

ImageTensor q_sample_at(const ImageTensor& x0, double alpha_bar, const ImageTensor& noise) {
    require_same_shape(x0.shape(), noise.shape(), "q_sample");
    const double a = std::sqrt(alpha_bar);
    const double b = std::sqrt(1.0 - alpha_bar);
    ImageTensor out(x0.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + b * noise[i];
    return out;
}

ImageTensor q_sample(const ImageTensor& x0, std::size_t t, const ImageTensor& noise, const NoiseSchedule& sched) {
    if (t >= sched.num_train_steps) {
        throw std::out_of_range("q_sample: timestep " + std::to_string(t) + " outside schedule of " +
                                std::to_string(sched.num_train_steps));
    }
    return q_sample_at(x0, sched.alpha_bar[t], noise);
}

TrainingDraw draw_training_example(const Shape& shape, const NoiseSchedule& sched, Rng& rng) {
    TrainingDraw d;
    d.t = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(sched.num_train_steps) - 1));
    d.noise = standard_normal(shape, rng);
    return d;
}

double denoising_loss(const NoisePredictor& model, const ImageTensor& x0, const ConditionEmbedding& cond,
                      const NoiseSchedule& sched, Rng& rng) {
    const TrainingDraw draw = draw_training_example(x0.shape(), sched, rng);
    const ImageTensor x_t = q_sample(x0, draw.t, draw.noise, sched);
    const ImageTensor pred = model.predict_noise(x_t, draw.t, cond);
    require_same_shape(pred.shape(), x0.shape(), "denoising_loss");
    double total = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - draw.noise[i];
        total += d * d;
    }
    return total / static_cast<double>(pred.size());
}

InferenceSchedule make_inference_schedule(const NoiseSchedule& sched, std::size_t num_steps) {
    if (num_steps < 1 || num_steps > sched.num_train_steps) {
        throw ConfigError("inference steps must be in [1, num_train_steps]");
    }
    InferenceSchedule inf;
    inf.num_steps = num_steps;
    inf.timestep.assign(num_steps + 1, 0);
    inf.alpha_bar.assign(num_steps + 1, 1.0);
    for (std::size_t t = 1; t <= num_steps; ++t) {
        inf.timestep[t] = t * sched.num_train_steps / num_steps - 1;
        inf.alpha_bar[t] = sched.alpha_bar[inf.timestep[t]];
    }
    return inf;
}

namespace {

struct Prediction {
    ImageTensor x0;
    ImageTensor eps;
};

Prediction split_prediction(const ImageTensor& z, const ImageTensor& eps_pred, double ab, bool clip) {
    require_same_shape(z.shape(), eps_pred.shape(), "sampler step");
    const double sa = std::sqrt(ab);
    const double sb = std::sqrt(1.0 - ab);
    Prediction p{ImageTensor(z.shape()), eps_pred};
    for (std::size_t i = 0; i < z.size(); ++i) p.x0[i] = (z[i] - sb * eps_pred[i]) / sa;
    if (clip) {
        for (std::size_t i = 0; i < z.size(); ++i) {
            const double c = std::clamp(p.x0[i], -1.0, 1.0);
            if (c != p.x0[i]) {
                p.x0[i] = c;
                p.eps[i] = (z[i] - sa * c) / sb;
            }
        }
    }
    return p;
}

void check_step(const DiffusionState& state, const InferenceSchedule& sched) {
    if (state.t == 0) throw std::out_of_range("sampler step requested at t = 0");
    if (state.t > sched.num_steps) throw std::out_of_range("sampler state beyond the inference schedule");
}

ImageTensor step_noise(const DiffusionState& state) {
    Rng rng(derive_seed(state.rng_seed, {label_hash("step_noise"), state.t}));
    return standard_normal(state.z.shape(), rng);
}

}  // namespace

DiffusionState ddim_step(const DiffusionState& state, const ImageTensor& eps_pred, const InferenceSchedule& sched,
                         double eta, StepOptions opts) {
    check_step(state, sched);
    const double ab = sched.alpha_bar[state.t];
    const double ab_prev = sched.alpha_bar[state.t - 1];
    const Prediction p = split_prediction(state.z, eps_pred, ab, opts.clip_x0);

    const double sigma =
        eta == 0.0 ? 0.0 : eta * std::sqrt((1.0 - ab_prev) / (1.0 - ab)) * std::sqrt(1.0 - ab / ab_prev);
    const double dir = std::sqrt(std::max(0.0, 1.0 - ab_prev - sigma * sigma));
    const double sa_prev = std::sqrt(ab_prev);

    DiffusionState next{ImageTensor(state.z.shape()), state.t - 1, state.rng_seed};
    for (std::size_t i = 0; i < next.z.size(); ++i) next.z[i] = sa_prev * p.x0[i] + dir * p.eps[i];
    if (sigma > 0.0) {
        const ImageTensor noise = step_noise(state);
        for (std::size_t i = 0; i < next.z.size(); ++i) next.z[i] += sigma * noise[i];
    }
    return next;
}

DiffusionState ddpm_step(const DiffusionState& state, const ImageTensor& eps_pred, const InferenceSchedule& sched,
                         StepOptions opts) {
    check_step(state, sched);
    const double ab = sched.alpha_bar[state.t];
    const double ab_prev = sched.alpha_bar[state.t - 1];
    const Prediction p = split_prediction(state.z, eps_pred, ab, opts.clip_x0);

    const double beta = 1.0 - ab / ab_prev;
    const double coef_x0 = std::sqrt(ab_prev) * beta / (1.0 - ab);
    const double coef_z = std::sqrt(1.0 - beta) * (1.0 - ab_prev) / (1.0 - ab);

    DiffusionState next{ImageTensor(state.z.shape()), state.t - 1, state.rng_seed};
    for (std::size_t i = 0; i < next.z.size(); ++i) next.z[i] = coef_x0 * p.x0[i] + coef_z * state.z[i];
    if (state.t > 1) {
        const double sigma = std::sqrt(beta * (1.0 - ab_prev) / (1.0 - ab));
        const ImageTensor noise = step_noise(state);
        for (std::size_t i = 0; i < next.z.size(); ++i) next.z[i] += sigma * noise[i];
    }
    return next;
}

}  // namespace freqguide::diffusion
