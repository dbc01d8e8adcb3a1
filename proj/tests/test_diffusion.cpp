#include <catch_amalgamated.hpp>

#include <cmath>

#include "freqguide/diffusion.hpp"
#include "freqguide/errors.hpp"
#include "freqguide/metrics.hpp"
#include "support/oracles.hpp"

using namespace freqguide;
using namespace freqguide::diffusion;
using Catch::Approx;

namespace {

/// Predicts exactly the noise that maps a fixed x0 to x_t.
class OnePointOracle final : public NoisePredictor {
public:
    OnePointOracle(ImageTensor x0, const NoiseSchedule& sched) : x0_(std::move(x0)), sched_(sched) {}
    ImageTensor predict_noise(const ImageTensor& x_t, std::size_t t, const ConditionEmbedding&) const override {
        const double ab = sched_.alpha_bar[t];
        ImageTensor eps(x_t.shape());
        for (std::size_t i = 0; i < eps.size(); ++i) eps[i] = (x_t[i] - std::sqrt(ab) * x0_[i]) / std::sqrt(1.0 - ab);
        return eps;
    }

private:
    ImageTensor x0_;
    const NoiseSchedule& sched_;
};

class ZeroPredictor final : public NoisePredictor {
public:
    ImageTensor predict_noise(const ImageTensor& x_t, std::size_t, const ConditionEmbedding&) const override {
        return ImageTensor(x_t.shape());
    }
};

ImageTensor run_ddim(const NoisePredictor& model, const InferenceSchedule& inf, ImageTensor z, double eta,
                     std::uint64_t seed) {
    DiffusionState state{std::move(z), inf.num_steps, seed};
    while (state.t > 0) {
        const auto eps = model.predict_noise(state.z, inf.timestep[state.t], ConditionEmbedding{});
        state = ddim_step(state, eps, inf, eta);
    }
    return state.z;
}

}  // namespace

TEST_CASE("linear schedule matches a direct product", "[diffusion]") {
    const auto s = make_schedule(1000, ScheduleKind::linear);
    double prod = 1.0;
    for (int t = 0; t < 1000; ++t) {
        prod *= 1.0 - (1e-4 + (0.02 - 1e-4) * t / 999.0);
        REQUIRE(s.alpha_bar[static_cast<std::size_t>(t)] == Approx(prod).epsilon(1e-12));
    }
    REQUIRE(s.alpha_bar[999] < 0.01);
    REQUIRE(s.beta.front() == Approx(1e-4));
    REQUIRE(s.beta.back() == Approx(0.02));
}

TEST_CASE("schedule invariants hold for both kinds", "[diffusion][property]") {
    for (auto kind : {ScheduleKind::linear, ScheduleKind::cosine}) {
        for (std::size_t n : {18UL, 100UL, 1000UL}) {
            const auto s = make_schedule(n, kind);
            REQUIRE(s.beta.size() == n);
            REQUIRE(s.alpha_bar[0] > 0.99);
            for (std::size_t t = 0; t < n; ++t) {
                REQUIRE(s.beta[t] > 0.0);
                REQUIRE(s.beta[t] < 1.0);
                REQUIRE(s.alpha[t] == 1.0 - s.beta[t]);
                if (t > 0) {
                    REQUIRE(s.alpha_bar[t] < s.alpha_bar[t - 1]);
                    const double snr = s.alpha_bar[t] / (1.0 - s.alpha_bar[t]);
                    const double prev = s.alpha_bar[t - 1] / (1.0 - s.alpha_bar[t - 1]);
                    REQUIRE(snr < prev);
                }
            }
        }
    }
}

TEST_CASE("cosine starts at least as clean as linear", "[diffusion]") {
    REQUIRE(make_schedule(1000, ScheduleKind::cosine).alpha_bar[0] >=
            make_schedule(1000, ScheduleKind::linear).alpha_bar[0]);
}

TEST_CASE("schedule configuration errors", "[diffusion]") {
    REQUIRE(parse_schedule_kind("linear") == ScheduleKind::linear);
    REQUIRE(parse_schedule_kind("cosine") == ScheduleKind::cosine);
    REQUIRE_THROWS_AS(parse_schedule_kind("quadratic"), ConfigError);
    REQUIRE_THROWS_AS(make_schedule(9, ScheduleKind::linear), ConfigError);
    REQUIRE_THROWS_AS(make_schedule(100, ScheduleKind::linear, 0.02, 1e-4), ConfigError);
    REQUIRE_NOTHROW(make_schedule(10, ScheduleKind::linear));
    // Ten cosine steps would start at alpha_bar_0 = 0.972.
    REQUIRE_THROWS_AS(make_schedule(10, ScheduleKind::cosine), ConfigError);
}

TEST_CASE("q_sample endpoints", "[diffusion]") {
    const auto x0 = oracle::random_tensor({3, 4, 4}, 1);
    const auto noise = oracle::random_tensor({3, 4, 4}, 2);
    REQUIRE(q_sample_at(x0, 1.0, noise) == x0);
    REQUIRE(q_sample_at(x0, 0.0, noise) == noise);
    const auto s = make_schedule(100, ScheduleKind::linear);
    REQUIRE_THROWS_AS(q_sample(x0, 100, noise, s), std::out_of_range);
    REQUIRE_THROWS_AS(q_sample(x0, 3, oracle::random_tensor({3, 4, 5}, 2), s), ShapeError);
}

TEST_CASE("q_sample marginals match the closed form", "[diffusion][property]") {
    const auto s = make_schedule(1000, ScheduleKind::linear);
    const ImageTensor x0(Shape{1, 2, 2}, std::vector<double>{-1.0, -0.3, 0.4, 1.0});
    constexpr std::size_t kDraws = 10000;
    for (std::size_t t : {10UL, 300UL, 900UL}) {
        Rng rng(derive_seed(7, {t}));
        std::vector<double> sum(4, 0.0);
        std::vector<double> sum_sq(4, 0.0);
        for (std::size_t d = 0; d < kDraws; ++d) {
            const auto x = q_sample(x0, t, standard_normal(x0.shape(), rng), s);
            for (std::size_t i = 0; i < 4; ++i) {
                sum[i] += x[i];
                sum_sq[i] += x[i] * x[i];
            }
        }
        const double n = kDraws;
        const double var = 1.0 - s.alpha_bar[t];
        for (std::size_t i = 0; i < 4; ++i) {
            const double mean = sum[i] / n;
            const double sample_var = (sum_sq[i] - n * mean * mean) / (n - 1.0);
            REQUIRE(std::abs(mean - std::sqrt(s.alpha_bar[t]) * x0[i]) < 3.0 * std::sqrt(var / n));
            REQUIRE(std::abs(sample_var - var) < 3.0 * var * std::sqrt(2.0 / (n - 1.0)));
        }
    }
}

TEST_CASE("denoising_loss of an exact noise oracle is zero", "[diffusion]") {
    const auto s = make_schedule(1000, ScheduleKind::linear);
    const auto x0 = oracle::uniform_tensor({3, 8, 8}, 3, -1.0, 1.0);
    const OnePointOracle model(x0, s);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        REQUIRE(denoising_loss(model, x0, {}, s, rng) < 1e-20);
    }
}

TEST_CASE("denoising_loss of a zero predictor is about one", "[diffusion]") {
    const auto s = make_schedule(1000, ScheduleKind::linear);
    const auto x0 = oracle::uniform_tensor({3, 8, 8}, 4, -1.0, 1.0);
    const ZeroPredictor model;
    double total = 0.0;
    constexpr int kSeeds = 200;
    for (int seed = 0; seed < kSeeds; ++seed) {
        Rng rng(static_cast<std::uint64_t>(seed));
        const double loss = denoising_loss(model, x0, {}, s, rng);
        REQUIRE(loss >= 0.0);
        total += loss;
    }
    // Per-seed loss has standard deviation sqrt(2/192); the mean of 200 is within 0.03.
    REQUIRE(total / kSeeds == Approx(1.0).margin(0.03));
}

TEST_CASE("denoising_loss consumes the documented draw", "[diffusion]") {
    const auto s = make_schedule(1000, ScheduleKind::linear);
    const auto x0 = oracle::uniform_tensor({3, 4, 4}, 5, -1.0, 1.0);
    Rng a(42);
    Rng b(42);
    const auto draw = draw_training_example(x0.shape(), s, a);
    REQUIRE(draw.t < 1000);
    const double expected = sum_squares(draw.noise) / static_cast<double>(draw.noise.size());
    REQUIRE(denoising_loss(ZeroPredictor{}, x0, {}, s, b) == expected);
}

TEST_CASE("inference schedule strides the training steps", "[diffusion]") {
    const auto s = make_schedule(1000, ScheduleKind::linear);
    const auto inf = make_inference_schedule(s, 50);
    REQUIRE(inf.num_steps == 50);
    REQUIRE(inf.alpha_bar[0] == 1.0);
    for (std::size_t t = 1; t <= 50; ++t) {
        REQUIRE(inf.timestep[t] == 20 * t - 1);
        REQUIRE(inf.alpha_bar[t] == s.alpha_bar[20 * t - 1]);
    }
    const auto odd = make_inference_schedule(s, 7);
    REQUIRE(odd.timestep[7] == 999);
    for (std::size_t t = 2; t <= 7; ++t) REQUIRE(odd.timestep[t] > odd.timestep[t - 1]);
    REQUIRE_THROWS_AS(make_inference_schedule(s, 0), ConfigError);
    REQUIRE_THROWS_AS(make_inference_schedule(s, 1001), ConfigError);
}

TEST_CASE("ddim with the true noise walks back to x0", "[diffusion]") {
    const auto s = make_schedule(1000, ScheduleKind::linear);
    const auto inf = make_inference_schedule(s, 50);
    const auto x0 = oracle::uniform_tensor({3, 8, 8}, 6, -1.0, 1.0);
    const auto noise = oracle::random_tensor({3, 8, 8}, 7);
    for (bool clip : {false, true}) {
        DiffusionState state{q_sample(x0, inf.timestep[50], noise, s), 50, 0};
        while (state.t > 0) {
            state = ddim_step(state, noise, inf, 0.0, StepOptions{clip});
            // Every intermediate latent stays on the forward trajectory.
            const auto expected = q_sample_at(x0, inf.alpha_bar[state.t], noise);
            REQUIRE(max_abs(state.z - expected) < 1e-4);
        }
        REQUIRE(max_abs(state.z - x0) < 1e-4);
    }
}

TEST_CASE("step preconditions", "[diffusion]") {
    const auto s = make_schedule(100, ScheduleKind::linear);
    const auto inf = make_inference_schedule(s, 10);
    const ImageTensor z(Shape{1, 4, 4});
    REQUIRE_THROWS_AS(ddim_step({z, 0, 0}, z, inf, 0.0), std::out_of_range);
    REQUIRE_THROWS_AS(ddpm_step({z, 0, 0}, z, inf), std::out_of_range);
    REQUIRE_THROWS_AS(ddim_step({z, 11, 0}, z, inf, 0.0), std::out_of_range);
    REQUIRE_THROWS_AS(ddim_step({z, 3, 0}, ImageTensor(Shape{1, 4, 5}), inf, 0.0), ShapeError);
}

TEST_CASE("ddpm noise rules", "[diffusion]") {
    const auto s = make_schedule(1000, ScheduleKind::linear);
    const auto inf = make_inference_schedule(s, 50);
    const auto z = oracle::random_tensor({3, 8, 8}, 8);
    const auto eps = oracle::random_tensor({3, 8, 8}, 9);
    // Final step: no noise, so the seed is irrelevant.
    REQUIRE(ddpm_step({z, 1, 1}, eps, inf).z == ddpm_step({z, 1, 2}, eps, inf).z);
    // Earlier steps: same seed identical, different seed differs.
    REQUIRE(ddpm_step({z, 10, 1}, eps, inf).z == ddpm_step({z, 10, 1}, eps, inf).z);
    REQUIRE_FALSE(ddpm_step({z, 10, 1}, eps, inf).z == ddpm_step({z, 10, 2}, eps, inf).z);
    REQUIRE(ddpm_step({z, 10, 1}, eps, inf).t == 9);
}

TEST_CASE("ddim eta controls stochasticity", "[diffusion]") {
    const auto s = make_schedule(1000, ScheduleKind::linear);
    const auto inf = make_inference_schedule(s, 50);
    const auto z = oracle::random_tensor({3, 8, 8}, 10);
    const auto eps = oracle::random_tensor({3, 8, 8}, 11);
    REQUIRE(ddim_step({z, 20, 1}, eps, inf, 0.0).z == ddim_step({z, 20, 2}, eps, inf, 0.0).z);
    REQUIRE(ddim_step({z, 20, 1}, eps, inf, 1.0).z == ddim_step({z, 20, 1}, eps, inf, 1.0).z);
    REQUIRE_FALSE(ddim_step({z, 20, 1}, eps, inf, 1.0).z == ddim_step({z, 20, 2}, eps, inf, 1.0).z);
}

TEST_CASE("an oracle denoiser regenerates its single training point", "[diffusion][property]") {
    const auto s = make_schedule(1000, ScheduleKind::linear);
    const auto inf = make_inference_schedule(s, 50);
    const auto x0 = oracle::uniform_tensor({3, 16, 16}, 12, -1.0, 1.0);
    const OnePointOracle model(x0, s);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(seed);
        const auto start = standard_normal(x0.shape(), rng);
        const auto out = run_ddim(model, inf, start, 0.0, seed);
        REQUIRE(run_ddim(model, inf, start, 0.0, seed) == out);
        const auto to_unit = [](const ImageTensor& t) { return clamp((t + ImageTensor(t.shape(), 1.0)) * 0.5, 0, 1); };
        REQUIRE(metrics::oracle_target_error(to_unit(out), to_unit(x0)) > 30.0);
    }
}
