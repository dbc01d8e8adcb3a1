#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "freqguide/errors.hpp"
#include "freqguide/nn/layers.hpp"

namespace freqguide::nn {

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    /// Rescale the joint gradient to this L2 norm when it is larger; 0 disables.
    double clip_norm = 0.0;
};

/// First and second moments per parameter name, plus the step counter.
struct AdamState {
    std::uint64_t steps = 0;
    std::map<std::string, std::pair<std::vector<float>, std::vector<float>>> moments;
};

template <typename T>
class Adam {
public:
    explicit Adam(AdamOptions options = {}) : options_(options) {
        if (!(options.lr > 0.0)) throw ConfigError("adam: learning rate must be positive");
    }

    [[nodiscard]] const AdamOptions& options() const { return options_; }
    [[nodiscard]] std::uint64_t steps() const { return state_.steps; }
    [[nodiscard]] const AdamState& state() const { return state_; }
    void restore(AdamState state) { state_ = std::move(state); }

    /// Updates every listed parameter from its accumulated gradient. Returns
    /// the gradient norm before clipping.
    double step(const std::vector<NamedParam<T>>& params) {
        double sq = 0.0;
        for (const auto& p : params)
            for (T g : p.param->grad) sq += static_cast<double>(g) * static_cast<double>(g);
        const double norm = std::sqrt(sq);
        const double clip =
            options_.clip_norm > 0.0 && norm > options_.clip_norm ? options_.clip_norm / norm : 1.0;

        ++state_.steps;
        const double t = static_cast<double>(state_.steps);
        const double c1 = 1.0 - std::pow(options_.beta1, t);
        const double c2 = 1.0 - std::pow(options_.beta2, t);
        const double step_size = options_.lr * std::sqrt(c2) / c1;
        const double eps_hat = options_.eps * std::sqrt(c2);
        const auto b1 = static_cast<float>(options_.beta1);
        const auto b2 = static_cast<float>(options_.beta2);

        for (const auto& p : params) {
            auto& [m, v] = state_.moments[p.name];
            const auto count = p.param->value.size();
            if (m.size() != count) {
                m.assign(count, 0.0F);
                v.assign(count, 0.0F);
            }
            auto& value = p.param->value;
            const auto& grad = p.param->grad;
            for (std::size_t i = 0; i < count; ++i) {
                const auto g = static_cast<float>(static_cast<double>(grad[i]) * clip);
                m[i] = b1 * m[i] + (1.0F - b1) * g;
                v[i] = b2 * v[i] + (1.0F - b2) * g * g;
                value[i] -= static_cast<T>(step_size * m[i] / (std::sqrt(static_cast<double>(v[i])) + eps_hat));
            }
        }
        return norm;
    }

private:
    AdamOptions options_;
    AdamState state_;
};

}  // namespace freqguide::nn
