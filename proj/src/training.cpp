#include "freqguide/training.hpp"

#include "freqguide/errors.hpp"
#include "freqguide/image_io.hpp"
#include "freqguide/nn/adam.hpp"
#include "freqguide/sprites.hpp"

namespace freqguide::training {

void train_base(denoiser::DenoiserModel<float>& model, const std::vector<LabeledImage>& data,
                const diffusion::NoiseSchedule& sched, const BaseTrainingOptions& options,
                checkpoint::TrainingState& state, const EpochCallback& on_epoch) {
    if (data.empty()) throw ConfigError("train_base: empty training set");
    if (options.batch_size == 0) throw ConfigError("train_base: batch_size must be >= 1");
    if (options.cond_dropout < 0.0 || options.cond_dropout > 1.0)
        throw ConfigError("train_base: cond_dropout must be in [0, 1]");
    if (options.max_shift < 0) throw ConfigError("train_base: max_shift must be >= 0");
    for (const auto& d : data) {
        if (d.image.shape() != model.arch().image_shape())
            throw ShapeError("train_base: training image shape does not match the architecture");
    }

    nn::Adam<float> adam({.lr = options.lr});
    adam.restore(state.adam);

    std::vector<std::size_t> order(data.size());
    std::vector<denoiser::TrainingExample> batch;
    for (std::size_t epoch = state.epoch; epoch < options.epochs; ++epoch) {
        Rng rng(derive_seed(options.seed, {label_hash("epoch"), epoch}));
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (std::size_t i = order.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - 1)));
            std::swap(order[i - 1], order[j]);
        }

        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
            const std::size_t end = std::min(order.size(), start + options.batch_size);
            batch.clear();
            for (std::size_t i = start; i < end; ++i) {
                const auto& item = data[order[i]];
                const int dx = static_cast<int>(rng.uniform_int(-options.max_shift, options.max_shift));
                const int dy = static_cast<int>(rng.uniform_int(-options.max_shift, options.max_shift));
                const bool drop = rng.uniform() < options.cond_dropout;
                batch.push_back({io::encode_latent(sprites::shift_image(item.image, dx, dy)),
                                 drop ? std::nullopt : std::optional<ConditionCode>(item.code)});
            }
            model.zero_grad();
            loss_sum += model.accumulate_gradients(batch, sched, rng, denoiser::TrainTarget::base);
            adam.step(model.parameters(nn::ParamRole::base));
            ++batches;
        }

        state.epoch = epoch + 1;
        state.epoch_losses.push_back(loss_sum / static_cast<double>(batches));
        state.adam = adam.state();
        if (on_epoch) on_epoch(state, model);
    }
}

std::vector<LabeledImage> vocabulary_renders(std::size_t n_subjects, std::size_t n_actions) {
    const auto& subjects = sprites::default_subjects();
    const auto& actions = sprites::default_actions();
    if (n_subjects == 0 || n_subjects > subjects.size() || n_actions == 0 || n_actions > actions.size())
        throw VocabularyError("vocabulary_renders: vocabulary size out of range");
    std::vector<LabeledImage> out;
    for (std::size_t s = 0; s < n_subjects; ++s) {
        for (std::size_t a = 0; a < n_actions; ++a) {
            out.push_back({sprites::render(subjects[s], actions[a], sprites::Jitter{}),
                           ConditionCode{static_cast<int>(s), static_cast<int>(a)}});
        }
    }
    return out;
}

}  // namespace freqguide::training
