#include "freqguide/finetune.hpp"

#include "freqguide/errors.hpp"
#include "freqguide/image_io.hpp"
#include "freqguide/nn/adam.hpp"

namespace freqguide::finetune {

PairSpec pair_spec(const sprites::RenderedTriple& triple) {
    return {triple.source_img, triple.driving_img, triple.codes.source, triple.codes.driving};
}

denoiser::DenoiserModel<float> finetune_pair(denoiser::DenoiserModel<float> model, const PairSpec& pair,
                                             std::size_t n_tr, const diffusion::NoiseSchedule& sched, Rng& rng,
                                             const FinetuneOptions& options, FinetuneTrace* trace) {
    if (!model.has_adapters()) throw ConfigError("finetune_pair: attach adapters first; the base model stays frozen");
    const auto shape = model.arch().image_shape();
    if (pair.source_image.shape() != shape || pair.driving_image.shape() != shape)
        throw ShapeError("finetune_pair: pair images do not match the model's image shape");

    const denoiser::TrainingExample examples[2] = {{io::encode_latent(pair.source_image), pair.source_code},
                                                   {io::encode_latent(pair.driving_image), pair.driving_code}};
    nn::Adam<float> adam({.lr = options.lr});
    const auto params = model.parameters(nn::ParamRole::adapter);
    for (std::size_t it = 0; it < n_tr; ++it) {
        for (int which = 0; which < 2; ++which) {
            model.zero_grad();
            const double loss = model.accumulate_gradients(std::span(&examples[which], 1), sched, rng,
                                                           denoiser::TrainTarget::adapters);
            adam.step(params);
            if (trace) (which == 0 ? trace->source_loss : trace->driving_loss).push_back(loss);
        }
    }
    return model;
}

denoiser::DenoiserModel<float> adapt_to_pair(const denoiser::DenoiserModel<float>& base, const PairSpec& pair,
                                             const PairAdaptation& adaptation, const diffusion::NoiseSchedule& sched,
                                             std::uint64_t seed) {
    auto model = base;
    if (model.has_adapters()) model.detach_adapters();
    const auto targets =
        adaptation.targets.empty() ? model.default_adapter_targets(adaptation.rank) : adaptation.targets;
    model.attach_adapters(adaptation.rank, targets, derive_seed(seed, {label_hash("adapter_init")}));
    Rng rng(derive_seed(seed, {label_hash("finetune")}));
    return finetune_pair(std::move(model), pair, adaptation.n_tr, sched, rng, {.lr = adaptation.lr});
}

double reconstruction_loss(const denoiser::DenoiserModel<float>& model, const ImageTensor& image,
                           const ConditionCode& code, const diffusion::NoiseSchedule& sched, std::uint64_t seed,
                           std::size_t draws) {
    const auto x0 = io::encode_latent(image);
    const auto cond = model.embed(code);
    double total = 0.0;
    for (std::size_t i = 0; i < draws; ++i) {
        Rng rng(derive_seed(seed, {label_hash("reconstruction"), i}));
        total += diffusion::denoising_loss(model, x0, cond, sched, rng);
    }
    return total / static_cast<double>(draws);
}

}  // namespace freqguide::finetune
