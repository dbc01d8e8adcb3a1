#include <catch_amalgamated.hpp>

#include <filesystem>

#include "freqguide/errors.hpp"
#include "freqguide/finetune.hpp"
#include "freqguide/training.hpp"
#include "support/oracles.hpp"

using namespace freqguide;
using denoiser::ArchConfig;
using denoiser::DenoiserModel;

namespace {

ArchConfig small_arch() {
    ArchConfig a;
    a.image_size = 16;
    a.base_width = 8;
    a.time_dim = 16;
    a.emb_dim = 16;
    a.groups = 4;
    return a;
}

const diffusion::NoiseSchedule& schedule() {
    static const auto s = diffusion::make_schedule(1000, diffusion::ScheduleKind::linear);
    return s;
}

std::vector<training::LabeledImage> tiny_dataset() {
    std::vector<training::LabeledImage> out;
    for (int i = 0; i < 6; ++i) {
        // Zero border so two-pixel shifts keep the content.
        auto img = oracle::uniform_tensor(small_arch().image_shape(), 100 + static_cast<std::uint64_t>(i));
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t y = 0; y < 16; ++y)
                for (std::size_t x = 0; x < 16; ++x)
                    if (y < 2 || y >= 14 || x < 2 || x >= 14) img(c, y, x) = 0.0;
        out.push_back({img, ConditionCode{i % 3, i % 5}});
    }
    return out;
}

std::vector<float> flat_values(DenoiserModel<float>& m, nn::ParamRole role) {
    std::vector<float> out;
    for (const auto& p : m.parameters(role)) out.insert(out.end(), p.param->value.begin(), p.param->value.end());
    return out;
}

finetune::PairSpec tiny_pair() {
    const auto data = tiny_dataset();
    return {data[0].image, data[1].image, data[0].code, data[1].code};
}

}  // namespace

TEST_CASE("vocabulary renders cover every code once", "[training]") {
    const auto v = training::vocabulary_renders(8, 15);
    REQUIRE(v.size() == 120);
    for (std::size_t i = 0; i < v.size(); ++i) {
        REQUIRE(v[i].code == ConditionCode{static_cast<int>(i / 15), static_cast<int>(i % 15)});
        REQUIRE(v[i].image == sprites::render(sprites::default_subjects()[i / 15], sprites::default_actions()[i % 15], 0));
    }
    REQUIRE(training::vocabulary_renders(1, 2).size() == 2);
    REQUIRE_THROWS_AS(training::vocabulary_renders(9, 15), VocabularyError);
}

TEST_CASE("base training is deterministic and reduces the loss", "[training]") {
    const auto data = tiny_dataset();
    training::BaseTrainingOptions opts;
    opts.epochs = 40;
    opts.batch_size = 3;
    opts.seed = 5;
    auto run = [&] {
        DenoiserModel<float> m(small_arch(), 9);
        checkpoint::TrainingState st;
        std::size_t calls = 0;
        training::train_base(m, data, schedule(), opts, st, [&](const auto& s, const auto&) {
            ++calls;
            REQUIRE(s.epoch == calls);
        });
        REQUIRE(calls == 40);
        return std::make_pair(m.base_checksum(), st);
    };
    const auto [sum_a, st_a] = run();
    const auto [sum_b, st_b] = run();
    REQUIRE(sum_a == sum_b);
    REQUIRE(st_a.epoch_losses == st_b.epoch_losses);
    REQUIRE(st_a.epoch == 40);
    REQUIRE(st_a.adam.steps == 40 * 2);
    const double first = (st_a.epoch_losses[0] + st_a.epoch_losses[1]) / 2.0;
    const double last = (st_a.epoch_losses[38] + st_a.epoch_losses[39]) / 2.0;
    INFO("first " << first << " last " << last);
    REQUIRE(last < first);
}

TEST_CASE("resuming from a checkpoint reproduces an uninterrupted run", "[training][checkpoint]") {
    const auto data = tiny_dataset();
    training::BaseTrainingOptions opts;
    opts.epochs = 4;
    opts.batch_size = 4;
    opts.seed = 6;

    DenoiserModel<float> straight(small_arch(), 3);
    checkpoint::TrainingState st_straight;
    training::train_base(straight, data, schedule(), opts, st_straight);

    const auto path = std::filesystem::temp_directory_path() / "freqguide_test_resume.bin";
    {
        DenoiserModel<float> first(small_arch(), 3);
        checkpoint::TrainingState st;
        auto partial = opts;
        partial.epochs = 2;
        training::train_base(first, data, schedule(), partial, st);
        checkpoint::save_base(path, first, &st);
    }
    auto loaded = checkpoint::load_base(path);
    training::train_base(loaded.model, data, schedule(), opts, *loaded.state);
    REQUIRE(loaded.model.base_checksum() == straight.base_checksum());
    REQUIRE(loaded.state->epoch_losses == st_straight.epoch_losses);

    // A finished run is a no-op.
    const auto before = loaded.model.base_checksum();
    training::train_base(loaded.model, data, schedule(), opts, *loaded.state);
    REQUIRE(loaded.model.base_checksum() == before);
}

TEST_CASE("base training rejects bad input", "[training]") {
    DenoiserModel<float> m(small_arch(), 1);
    checkpoint::TrainingState st;
    REQUIRE_THROWS_AS(training::train_base(m, {}, schedule(), {}, st), ConfigError);
    const std::vector<training::LabeledImage> wrong{{ImageTensor(Shape{3, 8, 8}), ConditionCode{0, 0}}};
    REQUIRE_THROWS_AS(training::train_base(m, wrong, schedule(), {}, st), ShapeError);
    training::BaseTrainingOptions bad;
    bad.batch_size = 0;
    REQUIRE_THROWS_AS(training::train_base(m, tiny_dataset(), schedule(), bad, st), ConfigError);
}

TEST_CASE("finetune requires adapters", "[finetune]") {
    DenoiserModel<float> m(small_arch(), 1);
    Rng rng(1);
    REQUIRE_THROWS_AS(finetune::finetune_pair(m, tiny_pair(), 1, schedule(), rng), ConfigError);
}

TEST_CASE("pair spec codes", "[finetune]") {
    const auto triple = sprites::make_triple(17, 8, 15, 3);
    const auto pair = finetune::pair_spec(triple);
    REQUIRE(pair.target_code().subject == pair.source_code.subject);
    REQUIRE(pair.target_code().action == pair.driving_code.action);
    REQUIRE(pair.source_image == triple.source_img);
    REQUIRE(pair.driving_image == triple.driving_img);
}

TEST_CASE("finetune with zero iterations leaves the model unchanged", "[finetune]") {
    DenoiserModel<float> m(small_arch(), 2);
    m.attach_adapters(2, m.default_adapter_targets(2), 3);
    const auto adapters = flat_values(m, nn::ParamRole::adapter);
    Rng rng(4);
    auto out = finetune::finetune_pair(m, tiny_pair(), 0, schedule(), rng);
    REQUIRE(out.base_checksum() == m.base_checksum());
    REQUIRE(flat_values(out, nn::ParamRole::adapter) == adapters);
}

TEST_CASE("finetune changes adapters only and is deterministic", "[finetune]") {
    DenoiserModel<float> m(small_arch(), 2);
    m.attach_adapters(2, m.default_adapter_targets(2), 3);
    const auto base = flat_values(m, nn::ParamRole::base);
    const auto adapters = flat_values(m, nn::ParamRole::adapter);
    finetune::FinetuneTrace trace;
    Rng rng_a(8);
    auto a = finetune::finetune_pair(m, tiny_pair(), 25, schedule(), rng_a, {}, &trace);
    Rng rng_b(8);
    auto b = finetune::finetune_pair(m, tiny_pair(), 25, schedule(), rng_b);
    REQUIRE(trace.source_loss.size() == 25);
    REQUIRE(trace.driving_loss.size() == 25);
    REQUIRE(flat_values(a, nn::ParamRole::base) == base);
    REQUIRE(a.base_checksum() == m.base_checksum());
    REQUIRE(flat_values(a, nn::ParamRole::adapter) != adapters);
    REQUIRE(flat_values(a, nn::ParamRole::adapter) == flat_values(b, nn::ParamRole::adapter));
    Rng rng_c(9);
    auto c = finetune::finetune_pair(m, tiny_pair(), 25, schedule(), rng_c);
    REQUIRE(flat_values(c, nn::ParamRole::adapter) != flat_values(a, nn::ParamRole::adapter));
}

TEST_CASE("finetuning lowers the reconstruction loss of both examples", "[finetune]") {
    DenoiserModel<float> m(small_arch(), 12);
    const auto pair = tiny_pair();
    const auto before_s = finetune::reconstruction_loss(m, pair.source_image, pair.source_code, schedule(), 1);
    const auto before_d = finetune::reconstruction_loss(m, pair.driving_image, pair.driving_code, schedule(), 1);
    finetune::PairAdaptation adaptation;
    adaptation.rank = 2;
    adaptation.n_tr = 300;
    adaptation.lr = 1e-3;
    const auto tuned = finetune::adapt_to_pair(m, pair, adaptation, schedule(), 21);
    REQUIRE(tuned.adapter_rank() == 2);
    REQUIRE(tuned.base_checksum() == m.base_checksum());
    const auto after_s = finetune::reconstruction_loss(tuned, pair.source_image, pair.source_code, schedule(), 1);
    const auto after_d = finetune::reconstruction_loss(tuned, pair.driving_image, pair.driving_code, schedule(), 1);
    INFO("source " << before_s << " -> " << after_s << ", driving " << before_d << " -> " << after_d);
    REQUIRE(after_s < before_s);
    REQUIRE(after_d < before_d);
}
