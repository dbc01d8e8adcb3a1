#include <catch_amalgamated.hpp>

#include <cmath>

#include "freqguide/errors.hpp"
#include "freqguide/evaluation.hpp"
#include "freqguide/metrics.hpp"
#include "support/oracles.hpp"

using namespace freqguide;
using namespace freqguide::metrics;

namespace {

const auto& subjects() { return sprites::default_subjects(); }
const auto& actions() { return sprites::default_actions(); }

EvalRecord record(const std::string& config, std::size_t pair, std::uint64_t seed, double p, double f, double q) {
    return {config, pair, seed, p, f, q};
}

}  // namespace

TEST_CASE("subject_fidelity", "[metrics]") {
    const auto a = sprites::render(subjects()[0], actions()[0], 0);
    REQUIRE(subject_fidelity(a, a) == Catch::Approx(1.0));
    REQUIRE(subject_fidelity(ImageTensor(a.shape()), a) == 0.0);
    REQUIRE(subject_fidelity(a, ImageTensor(a.shape())) == 0.0);
    for (std::size_t s = 0; s < subjects().size(); ++s) {
        for (std::size_t a1 = 0; a1 < actions().size(); ++a1) {
            for (std::size_t a2 = a1 + 1; a2 < actions().size(); ++a2) {
                INFO("subject " << s << " actions " << a1 << "," << a2);
                REQUIRE(subject_fidelity(sprites::render(subjects()[s], actions()[a1], 0),
                                         sprites::render(subjects()[s], actions()[a2], 0)) > 0.9);
            }
        }
    }
    for (std::size_t s1 = 0; s1 < subjects().size(); ++s1) {
        for (std::size_t s2 = 0; s2 < subjects().size(); ++s2) {
            if (s1 == s2) continue;
            INFO("subjects " << s1 << "," << s2);
            REQUIRE(subject_fidelity(sprites::render(subjects()[s1], actions()[3], 0),
                                     sprites::render(subjects()[s2], actions()[3], 0)) < 0.5);
        }
    }
}

TEST_CASE("oracle_target_error", "[metrics]") {
    const auto t = sprites::render(subjects()[2], actions()[4], 0);
    REQUIRE(oracle_target_error(t, t) == kPsnrCap);
    ImageTensor shifted = t;
    for (auto& v : shifted.data()) v += 0.1;
    REQUIRE(oracle_target_error(shifted, t) == Catch::Approx(20.0).margin(1e-9));
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed)
        worst = std::max(worst, oracle_target_error(oracle::uniform_tensor(t.shape(), seed), t));
    REQUIRE(worst < 10.0);
    REQUIRE_THROWS_AS(oracle_target_error(ImageTensor(Shape{3, 8, 8}), t), ShapeError);
}

TEST_CASE("aggregates are the arithmetic means of the records", "[metrics][property]") {
    std::vector<EvalRecord> records;
    Rng rng(4);
    for (const char* cfg : {"full", "k0", "no_guidance"})
        for (std::size_t pair = 0; pair < 4; ++pair)
            for (std::uint64_t seed = 0; seed < 3; ++seed)
                records.push_back(record(cfg, pair, seed, rng.uniform(), rng.uniform(), 10.0 + 20.0 * rng.uniform()));
    const auto agg = aggregate(records);
    REQUIRE(agg.size() == 3);
    REQUIRE(agg[0].config == "full");
    REQUIRE(agg[1].config == "k0");
    REQUIRE(agg[2].config == "no_guidance");
    for (const auto& a : agg) {
        REQUIRE(a.count == 12);
        double sum = 0.0;
        double sum_sq = 0.0;
        for (const auto& r : records) {
            if (r.config != a.config) continue;
            sum += r.oracle_psnr;
        }
        const double mean = sum / 12.0;
        for (const auto& r : records)
            if (r.config == a.config) sum_sq += (r.oracle_psnr - mean) * (r.oracle_psnr - mean);
        REQUIRE(std::abs(a.oracle_psnr.mean - mean) < 1e-9);
        REQUIRE(std::abs(a.oracle_psnr.std - std::sqrt(sum_sq / 11.0)) < 1e-9);
    }
    const auto single = aggregate({record("x", 0, 0, 0.5, 0.5, 30.0)});
    REQUIRE(single[0].phase_score_driving.std == 0.0);
}

TEST_CASE("report serialization round trip", "[metrics]") {
    EvalReport report;
    report.records = {record("full", 0, 1, 0.123456789012345, 0.9, 21.5), record("k0", 0, 1, -0.25, 0.95, 99.0)};
    report.aggregates = aggregate(report.records);
    const auto text = to_jsonl(report);
    REQUIRE(std::count(text.begin(), text.end(), '\n') == 4);
    const auto back = from_jsonl(text);
    REQUIRE(back.records.size() == 2);
    REQUIRE(back.records[0].phase_score_driving == report.records[0].phase_score_driving);
    REQUIRE(back.records[1].config == "k0");
    REQUIRE(back.aggregates.size() == 2);
    REQUIRE(back.aggregates[1].oracle_psnr.mean == 99.0);
    REQUIRE(to_jsonl(back) == text);
    REQUIRE_THROWS_AS(from_jsonl("{\"kind\": \"record\"}\n"), IoError);
    REQUIRE_THROWS_AS(from_jsonl("not json\n"), IoError);

    const auto table = render_table(report);
    REQUIRE(table.find("full") != std::string::npos);
    REQUIRE(table.find("k0") != std::string::npos);
    REQUIRE(table.find("phase_score_driving") != std::string::npos);
}

TEST_CASE("standard ablations", "[metrics]") {
    guidance::GuidanceConfig base;
    const auto configs = standard_ablations(base);
    REQUIRE(configs.size() == 5);
    REQUIRE(configs[0].name == "full");
    REQUIRE(configs[0].guidance.k == 5);
    REQUIRE(configs[1].name == "k0");
    REQUIRE(configs[1].guidance.k == 0);
    REQUIRE(configs[1].guidance.s_a == base.s_a);
    REQUIRE(configs[2].name == "no_guidance");
    REQUIRE((configs[2].guidance.s_a == 0.0 && configs[2].guidance.s_p == 0.0 && configs[2].guidance.k == 5));
    REQUIRE(configs[3].name == "no_phase");
    REQUIRE((configs[3].guidance.s_a == base.s_a && configs[3].guidance.s_p == 0.0));
    REQUIRE(configs[4].name == "no_amp");
    REQUIRE((configs[4].guidance.s_a == 0.0 && configs[4].guidance.s_p == base.s_p));
}

TEST_CASE("ablation grid counts and reproducibility", "[metrics]") {
    const auto sched = diffusion::make_schedule(1000, diffusion::ScheduleKind::linear);
    const auto bench = sprites::make_benchmark(1, 2, 0);
    REQUIRE(bench.size() == 2);
    const denoiser::DenoiserModel<float> model(denoiser::ArchConfig{}, 1);
    std::size_t factory_calls = 0;
    const ModelFactory factory = [&](const sprites::RenderedTriple&) {
        ++factory_calls;
        return model;
    };
    guidance::GuidanceConfig base;
    base.T = 3;
    base.k = 1;
    std::size_t sink_calls = 0;
    const auto report = run_ablation_grid(bench, factory, standard_ablations(base), {0, 1}, sched,
                                          [&](const EvalRecord&, const ImageTensor& img) {
                                              ++sink_calls;
                                              REQUIRE(img.shape() == bench[0].source_img.shape());
                                          });
    REQUIRE(report.records.size() == 20);
    REQUIRE(sink_calls == 20);
    REQUIRE(factory_calls == 2);
    REQUIRE(report.aggregates.size() == 5);
    for (const auto& a : report.aggregates) REQUIRE(a.count == 4);
    for (const auto& r : report.records) {
        REQUIRE(r.phase_score_driving >= -1.0);
        REQUIRE(r.phase_score_driving <= 1.0);
        REQUIRE(r.subject_fidelity >= 0.0);
        REQUIRE(r.subject_fidelity <= 1.0);
    }
    const auto again = run_ablation_grid(bench, factory, standard_ablations(base), {0, 1}, sched);
    REQUIRE(to_jsonl(again) == to_jsonl(report));
}

TEST_CASE("score uses the documented references", "[metrics]") {
    const auto triple = sprites::make_triple(5, 8, 15, 2);
    const auto img = oracle::uniform_tensor(triple.source_img.shape(), 3);
    const auto r = score("full", triple, 9, img);
    REQUIRE(r.pair_id == 5);
    REQUIRE(r.seed == 9);
    REQUIRE(r.phase_score_driving == fourier::phase_score(img, triple.driving_img));
    REQUIRE(r.subject_fidelity == subject_fidelity(img, triple.source_img));
    REQUIRE(r.oracle_psnr == oracle_target_error(img, triple.target_img));
}

TEST_CASE("external metric plugins", "[metrics]") {
    MetricRegistry registry;
    REQUIRE_THROWS_AS(registry.lookup("clip"), NotAvailableError);
    REQUIRE_FALSE(registry.contains("clip"));
    registry.register_metric("clip", [](const ImageTensor& g, const ImageTensor& r, const std::string& text) {
        return static_cast<double>(text.size()) + g[0] - r[0];
    });
    REQUIRE(registry.contains("clip"));
    REQUIRE(registry.names() == std::vector<std::string>{"clip"});
    ImageTensor a(Shape{1, 2, 2});
    ImageTensor b(Shape{1, 2, 2});
    a[0] = 0.75;
    b[0] = 0.25;
    REQUIRE(registry.lookup("clip")(a, b, "a dog") == 5.5);
    REQUIRE_THROWS_AS(registry.register_metric("dino", {}), ConfigError);

    REQUIRE_THROWS_AS(external_metric_plugin("sscd"), NotAvailableError);
    default_registry().register_metric("sscd", [](const ImageTensor&, const ImageTensor&, const std::string&) {
        return 0.42;
    });
    REQUIRE(external_metric_plugin("sscd")(a, b, "") == 0.42);
}
