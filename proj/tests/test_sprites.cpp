#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <set>

#include "freqguide/fourier.hpp"
#include "freqguide/metrics.hpp"
#include "freqguide/sprites.hpp"

using namespace freqguide;
using namespace freqguide::sprites;

namespace {

std::array<double, 3> mean_figure_color(const ImageTensor& img) {
    const auto mask = figure_mask(img);
    std::array<double, 3> mean{};
    double count = 0.0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i]) continue;
        for (std::size_t c = 0; c < 3; ++c) mean[c] += img.channel(c)[i];
        count += 1.0;
    }
    for (auto& m : mean) m /= count;
    return mean;
}

}  // namespace

TEST_CASE("default vocabulary sizes", "[sprites]") {
    REQUIRE(default_subjects().size() == 8);
    REQUIRE(default_actions().size() == 15);
    for (std::size_t i = 0; i < default_subjects().size(); ++i)
        REQUIRE(default_subjects()[i].subject_id == static_cast<int>(i));
    for (std::size_t i = 0; i < default_actions().size(); ++i)
        REQUIRE(default_actions()[i].action_id == static_cast<int>(i));
}

TEST_CASE("distinct actions differ by at least 20 degrees in some limb", "[sprites]") {
    const auto& actions = default_actions();
    for (std::size_t a = 0; a < actions.size(); ++a) {
        for (std::size_t b = a + 1; b < actions.size(); ++b) {
            double largest = 0.0;
            for (std::size_t l = 0; l < 4; ++l)
                largest = std::max(largest, std::abs(actions[a].limb_angles[l] - actions[b].limb_angles[l]));
            INFO(actions[a].name << " vs " << actions[b].name);
            REQUIRE(largest >= 20.0);
        }
    }
}

TEST_CASE("render is deterministic with values on the 8-bit grid", "[sprites]") {
    const auto& s = default_subjects()[2];
    const auto& a = default_actions()[7];
    const auto img = render(s, a, 17);
    REQUIRE(img == render(s, a, 17));
    REQUIRE(img.shape() == Shape{3, kImageSize, kImageSize});
    for (double v : img.values()) {
        REQUIRE(v >= 0.0);
        REQUIRE(v <= 1.0);
        REQUIRE(std::abs(v * 255.0 - std::round(v * 255.0)) < 1e-9);
    }
}

TEST_CASE("jitter stays within two pixels and seed 0 means none", "[sprites]") {
    const auto none = jitter_from_seed(0);
    REQUIRE(none.dx == 0);
    REQUIRE(none.dy == 0);
    std::set<std::pair<int, int>> seen;
    for (std::uint64_t seed = 1; seed < 500; ++seed) {
        const auto j = jitter_from_seed(seed);
        REQUIRE(std::abs(j.dx) <= kMaxJitter);
        REQUIRE(std::abs(j.dy) <= kMaxJitter);
        seen.insert({j.dx, j.dy});
    }
    REQUIRE(seen.size() == 25);
}

TEST_CASE("silhouette depends only on the action", "[sprites][property]") {
    for (const auto& a : default_actions()) {
        const auto ref = figure_mask(render(default_subjects()[0], a, 0));
        for (const auto& s : default_subjects()) {
            INFO(s.name << " " << a.name);
            REQUIRE(figure_mask(render(s, a, 0)) == ref);
        }
    }
}

TEST_CASE("figure colour statistics depend only on the subject", "[sprites][property]") {
    for (const auto& s : default_subjects()) {
        const auto ref = mean_figure_color(render(s, default_actions()[0], 0));
        for (const auto& a : default_actions()) {
            const auto m = mean_figure_color(render(s, a, 0));
            for (std::size_t c = 0; c < 3; ++c) {
                INFO(s.name << " " << a.name << " channel " << c);
                REQUIRE(std::abs(m[c] - ref[c]) <= 0.05 * std::max(ref[c], 0.05));
            }
        }
    }
}

TEST_CASE("a zero-fill shift of a render equals the render at the shifted jitter", "[sprites][property]") {
    const auto& s = default_subjects()[4];
    for (const auto& a : default_actions()) {
        const auto base = render(s, a, Jitter{0, 0});
        for (int dx = -kMaxJitter; dx <= kMaxJitter; ++dx)
            for (int dy = -kMaxJitter; dy <= kMaxJitter; ++dy)
                REQUIRE(shift_image(base, dx, dy) == render(s, a, Jitter{dx, dy}));
    }
}

TEST_CASE("make_benchmark counts", "[sprites]") {
    REQUIRE(make_benchmark(8, 15, 0).size() == 120);
    REQUIRE(make_benchmark(1, 2, 0).size() == 2);
    REQUIRE_THROWS(make_benchmark(0, 15, 0));
    REQUIRE_THROWS(make_benchmark(9, 15, 0));
    REQUIRE_THROWS(make_benchmark(8, 1, 0));
    REQUIRE_THROWS(make_benchmark(8, 16, 0));
}

TEST_CASE("every target is the source subject performing the driving action", "[sprites][property]") {
    const auto& subjects = default_subjects();
    const auto& actions = default_actions();
    const auto triples = make_benchmark(8, 15, 99);
    std::set<std::pair<int, int>> combos;
    for (const auto& tr : triples) {
        const auto& c = tr.codes;
        REQUIRE(c.target().subject == c.source.subject);
        REQUIRE(c.target().action == c.driving.action);
        REQUIRE(c.source.action != c.driving.action);
        REQUIRE(c.source.subject != c.driving.subject);
        REQUIRE(tr.pair_id == static_cast<std::size_t>(c.source.subject * 15 + c.driving.action));
        combos.insert({c.source.subject, c.driving.action});
        const auto& ss = subjects[static_cast<std::size_t>(c.source.subject)];
        REQUIRE(tr.source_img == render(ss, actions[static_cast<std::size_t>(c.source.action)], tr.source_jitter_seed));
        REQUIRE(tr.driving_img == render(subjects[static_cast<std::size_t>(c.driving.subject)],
                                         actions[static_cast<std::size_t>(c.driving.action)],
                                         tr.driving_jitter_seed));
        REQUIRE(tr.target_img == render(ss, actions[static_cast<std::size_t>(c.driving.action)], tr.driving_jitter_seed));
    }
    REQUIRE(combos.size() == 120);
}

TEST_CASE("make_triple matches the benchmark entry and is seed-dependent", "[sprites]") {
    const auto all = make_benchmark(8, 15, 5);
    for (std::size_t id : {0UL, 37UL, 119UL}) {
        const auto one = make_triple(id, 8, 15, 5);
        REQUIRE(one.source_img == all[id].source_img);
        REQUIRE(one.driving_img == all[id].driving_img);
        REQUIRE(one.codes.source == all[id].codes.source);
    }
    REQUIRE_THROWS(make_triple(120, 8, 15, 5));
    bool any_difference = false;
    for (std::size_t id = 0; id < 120 && !any_difference; ++id)
        any_difference = !(make_triple(id, 8, 15, 5).codes.source == make_triple(id, 8, 15, 6).codes.source);
    REQUIRE(any_difference);
}

TEST_CASE("phase score separates same action from same subject", "[sprites][metrics][property]") {
    const auto& subjects = default_subjects();
    const auto& actions = default_actions();
    std::size_t wins = 0;
    std::size_t total = 0;
    for (std::size_t s = 0; s < subjects.size(); s += 3) {
        for (std::size_t a = 0; a < actions.size(); a += 2) {
            const auto ref = render(subjects[s], actions[a], 0);
            const auto same_action = render(subjects[(s + 1) % 8], actions[a], 0);
            const auto same_subject = render(subjects[s], actions[(a + 1) % 15], 0);
            wins += fourier::phase_score(ref, same_action) > fourier::phase_score(ref, same_subject) ? 1 : 0;
            ++total;
        }
    }
    REQUIRE(static_cast<double>(wins) >= 0.9 * static_cast<double>(total));
}

TEST_CASE("metric separation on benchmark triples", "[sprites][metrics][property]") {
    for (const auto& tr : make_benchmark(8, 15, 3)) {
        REQUIRE(fourier::phase_score(tr.target_img, tr.driving_img) >
                fourier::phase_score(tr.source_img, tr.driving_img));
        REQUIRE(metrics::subject_fidelity(tr.target_img, tr.source_img) >
                metrics::subject_fidelity(tr.driving_img, tr.source_img));
    }
}
