#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "freqguide/errors.hpp"
#include "freqguide/fourier.hpp"
#include "support/oracles.hpp"

using namespace freqguide;
using namespace freqguide::fourier;
using Catch::Approx;

namespace {

bool no_guarded_bins(const ImageTensor& z) {
    const auto amp = amplitude(fft2(z));
    return std::all_of(amp.values.begin(), amp.values.end(), [](double a) { return a >= 1e-3; });
}

}  // namespace

TEST_CASE("fft2 of a constant image is DC only", "[fourier]") {
    const double c = 0.7;
    const auto spec = fft2(ImageTensor(Shape{1, 4, 4}, c));
    REQUIRE(spec(0, 0, 0).real() == Approx(16 * c));
    REQUIRE(spec(0, 0, 0).imag() == Approx(0.0).margin(1e-12));
    for (std::size_t i = 1; i < 16; ++i) REQUIRE(std::abs(spec.bins()[i]) < 1e-12);
}

TEST_CASE("fft2 matches direct summation", "[fourier]") {
    const auto z = oracle::random_tensor({2, 6, 5}, 11);
    const auto spec = fft2(z);
    for (std::size_t c = 0; c < 2; ++c) {
        const auto ref = oracle::naive_dft(z, c);
        for (std::size_t i = 0; i < ref.size(); ++i) REQUIRE(std::abs(spec.bins()[c * 30 + i] - ref[i]) < 1e-10);
    }
}

TEST_CASE("ifft2 inverts fft2", "[fourier][property]") {
    for (std::uint64_t seed = 1; seed <= 12; ++seed) {
        const std::size_t n = seed % 3 == 0 ? 64 : (seed % 3 == 1 ? 8 : 13);
        const auto z = oracle::random_tensor({3, n, n}, seed);
        const auto back = ifft2(fft2(z));
        for (std::size_t i = 0; i < z.size(); ++i) {
            REQUIRE(std::abs(back[i] - z[i]) <= 1e-6 * std::max(1.0, std::abs(z[i])));
        }
    }
}

TEST_CASE("impulse at the origin has flat unit amplitude", "[fourier]") {
    ImageTensor z(Shape{1, 8, 8});
    z(0, 0, 0) = 1.0;
    const auto amp = amplitude(fft2(z));
    for (double a : amp.values) REQUIRE(a == Approx(1.0));
}

TEST_CASE("Parseval holds under the declared convention", "[fourier][property]") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto z = oracle::random_tensor({3, 16, 12}, seed);
        const auto amp = amplitude(fft2(z));
        double spectral = 0.0;
        for (double a : amp.values) spectral += a * a;
        spectral /= 16.0 * 12.0;
        REQUIRE(std::abs(spectral - sum_squares(z)) <= 1e-6 * sum_squares(z));
    }
}

TEST_CASE("spectrum of a real tensor is conjugate symmetric", "[fourier][property]") {
    const auto z = oracle::random_tensor({3, 8, 10}, 5);
    const auto spec = fft2(z);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t u = 0; u < 8; ++u)
            for (std::size_t v = 0; v < 10; ++v) {
                const auto mirrored = std::conj(spec(c, (8 - u) % 8, (10 - v) % 10));
                REQUIRE(std::abs(spec(c, u, v) - mirrored) < 1e-6);
            }
}

TEST_CASE("degenerate or non-finite input is rejected", "[fourier]") {
    REQUIRE_THROWS_AS(fft2(ImageTensor(Shape{1, 1, 8})), ShapeError);
    REQUIRE_THROWS_AS(fft2(ImageTensor(Shape{1, 8, 1})), ShapeError);
    ImageTensor bad(Shape{1, 4, 4});
    bad[3] = std::nan("");
    REQUIRE_THROWS_AS(fft2(bad), std::invalid_argument);
}

TEST_CASE("amplitude and phase of individual bins", "[fourier]") {
    SpectralMap spec(Shape{1, 2, 2});
    spec.bins() = {{3.0, 4.0}, {2.0, 0.0}, {0.0, 0.0}, {-1.0, 0.0}};
    const auto amp = amplitude(spec);
    const auto ph = phase(spec);
    REQUIRE(amp.values[0] == Approx(5.0));
    REQUIRE(ph.values[0] == Approx(std::atan2(4.0, 3.0)));
    REQUIRE(ph.values[1] == 0.0);
    REQUIRE(amp.values[2] == 0.0);
    REQUIRE(ph.values[2] == 0.0);
    // The negative real axis maps to +pi, never -pi.
    REQUIRE(ph.values[3] == Approx(std::numbers::pi));
}

TEST_CASE("purely real positive spectrum has zero phase", "[fourier]") {
    SpectralMap spec(Shape{2, 3, 3});
    for (std::size_t i = 0; i < spec.bins().size(); ++i) spec.bins()[i] = {1.0 + static_cast<double>(i), 0.0};
    for (double p : phase(spec).values) REQUIRE(p == 0.0);
}

TEST_CASE("amplitude and phase reconstruct the spectrum", "[fourier][property]") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto spec = fft2(oracle::random_tensor({3, 8, 8}, seed));
        const auto amp = amplitude(spec);
        const auto ph = phase(spec);
        for (std::size_t i = 0; i < amp.values.size(); ++i) {
            REQUIRE(amp.values[i] >= 0.0);
            REQUIRE(ph.values[i] > -std::numbers::pi);
            REQUIRE(ph.values[i] <= std::numbers::pi);
        }
        const auto back = reconstruct(amp, ph);
        for (std::size_t i = 0; i < back.bins().size(); ++i) REQUIRE(std::abs(back.bins()[i] - spec.bins()[i]) < 1e-6);
    }
}

TEST_CASE("phase-only reconstruction", "[fourier]") {
    SECTION("constant image gives a constant output") {
        const auto out = phase_only_reconstruct(ImageTensor(Shape{3, 8, 8}, 0.4));
        for (double v : out.data()) REQUIRE(v == 0.0);
    }
    SECTION("output lies in [0,1] per channel") {
        const auto out = phase_only_reconstruct(oracle::random_tensor({3, 16, 16}, 9));
        for (std::size_t c = 0; c < 3; ++c) {
            const auto plane = out.channel(c);
            REQUIRE(*std::min_element(plane.begin(), plane.end()) == Approx(0.0));
            REQUIRE(*std::max_element(plane.begin(), plane.end()) == Approx(1.0));
        }
    }
    SECTION("translation of the input translates the output circularly") {
        const auto z = oracle::uniform_tensor({1, 16, 16}, 21);
        ImageTensor shifted(z.shape());
        const std::size_t dy = 3;
        const std::size_t dx = 5;
        for (std::size_t y = 0; y < 16; ++y)
            for (std::size_t x = 0; x < 16; ++x) shifted(0, (y + dy) % 16, (x + dx) % 16) = z(0, y, x);
        const auto a = phase_only_reconstruct(z);
        const auto b = phase_only_reconstruct(shifted);
        for (std::size_t y = 0; y < 16; ++y)
            for (std::size_t x = 0; x < 16; ++x) REQUIRE(b(0, (y + dy) % 16, (x + dx) % 16) == Approx(a(0, y, x)).margin(1e-9));
    }
}

TEST_CASE("amp_distance", "[fourier]") {
    const auto z = oracle::random_tensor({1, 8, 8}, 3);
    SECTION("zero at matching amplitude") { REQUIRE(amp_distance(z, amplitude(fft2(z))) == Approx(0.0).margin(1e-18)); }
    SECTION("zero reference gives HW times the energy") {
        const AmplitudeMap zero{z.shape(), std::vector<double>(z.size(), 0.0)};
        REQUIRE(amp_distance(z, zero) == Approx(64.0 * sum_squares(z)).epsilon(1e-10));
    }
    SECTION("matches direct summation") {
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            const auto a = oracle::random_tensor({1, 8, 8}, 100 + seed);
            const auto b = oracle::random_tensor({1, 8, 8}, 200 + seed);
            const auto ref = amplitude(fft2(b));
            REQUIRE(std::abs(amp_distance(a, ref) - oracle::amp_distance(a, ref.values)) < 1e-8);
        }
    }
    SECTION("shape mismatch throws") {
        REQUIRE_THROWS_AS(amp_distance(z, AmplitudeMap{{1, 4, 4}, std::vector<double>(16)}), ShapeError);
    }
}

TEST_CASE("phase_distance", "[fourier]") {
    const auto z = oracle::random_tensor({1, 8, 8}, 4);
    const auto ph = phase(fft2(z));
    SECTION("zero at matching phase") { REQUIRE(phase_distance(z, ph) == Approx(0.0).margin(1e-12)); }
    SECTION("one antipodal bin contributes 4") {
        PhaseMap flipped = ph;
        flipped.values[9] += std::numbers::pi;
        REQUIRE(phase_distance(z, flipped) == Approx(4.0).epsilon(1e-12));
    }
    SECTION("matches direct summation") {
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            const auto a = oracle::random_tensor({1, 8, 8}, 300 + seed);
            const auto ref = phase(fft2(oracle::random_tensor({1, 8, 8}, 400 + seed)));
            REQUIRE(std::abs(phase_distance(a, ref) - oracle::phase_distance(a, ref.values)) < 1e-8);
        }
    }
    SECTION("shape mismatch throws") {
        REQUIRE_THROWS_AS(phase_distance(z, PhaseMap{{1, 8, 4}, std::vector<double>(32)}), ShapeError);
    }
}

TEST_CASE("guidance distances are non-negative", "[fourier][property]") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto a = oracle::random_tensor({2, 8, 8}, seed);
        const auto b = oracle::random_tensor({2, 8, 8}, seed + 1000);
        const auto spec = fft2(b);
        REQUIRE(amp_distance(a, amplitude(spec)) >= 0.0);
        REQUIRE(phase_distance(a, phase(spec)) >= 0.0);
    }
}

TEST_CASE("amplitude gradient", "[fourier][gradient]") {
    SECTION("vanishes at the minimum") {
        const auto z = oracle::random_tensor({2, 8, 8}, 7);
        REQUIRE(max_abs(grad_amp_distance(z, amplitude(fft2(z)))) < 1e-10);
    }
    SECTION("matches central finite differences") {
        for (std::uint64_t seed = 1; seed <= 20; ++seed) {
            const auto z = oracle::random_tensor({1, 8, 8}, 500 + seed);
            const auto ref = amplitude(fft2(oracle::random_tensor({1, 8, 8}, 600 + seed)));
            REQUIRE(no_guarded_bins(z));
            const auto numeric = oracle::central_difference(
                [&](const ImageTensor& p) { return oracle::amp_distance(p, ref.values); }, z, 1e-4);
            REQUIRE(oracle::max_relative_error(grad_amp_distance(z, ref), numeric) < 1e-3);
        }
    }
    SECTION("descent direction at 2z points back toward z") {
        const auto z = oracle::random_tensor({1, 8, 8}, 8);
        const auto ref = amplitude(fft2(z));
        const auto z2 = 2.0 * z;
        const auto step = -1.0 * grad_amp_distance(z2, ref);
        REQUIRE(dot(step, z2 - z) < 0.0);
    }
}

TEST_CASE("phase gradient", "[fourier][gradient]") {
    SECTION("vanishes at the minimum") {
        const auto z = oracle::random_tensor({2, 8, 8}, 17);
        REQUIRE(max_abs(grad_phase_distance(z, phase(fft2(z)))) < 1e-10);
    }
    SECTION("matches central finite differences") {
        for (std::uint64_t seed = 1; seed <= 20; ++seed) {
            const auto z = oracle::random_tensor({1, 8, 8}, 700 + seed);
            const auto ref = phase(fft2(oracle::random_tensor({1, 8, 8}, 800 + seed)));
            REQUIRE(no_guarded_bins(z));
            const auto numeric = oracle::central_difference(
                [&](const ImageTensor& p) { return oracle::phase_distance(p, ref.values); }, z, 1e-4);
            REQUIRE(oracle::max_relative_error(grad_phase_distance(z, ref), numeric) < 1e-3);
        }
    }
    SECTION("scales as 1/c under z -> c z") {
        const auto z = oracle::random_tensor({1, 8, 8}, 19);
        const auto ref = phase(fft2(oracle::random_tensor({1, 8, 8}, 20)));
        const auto g1 = grad_phase_distance(z, ref);
        const auto g3 = grad_phase_distance(3.0 * z, ref);
        for (std::size_t i = 0; i < g1.size(); ++i) REQUIRE(g3[i] == Approx(g1[i] / 3.0).margin(1e-12));
    }
    SECTION("guarded bins contribute nothing") {
        // Constant input: only DC is non-zero and its phase already matches.
        const ImageTensor z(Shape{1, 4, 4}, 1.0);
        PhaseMap ref{z.shape(), std::vector<double>(16, 1.0)};
        ref.values[0] = 0.0;
        REQUIRE(max_abs(grad_phase_distance(z, ref)) == 0.0);
        REQUIRE(max_abs(grad_amp_distance(z, AmplitudeMap{z.shape(), std::vector<double>(16, 5.0)})) > 0.0);
    }
}

TEST_CASE("phase_score", "[fourier]") {
    const auto a = oracle::uniform_tensor({3, 16, 16}, 31);
    const auto b = oracle::uniform_tensor({3, 16, 16}, 32);
    REQUIRE(phase_score(a, a) == Approx(1.0).epsilon(1e-12));
    REQUIRE(phase_score(a, b) == phase_score(b, a));
    REQUIRE(phase_score(ImageTensor(Shape{3, 16, 16}, 0.5), a) == 0.0);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const double s = phase_score(oracle::random_tensor({1, 8, 8}, seed), oracle::random_tensor({1, 8, 8}, seed + 50));
        REQUIRE(s >= -1.0);
        REQUIRE(s <= 1.0);
    }
    REQUIRE_THROWS_AS(phase_score(a, ImageTensor(Shape{3, 8, 16}, 0.1)), ShapeError);
}

TEST_CASE("luminance weights", "[fourier]") {
    ImageTensor rgb(Shape{3, 2, 2});
    for (std::size_t i = 0; i < 4; ++i) {
        rgb[i] = 1.0;
        rgb[4 + i] = 0.5;
        rgb[8 + i] = 0.25;
    }
    const auto y = luminance(rgb);
    REQUIRE(y.shape() == Shape{1, 2, 2});
    REQUIRE(y[0] == Approx(0.299 + 0.587 * 0.5 + 0.114 * 0.25));
    REQUIRE_THROWS_AS(luminance(ImageTensor(Shape{2, 2, 2})), ShapeError);
}
