#pragma once

#include <complex>
#include <vector>

#include "freqguide/tensor.hpp"

/// 2D spectral transforms, amplitude/phase decomposition, the frequency
/// guidance distances with their analytic gradients, and the phase score.
///
/// Transform convention: the forward transform is unnormalised,
///   F(u,v) = sum_{y,x} z(y,x) exp(-2 pi i (u y / H + v x / W)),
/// and the inverse carries the 1/(HW) factor. Every channel is transformed
/// independently. With this convention Parseval reads
///   sum z^2 = (1/HW) sum |F|^2.
///
/// All functions are pure and may be called concurrently.
namespace freqguide::fourier {

/// Bins whose amplitude falls below this value have no defined phase; they
/// report phase 0 and contribute nothing to either guidance gradient.
inline constexpr double kAmplitudeEpsilon = 1e-8;

class SpectralMap {
public:
    SpectralMap() = default;
    explicit SpectralMap(Shape shape);
    SpectralMap(Shape shape, std::vector<std::complex<double>> bins);

    [[nodiscard]] const Shape& shape() const { return shape_; }
    [[nodiscard]] std::vector<std::complex<double>>& bins() { return bins_; }
    [[nodiscard]] const std::vector<std::complex<double>>& bins() const { return bins_; }

    std::complex<double>& operator()(std::size_t c, std::size_t u, std::size_t v) {
        return bins_[(c * shape_.height + u) * shape_.width + v];
    }
    const std::complex<double>& operator()(std::size_t c, std::size_t u, std::size_t v) const {
        return bins_[(c * shape_.height + u) * shape_.width + v];
    }

    [[nodiscard]] std::vector<double> real_part() const;
    [[nodiscard]] std::vector<double> imag_part() const;

private:
    Shape shape_{};
    std::vector<std::complex<double>> bins_;
};

/// Non-negative modulus per bin.
struct AmplitudeMap {
    Shape shape{};
    std::vector<double> values;
};

/// Argument per bin, in (-pi, pi].
struct PhaseMap {
    Shape shape{};
    std::vector<double> values;
};

/// Forward transform of every channel. Throws ShapeError for H or W < 2 and
/// std::invalid_argument for non-finite input.
[[nodiscard]] SpectralMap fft2(const ImageTensor& img);

/// Inverse transform (with the 1/HW factor), real part.
[[nodiscard]] ImageTensor ifft2(const SpectralMap& spec);

[[nodiscard]] AmplitudeMap amplitude(const SpectralMap& spec);
[[nodiscard]] PhaseMap phase(const SpectralMap& spec);
[[nodiscard]] SpectralMap reconstruct(const AmplitudeMap& amp, const PhaseMap& ph);

/// Inverse transform of a unit-amplitude spectrum carrying the phase of
/// `img`, min-max normalised to [0,1] per channel. Bins below
/// kAmplitudeEpsilon stay at zero amplitude, so a constant image maps to a
/// constant output; constant output channels are reported as 0.
[[nodiscard]] ImageTensor phase_only_reconstruct(const ImageTensor& img);

/// G_a = sum over channels and bins of (|F(z)| - ref)^2.
[[nodiscard]] double amp_distance(const ImageTensor& z, const AmplitudeMap& ref_amp);

/// G_p = sum |exp(i phi(z)) - exp(i ref)|^2 = sum 2 (1 - cos(phi(z) - ref)).
///
/// Raw angular L2 is discontinuous at the +-pi wrap; the unit-circle form
/// agrees with it to second order and is smooth everywhere.
[[nodiscard]] double phase_distance(const ImageTensor& z, const PhaseMap& ref_phase);

/// Analytic gradient of amp_distance with respect to z.
///
/// With g(k) = 2 (|F_k| - ref_k) F_k / |F_k| the gradient is
/// Re(sum_k g(k) exp(+i theta_kn)), i.e. HW times the real part of the
/// inverse transform of g.
[[nodiscard]] ImageTensor grad_amp_distance(const ImageTensor& z, const AmplitudeMap& ref_amp);

/// Analytic gradient of phase_distance; g(k) = 2 sin(phi_k - ref_k) i F_k / |F_k|^2.
[[nodiscard]] ImageTensor grad_phase_distance(const ImageTensor& z, const PhaseMap& ref_phase);

/// Single-channel luminance: 0.299 R + 0.587 G + 0.114 B for three channels,
/// identity for one channel. Other channel counts throw ShapeError.
[[nodiscard]] ImageTensor luminance(const ImageTensor& img);

/// Cosine similarity of the flattened phase maps of the luminance of `a`
/// and `b`. Returns 0 when either phase vector has zero norm.
[[nodiscard]] double phase_score(const ImageTensor& a, const ImageTensor& b);

}  // namespace freqguide::fourier
