#include "freqguide/fourier.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <tuple>

#include "freqguide/errors.hpp"

namespace freqguide::fourier {

namespace {

// FFTW planning is not thread-safe, execution with new-array plans is.
// Plans are created once per (height, width, direction) and kept for the
// life of the process.
class PlanCache {
public:
    fftw_plan get(std::size_t h, std::size_t w, int sign) {
        std::lock_guard lock(mutex_);
        const auto key = std::make_tuple(h, w, sign);
        if (auto it = plans_.find(key); it != plans_.end()) return it->second;
        auto* buf_in = fftw_alloc_complex(h * w);
        auto* buf_out = fftw_alloc_complex(h * w);
        fftw_plan p = fftw_plan_dft_2d(static_cast<int>(h), static_cast<int>(w), buf_in, buf_out, sign,
                                       FFTW_ESTIMATE | FFTW_UNALIGNED);
        fftw_free(buf_in);
        fftw_free(buf_out);
        if (p == nullptr) throw std::runtime_error("fftw: failed to create plan");
        plans_.emplace(key, p);
        return p;
    }

private:
    std::mutex mutex_;
    std::map<std::tuple<std::size_t, std::size_t, int>, fftw_plan> plans_;
};

PlanCache& plan_cache() {
    static PlanCache cache;
    return cache;
}

void check_transformable(const Shape& s) {
    if (s.height < 2 || s.width < 2) {
        throw ShapeError("fft2: spatial axes must be at least 2, got " + s.str());
    }
    if (s.channels == 0) throw ShapeError("fft2: tensor has no channels");
}

// Transforms `data` (channel-major complex planes) in place.
void transform(std::vector<std::complex<double>>& data, const Shape& s, int sign) {
    const fftw_plan plan = plan_cache().get(s.height, s.width, sign);
    std::vector<std::complex<double>> out(s.plane());
    for (std::size_t c = 0; c < s.channels; ++c) {
        auto* in = reinterpret_cast<fftw_complex*>(data.data() + c * s.plane());
        fftw_execute_dft(plan, in, reinterpret_cast<fftw_complex*>(out.data()));
        std::copy(out.begin(), out.end(), data.begin() + static_cast<std::ptrdiff_t>(c * s.plane()));
    }
}

double wrap_phase(double p) {
    // atan2 may return -pi; the declared range is (-pi, pi].
    return p <= -std::numbers::pi ? std::numbers::pi : p;
}

ImageTensor real_inverse_unnormalized(std::vector<std::complex<double>> g, const Shape& s) {
    transform(g, s, FFTW_BACKWARD);
    ImageTensor out(s);
    for (std::size_t i = 0; i < g.size(); ++i) out[i] = g[i].real();
    return out;
}

}  // namespace

SpectralMap::SpectralMap(Shape shape) : shape_(shape), bins_(shape.size()) {}

SpectralMap::SpectralMap(Shape shape, std::vector<std::complex<double>> bins)
    : shape_(shape), bins_(std::move(bins)) {
    if (bins_.size() != shape_.size()) throw ShapeError("SpectralMap: bin count does not match shape " + shape_.str());
}

std::vector<double> SpectralMap::real_part() const {
    std::vector<double> out(bins_.size());
    for (std::size_t i = 0; i < bins_.size(); ++i) out[i] = bins_[i].real();
    return out;
}

std::vector<double> SpectralMap::imag_part() const {
    std::vector<double> out(bins_.size());
    for (std::size_t i = 0; i < bins_.size(); ++i) out[i] = bins_[i].imag();
    return out;
}

SpectralMap fft2(const ImageTensor& img) {
    check_transformable(img.shape());
    if (!all_finite(img)) throw std::invalid_argument("fft2: input contains non-finite values");
    std::vector<std::complex<double>> data(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) data[i] = img[i];
    transform(data, img.shape(), FFTW_FORWARD);
    return SpectralMap(img.shape(), std::move(data));
}

ImageTensor ifft2(const SpectralMap& spec) {
    check_transformable(spec.shape());
    ImageTensor out = real_inverse_unnormalized(spec.bins(), spec.shape());
    out *= 1.0 / static_cast<double>(spec.shape().plane());
    return out;
}

AmplitudeMap amplitude(const SpectralMap& spec) {
    AmplitudeMap amp{spec.shape(), std::vector<double>(spec.bins().size())};
    for (std::size_t i = 0; i < amp.values.size(); ++i) amp.values[i] = std::abs(spec.bins()[i]);
    return amp;
}

PhaseMap phase(const SpectralMap& spec) {
    PhaseMap ph{spec.shape(), std::vector<double>(spec.bins().size())};
    for (std::size_t i = 0; i < ph.values.size(); ++i) {
        const auto& b = spec.bins()[i];
        ph.values[i] = std::abs(b) < kAmplitudeEpsilon ? 0.0 : wrap_phase(std::arg(b));
    }
    return ph;
}

SpectralMap reconstruct(const AmplitudeMap& amp, const PhaseMap& ph) {
    require_same_shape(amp.shape, ph.shape, "reconstruct");
    SpectralMap spec(amp.shape);
    for (std::size_t i = 0; i < amp.values.size(); ++i) spec.bins()[i] = std::polar(amp.values[i], ph.values[i]);
    return spec;
}

ImageTensor phase_only_reconstruct(const ImageTensor& img) {
    SpectralMap spec = fft2(img);
    for (auto& b : spec.bins()) {
        const double a = std::abs(b);
        b = a < kAmplitudeEpsilon ? std::complex<double>{} : b / a;
    }
    ImageTensor out = ifft2(spec);
    const Shape& s = out.shape();
    for (std::size_t c = 0; c < s.channels; ++c) {
        auto plane = out.channel(c);
        const auto [lo, hi] = std::minmax_element(plane.begin(), plane.end());
        const double min_v = *lo;
        const double range = *hi - *lo;
        // Round-off in the inverse transform of a single DC bin is ~1e-17.
        if (range < 1e-12) {
            std::fill(plane.begin(), plane.end(), 0.0);
            continue;
        }
        for (auto& v : plane) v = (v - min_v) / range;
    }
    return out;
}

double amp_distance(const ImageTensor& z, const AmplitudeMap& ref_amp) {
    require_same_shape(z.shape(), ref_amp.shape, "amp_distance");
    const SpectralMap spec = fft2(z);
    double total = 0.0;
    for (std::size_t i = 0; i < ref_amp.values.size(); ++i) {
        const double d = std::abs(spec.bins()[i]) - ref_amp.values[i];
        total += d * d;
    }
    return total;
}

double phase_distance(const ImageTensor& z, const PhaseMap& ref_phase) {
    require_same_shape(z.shape(), ref_phase.shape, "phase_distance");
    const PhaseMap ph = phase(fft2(z));
    double total = 0.0;
    for (std::size_t i = 0; i < ph.values.size(); ++i) total += 2.0 * (1.0 - std::cos(ph.values[i] - ref_phase.values[i]));
    return total;
}

ImageTensor grad_amp_distance(const ImageTensor& z, const AmplitudeMap& ref_amp) {
    require_same_shape(z.shape(), ref_amp.shape, "grad_amp_distance");
    SpectralMap spec = fft2(z);
    auto& g = spec.bins();
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double a = std::abs(g[i]);
        g[i] = a < kAmplitudeEpsilon ? std::complex<double>{} : 2.0 * (a - ref_amp.values[i]) * g[i] / a;
    }
    return real_inverse_unnormalized(std::move(g), z.shape());
}

ImageTensor grad_phase_distance(const ImageTensor& z, const PhaseMap& ref_phase) {
    require_same_shape(z.shape(), ref_phase.shape, "grad_phase_distance");
    SpectralMap spec = fft2(z);
    auto& g = spec.bins();
    constexpr std::complex<double> i_unit{0.0, 1.0};
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double a = std::abs(g[i]);
        if (a < kAmplitudeEpsilon) {
            g[i] = {};
            continue;
        }
        const double delta = std::arg(g[i]) - ref_phase.values[i];
        g[i] = 2.0 * std::sin(delta) * i_unit * g[i] / (a * a);
    }
    return real_inverse_unnormalized(std::move(g), z.shape());
}

ImageTensor luminance(const ImageTensor& img) {
    const Shape& s = img.shape();
    if (s.channels == 1) return img;
    if (s.channels != 3) throw ShapeError("luminance: expected 1 or 3 channels, got " + s.str());
    ImageTensor out(Shape{1, s.height, s.width});
    const auto r = img.channel(0);
    const auto g = img.channel(1);
    const auto b = img.channel(2);
    for (std::size_t i = 0; i < s.plane(); ++i) out[i] = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
    return out;
}

double phase_score(const ImageTensor& a, const ImageTensor& b) {
    if (a.shape().height != b.shape().height || a.shape().width != b.shape().width) {
        throw ShapeError("phase_score: spatial shapes differ " + a.shape().str() + " vs " + b.shape().str());
    }
    const PhaseMap pa = phase(fft2(luminance(a)));
    const PhaseMap pb = phase(fft2(luminance(b)));
    double ab = 0.0;
    double aa = 0.0;
    double bb = 0.0;
    for (std::size_t i = 0; i < pa.values.size(); ++i) {
        ab += pa.values[i] * pb.values[i];
        aa += pa.values[i] * pa.values[i];
        bb += pb.values[i] * pb.values[i];
    }
    if (aa == 0.0 || bb == 0.0) return 0.0;
    return std::clamp(ab / std::sqrt(aa * bb), -1.0, 1.0);
}

}  // namespace freqguide::fourier
