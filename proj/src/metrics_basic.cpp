#include <algorithm>
#include <array>
#include <cmath>

#include "freqguide/errors.hpp"
#include "freqguide/metrics.hpp"
#include "freqguide/sprites.hpp"

namespace freqguide::metrics {

namespace {

constexpr std::size_t kBins = 16;

std::array<std::array<double, kBins>, 3> channel_histograms(const ImageTensor& img, const std::vector<bool>& mask,
                                                            std::size_t count) {
    std::array<std::array<double, kBins>, 3> hist{};
    for (std::size_t c = 0; c < 3; ++c) {
        const auto plane = img.channel(c);
        for (std::size_t i = 0; i < plane.size(); ++i) {
            if (!mask[i]) continue;
            const auto bin = std::min(kBins - 1, static_cast<std::size_t>(std::clamp(plane[i], 0.0, 1.0) * kBins));
            hist[c][bin] += 1.0;
        }
        for (auto& h : hist[c]) h /= static_cast<double>(count);
    }
    return hist;
}

}  // namespace

double subject_fidelity(const ImageTensor& generated, const ImageTensor& source) {
    require_same_shape(generated.shape(), source.shape(), "subject_fidelity");
    if (generated.shape().channels != 3) throw ShapeError("subject_fidelity: expected RGB images");
    const auto mask_g = sprites::figure_mask(generated, kFigureThreshold);
    const auto mask_s = sprites::figure_mask(source, kFigureThreshold);
    const auto count_g = static_cast<std::size_t>(std::count(mask_g.begin(), mask_g.end(), true));
    const auto count_s = static_cast<std::size_t>(std::count(mask_s.begin(), mask_s.end(), true));
    if (count_g == 0 || count_s == 0) return 0.0;
    const auto hg = channel_histograms(generated, mask_g, count_g);
    const auto hs = channel_histograms(source, mask_s, count_s);
    double total = 0.0;
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t b = 0; b < kBins; ++b) total += std::min(hg[c][b], hs[c][b]);
    return std::clamp(total / 3.0, 0.0, 1.0);
}

double oracle_target_error(const ImageTensor& generated, const ImageTensor& target) {
    require_same_shape(generated.shape(), target.shape(), "oracle_target_error");
    double mse = 0.0;
    for (std::size_t i = 0; i < generated.size(); ++i) {
        const double d = generated[i] - target[i];
        mse += d * d;
    }
    mse /= static_cast<double>(generated.size());
    if (mse == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

}  // namespace freqguide::metrics
