#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "freqguide/condition.hpp"
#include "freqguide/tensor.hpp"

/// Procedural stick-figure benchmark. Appearance (colour, texture, torso
/// emblem) belongs to the subject; pose (limb angles, posture offset, prop)
/// belongs to the action. Because the two factors never mix, the image of
/// any subject performing any action can be rendered exactly, which gives
/// every source/driving pair a ground-truth target.
namespace freqguide::sprites {

inline constexpr std::size_t kImageSize = 64;
/// Jitter never moves the figure by more than this many pixels per axis.
inline constexpr int kMaxJitter = 2;

struct Rgb8 {
    std::uint8_t r = 0;
    std::uint8_t g = 0;
    std::uint8_t b = 0;
};

enum class Texture { solid, striped, dotted };
enum class BodyShape { round, square, tall };
enum class Prop { none, stick, ball };

struct SubjectSpec {
    int subject_id = 0;
    std::string name;
    Rgb8 body_color;
    Texture texture = Texture::solid;
    /// Shape of the emblem painted inside the torso. It never changes the
    /// outline, so silhouettes depend on the action alone.
    BodyShape body_shape = BodyShape::round;
};

struct ActionSpec {
    int action_id = 0;
    std::string name;
    /// Left arm, right arm, left leg, right leg in degrees, measured from
    /// straight down and opening away from the body.
    std::array<double, 4> limb_angles{};
    int posture_dx = 0;
    int posture_dy = 0;
    Prop prop = Prop::none;
};

struct Jitter {
    int dx = 0;
    int dy = 0;
};

[[nodiscard]] const std::vector<SubjectSpec>& default_subjects();
[[nodiscard]] const std::vector<ActionSpec>& default_actions();

/// jitter_seed 0 means no jitter; any other seed gives offsets in
/// [-kMaxJitter, kMaxJitter].
[[nodiscard]] Jitter jitter_from_seed(std::uint64_t jitter_seed);

/// Deterministic 3 x 64 x 64 render on a black background, values k/255.
[[nodiscard]] ImageTensor render(const SubjectSpec& subject, const ActionSpec& action, std::uint64_t jitter_seed);
[[nodiscard]] ImageTensor render(const SubjectSpec& subject, const ActionSpec& action, Jitter jitter);

/// Shift with zero fill (not circular). For renders this is exactly the
/// render at the shifted jitter, as every figure keeps a black margin of at
/// least kMaxJitter pixels.
[[nodiscard]] ImageTensor shift_image(const ImageTensor& img, int dx, int dy);

struct RenderedTriple {
    std::size_t pair_id = 0;
    ImageTensor source_img;
    ImageTensor driving_img;
    /// Source subject performing the driving action, at the driving jitter.
    ImageTensor target_img;
    PairCodes codes;
    std::uint64_t source_jitter_seed = 0;
    std::uint64_t driving_jitter_seed = 0;
};

/// One triple per (source subject, driving action) combination, indexed
/// pair_id = subject * n_actions + action. The source action and driving
/// subject are drawn from `seed` so that the source action differs from the
/// driving action and (with more than one subject) the driving subject
/// differs from the source subject.
[[nodiscard]] std::vector<RenderedTriple> make_benchmark(std::size_t n_subjects, std::size_t n_actions,
                                                         std::uint64_t seed);

/// Renders the triple for a single pair id without building the others.
[[nodiscard]] RenderedTriple make_triple(std::size_t pair_id, std::size_t n_subjects, std::size_t n_actions,
                                         std::uint64_t seed);

/// Figure pixels: any channel above `threshold`.
[[nodiscard]] std::vector<bool> figure_mask(const ImageTensor& img, double threshold = 0.1);

}  // namespace freqguide::sprites
