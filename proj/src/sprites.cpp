#include "freqguide/sprites.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "freqguide/errors.hpp"
#include "freqguide/rng.hpp"

namespace freqguide {

std::string to_string(const ConditionCode& code) {
    return "(s" + std::to_string(code.subject) + ",a" + std::to_string(code.action) + ")";
}

}  // namespace freqguide

namespace freqguide::sprites {

namespace {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
double dot2(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }

// Body geometry in figure-local pixel units; +y points down.
constexpr double kTorsoHalfW = 5.5;
constexpr double kTorsoHalfH = 7.5;
constexpr double kTorsoCorner = 2.0;
constexpr Vec2 kHeadCenter{0.0, -12.5};
constexpr double kHeadRadius = 4.5;
constexpr double kShoulderX = 5.0;
constexpr double kShoulderY = -5.5;
constexpr double kHipX = 3.0;
constexpr double kHipY = 7.0;
constexpr double kArmLength = 11.0;
constexpr double kArmRadius = 1.6;
constexpr double kLegLength = 13.0;
constexpr double kLegRadius = 1.8;
constexpr double kBallRadius = 3.2;
constexpr double kStickLength = 7.0;
constexpr double kStickRadius = 1.0;

bool in_capsule(Vec2 p, Vec2 a, Vec2 b, double r) {
    const Vec2 ab = b - a;
    const double t = std::clamp(dot2(p - a, ab) / dot2(ab, ab), 0.0, 1.0);
    const Vec2 d = p - (a + t * ab);
    return dot2(d, d) <= r * r;
}

bool in_circle(Vec2 p, Vec2 c, double r) {
    const Vec2 d = p - c;
    return dot2(d, d) <= r * r;
}

bool in_rounded_rect(Vec2 p, double half_w, double half_h, double corner) {
    const double qx = std::abs(p.x) - (half_w - corner);
    const double qy = std::abs(p.y) - (half_h - corner);
    if (qx > corner || qy > corner) return false;
    if (qx <= 0.0 || qy <= 0.0) return true;
    return qx * qx + qy * qy <= corner * corner;
}

// Unit direction of a limb; `side` is -1 for the left side, +1 for the right.
Vec2 limb_direction(double degrees, double side) {
    const double rad = degrees * std::numbers::pi / 180.0;
    return {side * std::sin(rad), std::cos(rad)};
}

Vec2 rotate(Vec2 v, double degrees) {
    const double rad = degrees * std::numbers::pi / 180.0;
    return {v.x * std::cos(rad) - v.y * std::sin(rad), v.x * std::sin(rad) + v.y * std::cos(rad)};
}

struct Pose {
    std::array<Vec2, 4> joint_start;
    std::array<Vec2, 4> joint_end;
    std::array<double, 4> radius;
    Prop prop = Prop::none;
    Vec2 prop_a;
    Vec2 prop_b;
};

Pose make_pose(const ActionSpec& action) {
    Pose pose;
    const std::array<Vec2, 4> starts{Vec2{-kShoulderX, kShoulderY}, Vec2{kShoulderX, kShoulderY}, Vec2{-kHipX, kHipY},
                                     Vec2{kHipX, kHipY}};
    for (std::size_t i = 0; i < 4; ++i) {
        const double side = (i % 2 == 0) ? -1.0 : 1.0;
        const double length = i < 2 ? kArmLength : kLegLength;
        pose.joint_start[i] = starts[i];
        pose.joint_end[i] = starts[i] + length * limb_direction(action.limb_angles[i], side);
        pose.radius[i] = i < 2 ? kArmRadius : kLegRadius;
    }
    pose.prop = action.prop;
    const Vec2 hand = pose.joint_end[1];
    const Vec2 dir = limb_direction(action.limb_angles[1], 1.0);
    if (action.prop == Prop::ball) {
        pose.prop_a = hand + 2.5 * dir;
    } else if (action.prop == Prop::stick) {
        pose.prop_a = hand;
        pose.prop_b = hand + kStickLength * rotate(dir, -40.0);
    }
    return pose;
}

bool in_figure(Vec2 p, const Pose& pose) {
    if (in_rounded_rect(p, kTorsoHalfW, kTorsoHalfH, kTorsoCorner)) return true;
    if (in_circle(p, kHeadCenter, kHeadRadius)) return true;
    for (std::size_t i = 0; i < 4; ++i) {
        if (in_capsule(p, pose.joint_start[i], pose.joint_end[i], pose.radius[i])) return true;
    }
    switch (pose.prop) {
        case Prop::ball: return in_circle(p, pose.prop_a, kBallRadius);
        case Prop::stick: return in_capsule(p, pose.prop_a, pose.prop_b, kStickRadius);
        case Prop::none: break;
    }
    return false;
}

bool in_emblem(Vec2 p, BodyShape shape) {
    switch (shape) {
        case BodyShape::round: return in_circle(p, {0.0, 0.5}, 3.0);
        case BodyShape::square: return std::abs(p.x) <= 2.5 && std::abs(p.y - 0.5) <= 2.5;
        case BodyShape::tall: return std::abs(p.x) <= 1.5 && std::abs(p.y - 0.5) <= 4.5;
    }
    return false;
}

int positive_mod(int a, int m) { return ((a % m) + m) % m; }

Rgb8 accent(Rgb8 c) {
    return {static_cast<std::uint8_t>(c.r * 55 / 100), static_cast<std::uint8_t>(c.g * 55 / 100),
            static_cast<std::uint8_t>(c.b * 55 / 100)};
}

Rgb8 light(Rgb8 c) {
    return {static_cast<std::uint8_t>(c.r + (255 - c.r) / 2), static_cast<std::uint8_t>(c.g + (255 - c.g) / 2),
            static_cast<std::uint8_t>(c.b + (255 - c.b) / 2)};
}

}  // namespace

const std::vector<SubjectSpec>& default_subjects() {
    static const std::vector<SubjectSpec> subjects{
        {0, "red", {220, 50, 50}, Texture::solid, BodyShape::round},
        {1, "green", {60, 200, 70}, Texture::striped, BodyShape::square},
        {2, "blue", {60, 90, 230}, Texture::dotted, BodyShape::tall},
        {3, "yellow", {230, 210, 40}, Texture::solid, BodyShape::square},
        {4, "purple", {150, 60, 220}, Texture::striped, BodyShape::tall},
        {5, "sky", {40, 160, 220}, Texture::dotted, BodyShape::round},
        {6, "orange", {240, 140, 30}, Texture::striped, BodyShape::round},
        {7, "silver", {190, 190, 190}, Texture::solid, BodyShape::tall},
    };
    return subjects;
}

const std::vector<ActionSpec>& default_actions() {
    static const std::vector<ActionSpec> actions{
        {0, "stand", {15, 15, 8, 8}, 0, 0, Prop::none},
        {1, "wave", {15, 155, 8, 8}, 0, 0, Prop::none},
        {2, "arms_up", {160, 160, 8, 8}, 0, 0, Prop::none},
        {3, "t_pose", {90, 90, 8, 8}, 0, 0, Prop::none},
        {4, "march", {40, 15, 8, 50}, 0, 0, Prop::none},
        {5, "squat", {60, 60, 45, 45}, 0, 3, Prop::none},
        {6, "kick", {30, 60, 8, 85}, -2, -1, Prop::none},
        {7, "point", {15, 90, 8, 8}, 0, 0, Prop::stick},
        {8, "hold_ball", {15, 135, 8, 8}, 0, 0, Prop::ball},
        {9, "cheer", {150, 40, 25, 8}, 0, 0, Prop::none},
        {10, "lean", {60, 0, 25, 0}, -3, 0, Prop::none},
        {11, "jump", {130, 130, 35, 35}, 0, -4, Prop::none},
        {12, "swing", {100, 100, 8, 40}, 0, 0, Prop::stick},
        {13, "dribble", {15, 45, 12, 12}, 0, 0, Prop::ball},
        {14, "balance", {90, 90, 8, 80}, 2, 0, Prop::none},
    };
    return actions;
}

Jitter jitter_from_seed(std::uint64_t jitter_seed) {
    if (jitter_seed == 0) return {};
    Rng rng(derive_seed(jitter_seed, {label_hash("jitter")}));
    const int dx = static_cast<int>(rng.uniform_int(-kMaxJitter, kMaxJitter));
    const int dy = static_cast<int>(rng.uniform_int(-kMaxJitter, kMaxJitter));
    return {dx, dy};
}

ImageTensor render(const SubjectSpec& subject, const ActionSpec& action, std::uint64_t jitter_seed) {
    return render(subject, action, jitter_from_seed(jitter_seed));
}

ImageTensor render(const SubjectSpec& subject, const ActionSpec& action, Jitter jitter) {
    constexpr int n = static_cast<int>(kImageSize);
    const int ox = n / 2 + action.posture_dx + jitter.dx;
    const int oy = n / 2 + action.posture_dy + jitter.dy;
    const Pose pose = make_pose(action);
    const Rgb8 body = subject.body_color;
    const Rgb8 acc = accent(body);
    const Rgb8 emb = light(body);

    ImageTensor img(Shape{3, kImageSize, kImageSize});
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            const int lx = x - ox;
            const int ly = y - oy;
            const Vec2 p{lx + 0.5, ly + 0.5};
            if (!in_figure(p, pose)) continue;
            Rgb8 c = body;
            switch (subject.texture) {
                case Texture::striped:
                    if (positive_mod(ly, 4) == 0) c = acc;
                    break;
                case Texture::dotted:
                    if (positive_mod(lx, 3) == 0 && positive_mod(ly, 3) == 0) c = acc;
                    break;
                case Texture::solid: break;
            }
            if (in_rounded_rect(p, kTorsoHalfW, kTorsoHalfH, kTorsoCorner) && in_emblem(p, subject.body_shape)) c = emb;
            const auto ux = static_cast<std::size_t>(x);
            const auto uy = static_cast<std::size_t>(y);
            img(0, uy, ux) = c.r / 255.0;
            img(1, uy, ux) = c.g / 255.0;
            img(2, uy, ux) = c.b / 255.0;
        }
    }
    return img;
}

ImageTensor shift_image(const ImageTensor& img, int dx, int dy) {
    const Shape& s = img.shape();
    ImageTensor out(s);
    const auto h = static_cast<int>(s.height);
    const auto w = static_cast<int>(s.width);
    for (std::size_t c = 0; c < s.channels; ++c) {
        for (int y = 0; y < h; ++y) {
            const int ty = y + dy;
            if (ty < 0 || ty >= h) continue;
            for (int x = 0; x < w; ++x) {
                const int tx = x + dx;
                if (tx < 0 || tx >= w) continue;
                out(c, static_cast<std::size_t>(ty), static_cast<std::size_t>(tx)) =
                    img(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x));
            }
        }
    }
    return out;
}

namespace {

void check_vocabulary(std::size_t n_subjects, std::size_t n_actions) {
    if (n_subjects < 1 || n_subjects > default_subjects().size()) {
        throw ConfigError("make_benchmark: n_subjects must be in [1, " + std::to_string(default_subjects().size()) +
                          "]");
    }
    if (n_actions < 2 || n_actions > default_actions().size()) {
        throw ConfigError("make_benchmark: n_actions must be in [2, " + std::to_string(default_actions().size()) +
                          "]");
    }
}

}  // namespace

RenderedTriple make_triple(std::size_t pair_id, std::size_t n_subjects, std::size_t n_actions, std::uint64_t seed) {
    const auto& subjects = default_subjects();
    const auto& actions = default_actions();
    check_vocabulary(n_subjects, n_actions);
    if (pair_id >= n_subjects * n_actions) throw VocabularyError("unknown pair id " + std::to_string(pair_id));

    const int subject = static_cast<int>(pair_id / n_actions);
    const int driving_action = static_cast<int>(pair_id % n_actions);
    Rng rng(derive_seed(seed, {label_hash("pair"), pair_id}));
    // Offsets from 1 guarantee "different from" without rejection loops.
    const int source_action =
        (driving_action + static_cast<int>(rng.uniform_int(1, static_cast<std::int64_t>(n_actions) - 1))) %
        static_cast<int>(n_actions);
    int driving_subject = subject;
    if (n_subjects > 1) {
        driving_subject =
            (subject + static_cast<int>(rng.uniform_int(1, static_cast<std::int64_t>(n_subjects) - 1))) %
            static_cast<int>(n_subjects);
    }
    // Seed 0 is reserved for "no jitter"; force the low bit on.
    const std::uint64_t source_jitter = derive_seed(seed, {label_hash("source_jitter"), pair_id}) | 1ULL;
    const std::uint64_t driving_jitter = derive_seed(seed, {label_hash("driving_jitter"), pair_id}) | 1ULL;

    RenderedTriple triple;
    triple.pair_id = pair_id;
    triple.codes = PairCodes{{subject, source_action}, {driving_subject, driving_action}};
    triple.source_jitter_seed = source_jitter;
    triple.driving_jitter_seed = driving_jitter;
    triple.source_img = render(subjects[static_cast<std::size_t>(subject)], actions[static_cast<std::size_t>(source_action)],
                               source_jitter);
    triple.driving_img = render(subjects[static_cast<std::size_t>(driving_subject)],
                                actions[static_cast<std::size_t>(driving_action)], driving_jitter);
    triple.target_img = render(subjects[static_cast<std::size_t>(subject)],
                               actions[static_cast<std::size_t>(driving_action)], driving_jitter);
    return triple;
}

std::vector<RenderedTriple> make_benchmark(std::size_t n_subjects, std::size_t n_actions, std::uint64_t seed) {
    check_vocabulary(n_subjects, n_actions);
    std::vector<RenderedTriple> out;
    out.reserve(n_subjects * n_actions);
    for (std::size_t id = 0; id < n_subjects * n_actions; ++id) out.push_back(make_triple(id, n_subjects, n_actions, seed));
    return out;
}

std::vector<bool> figure_mask(const ImageTensor& img, double threshold) {
    const Shape& s = img.shape();
    std::vector<bool> mask(s.plane(), false);
    for (std::size_t c = 0; c < s.channels; ++c) {
        const auto plane = img.channel(c);
        for (std::size_t i = 0; i < s.plane(); ++i) mask[i] = mask[i] || plane[i] > threshold;
    }
    return mask;
}

}  // namespace freqguide::sprites
