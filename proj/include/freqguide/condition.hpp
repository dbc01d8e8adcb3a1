#pragma once

#include <optional>
#include <string>
#include <vector>

namespace freqguide {

/// Discrete stand-in for a text prompt: which subject, doing which action.
struct ConditionCode {
    int subject = 0;
    int action = 0;

    friend bool operator==(const ConditionCode&, const ConditionCode&) = default;
};

/// Condition vector fed to the denoiser, with the code it came from
/// (empty for the unconditional / null embedding).
struct ConditionEmbedding {
    std::vector<float> vector;
    std::optional<ConditionCode> code;
};

/// Codes for one source/driving pair. The target takes the subject of the
/// source and the action of the driving image.
struct PairCodes {
    ConditionCode source;
    ConditionCode driving;

    [[nodiscard]] ConditionCode target() const { return {source.subject, driving.action}; }
};

[[nodiscard]] std::string to_string(const ConditionCode& code);

}  // namespace freqguide
