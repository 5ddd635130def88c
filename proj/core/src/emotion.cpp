#include "vertune/emotion.hpp"

#include "vertune/errors.hpp"
#include "vertune/text.hpp"

#include <algorithm>
#include <cstdlib>

namespace vertune {

namespace {

constexpr std::array<std::string_view, kEmotionCount> kNames = {
    "amusement", "awe", "contentment", "excitement",
    "anger",     "disgust", "fear",    "sadness",
};

} // namespace

const std::array<Emotion, kEmotionCount>& all_emotions() {
    static const std::array<Emotion, kEmotionCount> all = {
        Emotion::amusement, Emotion::awe,     Emotion::contentment, Emotion::excitement,
        Emotion::anger,     Emotion::disgust, Emotion::fear,        Emotion::sadness,
    };
    return all;
}

std::string_view emotion_name(Emotion e) {
    return kNames[static_cast<std::size_t>(e)];
}

std::optional<Emotion> emotion_from_name(std::string_view name) {
    std::string lowered = to_lower(name);
    for (std::size_t i = 0; i < kEmotionCount; ++i) {
        if (kNames[i] == lowered) return static_cast<Emotion>(i);
    }
    return std::nullopt;
}

EmotionWheel EmotionWheel::standard() {
    return EmotionWheel(
        {Emotion::amusement, Emotion::awe, Emotion::contentment, Emotion::excitement,
         Emotion::sadness, Emotion::fear, Emotion::disgust, Emotion::anger},
        {Emotion::amusement, Emotion::awe, Emotion::contentment, Emotion::excitement},
        4);
}

EmotionWheel::EmotionWheel(std::vector<Emotion> order,
                           std::vector<Emotion> positive_labels,
                           int polarity_constant)
    : order_(std::move(order)), polarity_constant_(polarity_constant) {
    if (order_.size() != kEmotionCount) {
        throw ConfigError("wheel order must list all " + std::to_string(kEmotionCount) +
                          " labels, got " + std::to_string(order_.size()));
    }
    std::array<bool, kEmotionCount> seen{};
    for (std::size_t pos = 0; pos < order_.size(); ++pos) {
        std::size_t idx = static_cast<std::size_t>(order_[pos]);
        if (seen[idx]) {
            throw ConfigError(std::string("wheel order repeats label '") +
                              std::string(emotion_name(order_[pos])) + "'");
        }
        seen[idx] = true;
        position_[idx] = pos;
    }
    polarity_.fill(Polarity::negative);
    for (Emotion e : positive_labels) {
        polarity_[static_cast<std::size_t>(e)] = Polarity::positive;
    }
    if (positive_labels.empty() || positive_labels.size() >= kEmotionCount) {
        throw ConfigError("polarity map must split the labels into two non-empty classes");
    }
    // C must exceed 1 so a cross-polarity pair always weighs more than a
    // same-polarity pair at the same distance.
    if (polarity_constant_ < 2) {
        throw ConfigError("polarity constant must be at least 2, got " +
                          std::to_string(polarity_constant_));
    }
}

std::size_t EmotionWheel::index_of(Emotion e) const {
    std::size_t idx = static_cast<std::size_t>(e);
    if (idx >= kEmotionCount) {
        throw ConfigError("label index out of range: " + std::to_string(idx));
    }
    return idx;
}

int EmotionWheel::dist(Emotion a, Emotion b) const {
    int pa = static_cast<int>(position_[index_of(a)]);
    int pb = static_cast<int>(position_[index_of(b)]);
    int d = std::abs(pa - pb);
    int n = static_cast<int>(order_.size());
    return std::min(d, n - d);
}

int EmotionWheel::weight(Emotion a, Emotion b) const {
    int d = dist(a, b);
    return same_polarity(a, b) ? 1 + d : polarity_constant_ + d;
}

ParsedOutput parse_label(std::string_view raw_text, const std::vector<Emotion>& labels) {
    std::vector<std::string> tokens = word_tokens(raw_text);
    for (const std::string& token : tokens) {
        for (Emotion label : labels) {
            if (token == emotion_name(label)) {
                return ParsedOutput::target(label, std::string(raw_text));
            }
        }
    }
    return ParsedOutput::non_target(std::string(raw_text));
}

} // namespace vertune
