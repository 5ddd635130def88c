#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace vertune {

// The eight target emotion labels. The set is fixed; the circular order and
// the polarity assignment live in EmotionWheel and are configurable.
enum class Emotion : std::uint8_t {
    amusement = 0,
    awe,
    contentment,
    excitement,
    anger,
    disgust,
    fear,
    sadness,
};

constexpr std::size_t kEmotionCount = 8;

const std::array<Emotion, kEmotionCount>& all_emotions();
std::string_view emotion_name(Emotion e);
std::optional<Emotion> emotion_from_name(std::string_view name);

enum class Polarity : std::uint8_t { positive, negative };

// Circular arrangement of the eight labels plus the polarity weighting
// constant. dist() is the minimal number of steps along the cycle; weight()
// is 1+dist within a polarity and C+dist across polarities.
class EmotionWheel {
public:
    // Canonical default: positive arc then negative arc, C = 4.
    static EmotionWheel standard();

    EmotionWheel(std::vector<Emotion> order,
                 std::vector<Emotion> positive_labels,
                 int polarity_constant = 4);

    int dist(Emotion a, Emotion b) const;
    int weight(Emotion a, Emotion b) const;

    Polarity polarity(Emotion e) const { return polarity_[index_of(e)]; }
    bool same_polarity(Emotion a, Emotion b) const {
        return polarity(a) == polarity(b);
    }

    const std::vector<Emotion>& order() const { return order_; }
    int polarity_constant() const { return polarity_constant_; }

private:
    std::size_t index_of(Emotion e) const;

    std::vector<Emotion> order_;
    std::array<std::size_t, kEmotionCount> position_{};
    std::array<Polarity, kEmotionCount> polarity_{};
    int polarity_constant_;
};

// Outcome of reading free-form model text: either one of the eight labels or
// a non-target marker keeping the raw text. Non-target never equals a label.
struct ParsedOutput {
    std::optional<Emotion> label;
    std::string raw;

    bool is_non_target() const { return !label.has_value(); }

    static ParsedOutput target(Emotion e, std::string raw_text) {
        return ParsedOutput{e, std::move(raw_text)};
    }
    static ParsedOutput non_target(std::string raw_text) {
        return ParsedOutput{std::nullopt, std::move(raw_text)};
    }
};

// Case-insensitive whole-word scan; returns the earliest-occurring label or
// non-target when none of the given labels appears. Synonyms are not mapped:
// "happy" and "sad" are non-target by design.
ParsedOutput parse_label(std::string_view raw_text, const std::vector<Emotion>& labels);

} // namespace vertune
