#pragma once

#include "vertune/backend.hpp"
#include "vertune/datastore.hpp"
#include "vertune/emotion.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace vertune {
namespace simkit {

// Coarse, keyword-extracted description of a prompt. The mock classifier
// scores prompts through these features, which gives the tuning loop a
// learnable, fully deterministic signal.
enum class Role : std::uint8_t {
    none = 0,
    analyst,
    professional,
    artist,
    psychologist,
    critic,
    choreographer,
};

constexpr std::size_t kRoleCount = 7; // including none

struct PromptFeatures {
    Role role = Role::none;
    int specificity = 0;       // 0..3, count of visual-cue phrases
    bool asks_justification = false;
    bool label_list_present = false; // at least four target labels named

    bool operator==(const PromptFeatures&) const = default;
};

// Pure keyword extraction; total over arbitrary strings.
PromptFeatures extract_features(std::string_view prompt);

// Number of preference dimensions: one per non-none role, plus specificity,
// justification and label-list.
constexpr std::size_t kFeatureDims = (kRoleCount - 1) + 3;

std::array<double, kFeatureDims> feature_vector(const PromptFeatures& f);

struct UserProfile {
    std::string user_id;
    std::uint64_t seed = 0;
    double epsilon = 0.05; // response noise in [0, 0.5)
    std::array<double, kFeatureDims> preference{};
    // Row-stochastic off-diagonal matrix: given a wrong answer for true label
    // a, the probability of naming label b.
    std::array<std::array<double, kEmotionCount>, kEmotionCount> confusability{};

    // Derived deterministically from (user_id, seed).
    static UserProfile derive(const std::string& user_id, std::uint64_t seed,
                              double epsilon = 0.05);

    // In [0, 1]; 1 when the prompt hits every preferred feature.
    double match(const PromptFeatures& f) const;

    // The feature combination this profile rewards most.
    PromptFeatures preferred_features() const;
};

// Chance level of an eight-way classifier with no signal.
constexpr double kBaseCorrectRate = 1.0 / 8.0;

// P(correct | prompt) = base + (1 - base - epsilon) * match(prompt).
double correct_probability(const UserProfile& profile, const PromptFeatures& features);

// Prompt-writing mock LLM. Recognizes the two instruction shapes produced by
// the tuner (initial-generation and modification) and emits dash-prefixed
// prompt lists. Randomness is keyed by (seed, decode seed, instruction), so
// identical calls return identical text on any thread.
class MockTextGen : public TextGenBackend {
public:
    explicit MockTextGen(std::uint64_t seed, std::string model_id = "sim-promptwriter");

    BackendIdentity identity() const override;
    std::string generate(const std::string& instruction, const DecodeParams& decode) override;

private:
    std::uint64_t seed_;
    std::string model_id_;
};

// Preference-driven mock MLLM. The sample id encodes the ground-truth label;
// the answer is correct with probability correct_probability(), otherwise a
// confusable wrong label or, rarely, a non-target word.
class MockVisionClassify : public VisionClassifyBackend {
public:
    explicit MockVisionClassify(UserProfile profile, std::string model_id = "sim-classifier");

    BackendIdentity identity() const override;
    std::string classify(const std::string& image_ref, const std::string& prompt,
                         const DecodeParams& decode) override;

    const UserProfile& profile() const { return profile_; }

private:
    UserProfile profile_;
    std::string model_id_;
};

enum class DatasetShape {
    balanced,
    anger_scarce, // anger count reduced to ceil(size / 40)
};

// Deterministic synthetic samples for one profile; ids look like
// sim/<user>/<label>/<index> and double as the image reference.
std::vector<LabeledSample> make_synthetic_dataset(const UserProfile& profile, std::size_t size,
                                                  DatasetShape shape = DatasetShape::balanced);

// Text synthesis used by the mock LLM; exposed for tests that need a prompt
// with exact features. `variety` selects among wording variants.
std::string synthesize_prompt(const PromptFeatures& features, std::uint64_t variety);

} // namespace simkit
} // namespace vertune
