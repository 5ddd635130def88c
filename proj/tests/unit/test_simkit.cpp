#include <doctest.h>

#include "vertune/backend.hpp"
#include "vertune/errors.hpp"
#include "vertune/simkit.hpp"
#include "vertune/tuner.hpp"

#include <map>
#include <set>

using namespace vertune;
using namespace vertune::simkit;

namespace {

std::vector<Emotion> all_labels() {
    return {all_emotions().begin(), all_emotions().end()};
}

ScoredPrompt scored(std::string text, double acc, std::uint64_t seq) {
    ScoredPrompt p;
    p.text = std::move(text);
    p.accuracy = acc;
    p.created_seq = seq;
    return p;
}

} // namespace

TEST_CASE("prompt synthesis and feature extraction round-trip exactly") {
    for (int role = 0; role < static_cast<int>(kRoleCount); ++role) {
        for (int spec = 0; spec <= 3; ++spec) {
            for (int just = 0; just <= 1; ++just) {
                for (int list = 0; list <= 1; ++list) {
                    PromptFeatures f;
                    f.role = static_cast<Role>(role);
                    f.specificity = spec;
                    f.asks_justification = just == 1;
                    f.label_list_present = list == 1;
                    for (std::uint64_t variety : {0ull, 7ull, 23ull, 47ull}) {
                        std::string text = synthesize_prompt(f, variety);
                        CHECK(extract_features(text) == f);
                    }
                }
            }
        }
    }
}

TEST_CASE("feature extraction is total and tolerant of arbitrary text") {
    CHECK(extract_features("") == PromptFeatures{});
    PromptFeatures f = extract_features(
        "AS A PROFESSIONAL, explain the COLOR and the lighting and composition and body "
        "language of amusement, awe, contentment, excitement scenes");
    CHECK(f.role == Role::professional);
    CHECK(f.specificity == 3); // clamped
    CHECK(f.asks_justification);
    CHECK(f.label_list_present);
}

TEST_CASE("profiles derive deterministically from user id and seed") {
    UserProfile a = UserProfile::derive("u01", 42, 0.05);
    UserProfile b = UserProfile::derive("u01", 42, 0.05);
    CHECK(a.preference == b.preference);
    CHECK(a.confusability == b.confusability);

    UserProfile c = UserProfile::derive("u02", 42, 0.05);
    CHECK(a.preference != c.preference);

    // Confusability rows are stochastic over the other seven labels.
    for (Emotion truth : all_emotions()) {
        double row_sum = 0;
        for (Emotion other : all_emotions()) {
            double w = a.confusability[static_cast<std::size_t>(truth)]
                                      [static_cast<std::size_t>(other)];
            CHECK(w >= 0.0);
            if (truth == other) CHECK(w == 0.0);
            row_sum += w;
        }
        CHECK(row_sum == doctest::Approx(1.0));
    }

    CHECK_THROWS_AS(UserProfile::derive("u", 1, 0.5), InputError);
}

TEST_CASE("match is 1 on the preferred features and 0 on a blank prompt") {
    UserProfile profile = UserProfile::derive("u01", 42, 0.0);
    CHECK(profile.match(profile.preferred_features()) == doctest::Approx(1.0));
    CHECK(profile.match(PromptFeatures{}) == doctest::Approx(0.0));
    CHECK(correct_probability(profile, profile.preferred_features()) == doctest::Approx(1.0));
    CHECK(correct_probability(profile, PromptFeatures{}) == doctest::Approx(kBaseCorrectRate));
}

TEST_CASE("mock generator emits n distinct prompts for the initial instruction") {
    std::string instruction = render_init_template(6, all_labels());
    MockTextGen llm(7);
    DecodeParams decode;
    decode.temperature = 1.0;
    decode.seed = 7;

    std::string out = llm.generate(instruction, decode);
    std::vector<std::string> prompts = parse_prompt_list(out);
    REQUIRE(prompts.size() == 6);
    std::set<std::string> distinct(prompts.begin(), prompts.end());
    CHECK(distinct.size() == 6);

    // Frozen from the first run of this mock (seed 7, decode seed 7).
    CHECK(prompts[0] ==
          "You are a choreographer who reads feeling in movement. Name which emotion this "
          "image evokes in the viewer. Consider the facial expressions, the color palette, "
          "and the composition. Reply with a single word.");

    CHECK(llm.generate(instruction, decode) == out);

    DecodeParams other = decode;
    other.seed = 8;
    CHECK(llm.generate(instruction, other) != out);
}

TEST_CASE("mock generator biases modifications toward good-list features") {
    std::vector<ScoredPrompt> good = {
        scored("You are a professional in emotion assessment. Decide which emotion this image "
               "evokes in the viewer.",
               0.5, 1),
        scored("You are a professional in emotion assessment. Judge which emotion this image "
               "evokes in the viewer. Do not hedge.",
               0.467, 2),
        scored("You are a professional in emotion assessment. Identify which emotion this "
               "image evokes in the viewer. Keep your answer brief.",
               0.433, 3),
    };
    std::vector<ScoredPrompt> bad = {
        scored("Name which emotion this image evokes in the viewer.", 0.133, 4),
        scored("Assess which emotion this image evokes in the viewer.", 0.167, 5),
        scored("Judge which emotion this image evokes in the viewer. Do not hedge.", 0.2, 6),
    };
    std::string instruction = render_mod_template(good, bad, 5);

    MockTextGen llm(7);
    DecodeParams decode;
    decode.seed = 3;
    std::vector<std::string> prompts = parse_prompt_list(llm.generate(instruction, decode));
    REQUIRE(prompts.size() == 5);

    int professional = 0;
    for (const std::string& p : prompts) {
        if (extract_features(p).role == Role::professional) ++professional;
    }
    CHECK(professional >= 3);
}

TEST_CASE("mock generator rejects unknown instruction shapes") {
    MockTextGen llm(1);
    CHECK_THROWS_AS(llm.generate("write me a poem", {}), ProtocolError);
}

TEST_CASE("mock classifier is exact with full match and zero noise") {
    UserProfile profile = UserProfile::derive("u01", 42, 0.0);
    MockVisionClassify mllm(profile);
    std::string matched = synthesize_prompt(profile.preferred_features(), 1);
    std::vector<Emotion> labels = all_labels();

    for (const LabeledSample& s : make_synthetic_dataset(profile, 64)) {
        ParsedOutput out = parse_label(mllm.classify(s.image, matched, {}), labels);
        REQUIRE_FALSE(out.is_non_target());
        CHECK(*out.label == s.label);
    }
}

TEST_CASE("mock classifier hits chance level on a signal-free prompt") {
    UserProfile profile = UserProfile::derive("u03", 9, 0.05);
    MockVisionClassify mllm(profile);
    std::string blank = synthesize_prompt(PromptFeatures{}, 0);
    std::vector<Emotion> labels = all_labels();

    auto samples = make_synthetic_dataset(profile, 10000);
    int correct = 0;
    for (const LabeledSample& s : samples) {
        ParsedOutput out = parse_label(mllm.classify(s.image, blank, {}), labels);
        if (!out.is_non_target() && *out.label == s.label) ++correct;
    }
    double rate = static_cast<double>(correct) / static_cast<double>(samples.size());
    CHECK(rate == doctest::Approx(kBaseCorrectRate).epsilon(0.2)); // 0.125 +/- 0.025
}

TEST_CASE("a matched prompt beats a mismatched prompt by a wide margin") {
    UserProfile profile = UserProfile::derive("u05", 31, 0.1);
    MockVisionClassify mllm(profile);
    std::vector<Emotion> labels = all_labels();
    std::string matched = synthesize_prompt(profile.preferred_features(), 2);
    std::string mismatched = synthesize_prompt(PromptFeatures{}, 2);

    auto samples = make_synthetic_dataset(profile, 10000);
    int matched_correct = 0, mismatched_correct = 0;
    for (const LabeledSample& s : samples) {
        ParsedOutput a = parse_label(mllm.classify(s.image, matched, {}), labels);
        if (!a.is_non_target() && *a.label == s.label) ++matched_correct;
        ParsedOutput b = parse_label(mllm.classify(s.image, mismatched, {}), labels);
        if (!b.is_non_target() && *b.label == s.label) ++mismatched_correct;
    }
    double gap = static_cast<double>(matched_correct - mismatched_correct) /
                 static_cast<double>(samples.size());
    CHECK(gap >= 0.3);
}

TEST_CASE("mock classifier output is keyed, not sequence-dependent") {
    UserProfile profile = UserProfile::derive("u01", 42, 0.05);
    MockVisionClassify mllm(profile);
    std::string first = mllm.classify("sim/u01/fear/0003", "Judge the mood.", {});
    mllm.classify("sim/u01/awe/0001", "other call in between", {});
    std::string second = mllm.classify("sim/u01/fear/0003", "Judge the mood.", {});
    CHECK(first == second);

    // Frozen from the first run: profile (u01, seed 42), matched prompt.
    UserProfile clean = UserProfile::derive("u01", 42, 0.0);
    MockVisionClassify exact(clean);
    CHECK(exact.classify("sim/u01/fear/0003",
                         synthesize_prompt(clean.preferred_features(), 1), {}) ==
          "This picture points to fear.");
}

TEST_CASE("mock classifier rejects foreign or malformed sample ids") {
    UserProfile profile = UserProfile::derive("u01", 42, 0.05);
    MockVisionClassify mllm(profile);
    CHECK_THROWS_AS(mllm.classify("sim/u02/fear/0001", "p", {}), InputError);
    CHECK_THROWS_AS(mllm.classify("not-a-sample", "p", {}), InputError);
    CHECK_THROWS_AS(mllm.classify("sim/u01/happy/0001", "p", {}), InputError);
}

TEST_CASE("synthetic datasets are balanced, deterministic and sized") {
    UserProfile profile = UserProfile::derive("u01", 42, 0.05);
    auto samples = make_synthetic_dataset(profile, 80);
    REQUIRE(samples.size() == 80);
    std::map<Emotion, int> counts;
    for (const auto& s : samples) {
        counts[s.label] += 1;
        CHECK(s.user_id == "u01");
        CHECK(s.image == s.sample_id);
    }
    for (const auto& [label, n] : counts) CHECK(n == 10);

    auto again = make_synthetic_dataset(profile, 80);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        CHECK(samples[i].sample_id == again[i].sample_id);
    }

    CHECK_THROWS_AS(make_synthetic_dataset(profile, 7), InputError);
}

TEST_CASE("the scarce-anger shape caps anger at ceil(size/40)") {
    UserProfile profile = UserProfile::derive("u01", 42, 0.05);
    for (std::size_t size : {80ull, 100ull, 136ull}) {
        auto samples = make_synthetic_dataset(profile, size, DatasetShape::anger_scarce);
        REQUIRE(samples.size() == size);
        std::size_t anger = 0;
        for (const auto& s : samples) {
            if (s.label == Emotion::anger) ++anger;
        }
        CHECK(anger == (size + 39) / 40);
    }
}
