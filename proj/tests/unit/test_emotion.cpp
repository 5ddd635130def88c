#include <doctest.h>

#include "vertune/emotion.hpp"
#include "vertune/errors.hpp"

#include <algorithm>
#include <random>
#include <set>

using namespace vertune;

TEST_CASE("exactly eight distinct labels with stable names") {
    std::set<std::string> names;
    for (Emotion e : all_emotions()) {
        names.insert(std::string(emotion_name(e)));
        CHECK(emotion_from_name(emotion_name(e)) == e);
    }
    CHECK(names.size() == 8);
    CHECK(emotion_from_name("AWE") == Emotion::awe);
    CHECK_FALSE(emotion_from_name("happy").has_value());
}

TEST_CASE("wheel distance identity, adjacency and antipode") {
    EmotionWheel wheel = EmotionWheel::standard();
    const auto& order = wheel.order();

    CHECK(wheel.dist(Emotion::fear, Emotion::fear) == 0);
    for (std::size_t i = 0; i < order.size(); ++i) {
        CHECK(wheel.dist(order[i], order[(i + 1) % order.size()]) == 1);
        CHECK(wheel.dist(order[i], order[(i + 4) % order.size()]) == 4);
    }
}

TEST_CASE("wheel distance is a metric on the cycle") {
    EmotionWheel wheel = EmotionWheel::standard();
    for (Emotion a : all_emotions()) {
        for (Emotion b : all_emotions()) {
            CHECK(wheel.dist(a, b) == wheel.dist(b, a));
            CHECK(wheel.dist(a, b) >= 0);
            CHECK(wheel.dist(a, b) <= 4);
            CHECK((wheel.dist(a, b) == 0) == (a == b));
            for (Emotion c : all_emotions()) {
                CHECK(wheel.dist(a, c) <= wheel.dist(a, b) + wheel.dist(b, c));
            }
        }
    }
}

TEST_CASE("emotional weight follows the polarity rule") {
    EmotionWheel wheel = EmotionWheel::standard();

    CHECK(wheel.weight(Emotion::awe, Emotion::awe) == 1);
    // amusement..contentment: two steps apart on the default order, both positive
    CHECK(wheel.dist(Emotion::amusement, Emotion::contentment) == 2);
    CHECK(wheel.weight(Emotion::amusement, Emotion::contentment) == 3);
    // excitement..sadness: adjacent on the default order, opposite polarity
    CHECK(wheel.dist(Emotion::excitement, Emotion::sadness) == 1);
    CHECK(wheel.weight(Emotion::excitement, Emotion::sadness) == 5);

    for (Emotion a : all_emotions()) {
        for (Emotion b : all_emotions()) {
            int expected = wheel.same_polarity(a, b) ? 1 + wheel.dist(a, b)
                                                     : 4 + wheel.dist(a, b);
            CHECK(wheel.weight(a, b) == expected);
            if (a != b) CHECK(wheel.weight(a, b) >= 2);
        }
    }
}

TEST_CASE("same-polarity weight beats cross-polarity weight at equal distance") {
    EmotionWheel wheel = EmotionWheel::standard();
    for (Emotion a : all_emotions()) {
        for (Emotion b : all_emotions()) {
            for (Emotion c : all_emotions()) {
                for (Emotion d : all_emotions()) {
                    if (wheel.dist(a, b) != wheel.dist(c, d)) continue;
                    if (!wheel.same_polarity(a, b) || wheel.same_polarity(c, d)) continue;
                    CHECK(wheel.weight(a, b) < wheel.weight(c, d));
                }
            }
        }
    }
}

TEST_CASE("wheel validation rejects bad configurations") {
    std::vector<Emotion> order(all_emotions().begin(), all_emotions().end());
    std::vector<Emotion> positive = {Emotion::amusement, Emotion::awe, Emotion::contentment,
                                     Emotion::excitement};

    CHECK_THROWS_AS(EmotionWheel({Emotion::awe}, positive), ConfigError);

    std::vector<Emotion> repeated = order;
    repeated[1] = repeated[0];
    CHECK_THROWS_AS(EmotionWheel(repeated, positive), ConfigError);

    CHECK_THROWS_AS(EmotionWheel(order, positive, 1), ConfigError);
    CHECK_THROWS_AS(EmotionWheel(order, {}), ConfigError);
    CHECK_THROWS_AS(EmotionWheel(order, order), ConfigError);
}

TEST_CASE("a custom order changes distances but keeps the cycle structure") {
    // Alternating polarity arrangement.
    std::vector<Emotion> order = {Emotion::amusement, Emotion::anger,  Emotion::awe,
                                  Emotion::disgust,   Emotion::contentment, Emotion::fear,
                                  Emotion::excitement, Emotion::sadness};
    EmotionWheel wheel(order, {Emotion::amusement, Emotion::awe, Emotion::contentment,
                               Emotion::excitement});
    CHECK(wheel.dist(Emotion::amusement, Emotion::anger) == 1);
    CHECK(wheel.dist(Emotion::amusement, Emotion::contentment) == 4);
    CHECK(wheel.weight(Emotion::amusement, Emotion::anger) == 5);
    CHECK(wheel.weight(Emotion::amusement, Emotion::contentment) == 5);
}

TEST_CASE("parse_label picks the earliest whole-word label") {
    std::vector<Emotion> labels(all_emotions().begin(), all_emotions().end());

    ParsedOutput p1 = parse_label("The primary emotion is Awe, because of the cliffs.", labels);
    CHECK(p1.label == Emotion::awe);

    ParsedOutput p2 = parse_label("happy", labels);
    CHECK(p2.is_non_target());
    CHECK(p2.raw == "happy");

    ParsedOutput p3 = parse_label("fear mixed with excitement", labels);
    CHECK(p3.label == Emotion::fear);

    // "sad" is not "sadness"; synonyms are deliberately not mapped.
    CHECK(parse_label("sad", labels).is_non_target());
    CHECK(parse_label("this is awesome", labels).is_non_target());
    CHECK(parse_label("", labels).is_non_target());
    CHECK(parse_label("ANGER!", labels).label == Emotion::anger);
}

TEST_CASE("parse_label is case-insensitive and total") {
    std::vector<Emotion> labels(all_emotions().begin(), all_emotions().end());
    std::mt19937 rng(77);
    const std::string alphabet = "abc AWEfear ,;.!dis\tgust\nsadness happy";
    for (int trial = 0; trial < 500; ++trial) {
        std::string text;
        std::uniform_int_distribution<std::size_t> len(0, 60);
        std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
        std::size_t n = len(rng);
        for (std::size_t i = 0; i < n; ++i) text.push_back(alphabet[pick(rng)]);
        std::string upper = text;
        std::transform(upper.begin(), upper.end(), upper.begin(),
                       [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
        ParsedOutput a = parse_label(text, labels);
        ParsedOutput b = parse_label(upper, labels);
        CHECK(a.label == b.label);
    }
}

TEST_CASE("non-target output never compares equal to a label") {
    ParsedOutput nt = ParsedOutput::non_target("joyful");
    for (Emotion e : all_emotions()) {
        CHECK(nt.label != e);
    }
}
