#include "vertune/simkit.hpp"

#include "vertune/errors.hpp"
#include "vertune/hash.hpp"
#include "vertune/text.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace vertune {
namespace simkit {

namespace {

constexpr std::array<std::string_view, kRoleCount> kRoleTokens = {
    "", "analyst", "professional", "artist", "psychologist", "critic", "choreographer",
};

constexpr std::array<std::string_view, kRoleCount> kRolePhrases = {
    "",
    "You are a careful analyst of human reactions. ",
    "You are a professional in emotion assessment. ",
    "You are an artist with a sharp eye for mood. ",
    "You are a psychologist who studies affective responses. ",
    "You are a discerning critic of visual media. ",
    "You are a choreographer who reads feeling in movement. ",
};

constexpr std::array<std::string_view, 6> kCuePhrases = {
    "overall scene", "facial expression", "color", "composition", "lighting", "body language",
};

constexpr std::array<std::string_view, 4> kSpecClauses = {
    "",
    " Consider the overall scene.",
    " Consider the overall scene and the facial expressions.",
    " Consider the facial expressions, the color palette, and the composition.",
};

constexpr std::array<std::string_view, 6> kVerbs = {
    "Decide", "Determine", "Identify", "Judge", "Assess", "Name",
};

constexpr std::array<std::string_view, 8> kTails = {
    "",
    " Reply with a single word.",
    " Keep your answer brief.",
    " Do not hedge.",
    " Commit to one label.",
    " Answer in lowercase.",
    " Be decisive.",
    " Trust your first impression.",
};

constexpr std::string_view kJustificationClause = " Add a one-sentence justification.";

std::string label_list_clause() {
    std::string out = " Answer with exactly one of: ";
    bool first = true;
    for (Emotion e : all_emotions()) {
        if (!first) out += ", ";
        out += emotion_name(e);
        first = false;
    }
    out += ".";
    return out;
}

constexpr std::array<std::string_view, 5> kAnswerTemplates = {
    "The image mainly evokes {}.",
    "Overall this feels like {}.",
    "I would label this scene {}.",
    "This picture points to {}.",
    "The dominant emotion here is {}.",
};

constexpr std::array<std::string_view, 2> kNonTargetAnswers = {
    "This image feels happy overall.",
    "The mood here reads as sad.",
};

std::string fill_template(std::string_view tmpl, std::string_view value) {
    std::string out(tmpl);
    std::size_t pos = out.find("{}");
    out.replace(pos, 2, value);
    return out;
}

} // namespace

std::string synthesize_prompt(const PromptFeatures& features, std::uint64_t variety) {
    std::string text(kRolePhrases[static_cast<std::size_t>(features.role)]);
    text += kVerbs[variety % kVerbs.size()];
    text += " which emotion this image evokes in the viewer.";
    text += kSpecClauses[static_cast<std::size_t>(
        std::clamp(features.specificity, 0, 3))];
    if (features.asks_justification) text += kJustificationClause;
    if (features.label_list_present) text += label_list_clause();
    std::string_view tail = kTails[(variety / kVerbs.size()) % kTails.size()];
    text += tail;
    return text;
}

PromptFeatures extract_features(std::string_view prompt) {
    PromptFeatures f;
    std::string lowered = to_lower(prompt);
    std::vector<std::string> tokens = word_tokens(prompt);

    for (const std::string& token : tokens) {
        bool found = false;
        for (std::size_t r = 1; r < kRoleCount; ++r) {
            if (token == kRoleTokens[r]) {
                f.role = static_cast<Role>(r);
                found = true;
                break;
            }
        }
        if (found) break;
    }

    int cues = 0;
    for (std::string_view cue : kCuePhrases) {
        if (lowered.find(cue) != std::string::npos) ++cues;
    }
    f.specificity = std::min(cues, 3);

    f.asks_justification = lowered.find("justif") != std::string::npos ||
                           lowered.find("explain") != std::string::npos ||
                           lowered.find("reason") != std::string::npos;

    int labels_found = 0;
    for (Emotion e : all_emotions()) {
        std::string name(emotion_name(e));
        if (std::find(tokens.begin(), tokens.end(), name) != tokens.end()) ++labels_found;
    }
    f.label_list_present = labels_found >= 4;
    return f;
}

std::array<double, kFeatureDims> feature_vector(const PromptFeatures& f) {
    std::array<double, kFeatureDims> v{};
    if (f.role != Role::none) {
        v[static_cast<std::size_t>(f.role) - 1] = 1.0;
    }
    v[kRoleCount - 1] = std::clamp(f.specificity, 0, 3) / 3.0;
    v[kRoleCount] = f.asks_justification ? 1.0 : 0.0;
    v[kRoleCount + 1] = f.label_list_present ? 1.0 : 0.0;
    return v;
}

UserProfile UserProfile::derive(const std::string& user_id, std::uint64_t seed, double epsilon) {
    if (!(epsilon >= 0.0 && epsilon < 0.5)) {
        throw InputError("profile noise must lie in [0, 0.5)");
    }
    UserProfile p;
    p.user_id = user_id;
    p.seed = seed;
    p.epsilon = epsilon;

    KeyedRng rng(seed);
    rng.mix("profile").mix(user_id);

    std::size_t preferred_role = 1 + rng.next_below(kRoleCount - 1);
    p.preference.fill(0.0);
    p.preference[preferred_role - 1] = 0.9;
    p.preference[kRoleCount - 1] = 0.3 + 0.5 * rng.next_double(); // specificity
    p.preference[kRoleCount] = 0.1 + 0.6 * rng.next_double();     // justification
    p.preference[kRoleCount + 1] = 0.4 + 0.5 * rng.next_double(); // label list

    EmotionWheel wheel = EmotionWheel::standard();
    for (Emotion a : all_emotions()) {
        double row_sum = 0.0;
        std::array<double, kEmotionCount> row{};
        for (Emotion b : all_emotions()) {
            if (a == b) continue;
            double w = (1.0 / (1.0 + wheel.dist(a, b))) * (0.5 + rng.next_double());
            row[static_cast<std::size_t>(b)] = w;
            row_sum += w;
        }
        for (double& w : row) w /= row_sum;
        p.confusability[static_cast<std::size_t>(a)] = row;
    }
    return p;
}

double UserProfile::match(const PromptFeatures& f) const {
    std::array<double, kFeatureDims> v = feature_vector(f);
    double dot = 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < kFeatureDims; ++i) {
        dot += preference[i] * v[i];
        total += preference[i];
    }
    return total > 0.0 ? dot / total : 0.0;
}

PromptFeatures UserProfile::preferred_features() const {
    PromptFeatures f;
    for (std::size_t r = 0; r < kRoleCount - 1; ++r) {
        if (preference[r] > 0.0) {
            f.role = static_cast<Role>(r + 1);
            break;
        }
    }
    f.specificity = 3;
    f.asks_justification = true;
    f.label_list_present = true;
    return f;
}

double correct_probability(const UserProfile& profile, const PromptFeatures& features) {
    return kBaseCorrectRate +
           (1.0 - kBaseCorrectRate - profile.epsilon) * profile.match(features);
}

// --- mock LLM ---------------------------------------------------------------

MockTextGen::MockTextGen(std::uint64_t seed, std::string model_id)
    : seed_(seed), model_id_(std::move(model_id)) {}

BackendIdentity MockTextGen::identity() const { return {"sim", model_id_}; }

namespace {

struct ListedPrompt {
    std::string text;
    double accuracy = 0.0;
};

std::optional<int> parse_leading_int(std::string_view s) {
    int value = 0;
    std::size_t i = 0;
    while (i < s.size() && s[i] >= '0' && s[i] <= '9') {
        value = value * 10 + (s[i] - '0');
        ++i;
    }
    if (i == 0) return std::nullopt;
    return value;
}

std::optional<ListedPrompt> parse_listed_prompt(const std::string& line) {
    std::string stripped = trim(line);
    if (stripped.rfind("- \"", 0) != 0) return std::nullopt;
    constexpr std::string_view marker = "\" (accuracy: ";
    std::size_t marker_pos = stripped.rfind(marker);
    if (marker_pos == std::string::npos || marker_pos < 3) return std::nullopt;
    ListedPrompt p;
    p.text = stripped.substr(3, marker_pos - 3);
    p.accuracy = std::atof(stripped.c_str() + marker_pos + marker.size());
    return p;
}

struct ModInstruction {
    int t = 0;
    std::vector<ListedPrompt> good;
    std::vector<ListedPrompt> bad;
};

ModInstruction parse_mod_instruction(const std::string& instruction) {
    ModInstruction mod;
    constexpr std::string_view provide = "please provide ";
    std::size_t at = instruction.find(provide);
    if (at == std::string::npos) {
        throw ProtocolError("modification instruction lacks a prompt count");
    }
    auto t = parse_leading_int(std::string_view(instruction).substr(at + provide.size()));
    if (!t) throw ProtocolError("modification instruction lacks a prompt count");
    mod.t = *t;

    enum class Section { preamble, good, bad, done } section = Section::preamble;
    for (const std::string& line : split_lines(instruction)) {
        if (line.rfind("Top-", 0) == 0) {
            section = Section::good;
            continue;
        }
        if (line.rfind("Worst-", 0) == 0) {
            section = Section::bad;
            continue;
        }
        if (line.rfind("Here is the list of bad templates", 0) == 0) {
            section = Section::preamble;
            continue;
        }
        if (line.rfind("Here are my requirements", 0) == 0) {
            section = Section::done;
            continue;
        }
        auto p = parse_listed_prompt(line);
        if (!p) continue;
        if (section == Section::good) mod.good.push_back(std::move(*p));
        if (section == Section::bad) mod.bad.push_back(std::move(*p));
    }
    if (mod.good.empty()) {
        throw ProtocolError("modification instruction carries no good templates");
    }
    return mod;
}

std::string join_prompt_lines(const std::vector<std::string>& prompts) {
    std::string out;
    for (const std::string& p : prompts) {
        out += "- ";
        out += p;
        out += '\n';
    }
    return out;
}

} // namespace

std::string MockTextGen::generate(const std::string& instruction, const DecodeParams& decode) {
    std::uint64_t decode_seed = decode.seed.value_or(0);

    if (instruction.rfind("I have two lists of templates", 0) == 0) {
        ModInstruction mod = parse_mod_instruction(instruction);
        std::vector<PromptFeatures> good;
        good.reserve(mod.good.size());
        for (const ListedPrompt& p : mod.good) good.push_back(extract_features(p.text));

        std::vector<std::string> prompts;
        std::set<std::string> seen;
        for (int j = 0; j < mod.t; ++j) {
            for (std::uint64_t attempt = 0;; ++attempt) {
                KeyedRng rng(seed_);
                rng.mix("mod").mix(decode_seed).mix(instruction);
                rng.mix(static_cast<std::uint64_t>(j)).mix(attempt);

                // Recombine: every coordinate copies a good-list prompt,
                // except at most one explored coordinate.
                int explore = rng.next_bool(0.35) ? -1 : static_cast<int>(rng.next_below(4));
                PromptFeatures f;
                auto donor = [&]() -> const PromptFeatures& {
                    return good[rng.next_below(good.size())];
                };
                f.role = (explore == 0) ? static_cast<Role>(rng.next_below(kRoleCount))
                                        : donor().role;
                f.specificity = (explore == 1) ? static_cast<int>(rng.next_below(4))
                                               : donor().specificity;
                f.asks_justification =
                    (explore == 2) ? rng.next_bool(0.5) : donor().asks_justification;
                f.label_list_present =
                    (explore == 3) ? rng.next_bool(0.75) : donor().label_list_present;

                std::string text = synthesize_prompt(f, rng.next_u64());
                if (seen.insert(normalize_text(text)).second) {
                    prompts.push_back(std::move(text));
                    break;
                }
            }
        }
        return join_prompt_lines(prompts);
    }

    constexpr std::string_view init_prefix = "Please provide me with ";
    if (instruction.rfind(init_prefix, 0) == 0) {
        auto n = parse_leading_int(
            std::string_view(instruction).substr(init_prefix.size()));
        if (!n || *n < 1) {
            throw ProtocolError("initial instruction lacks a prompt count");
        }
        std::vector<std::string> prompts;
        std::set<std::string> seen;
        for (int j = 0; j < *n; ++j) {
            for (std::uint64_t attempt = 0;; ++attempt) {
                KeyedRng rng(seed_);
                rng.mix("init").mix(decode_seed).mix(instruction);
                rng.mix(static_cast<std::uint64_t>(j)).mix(attempt);

                PromptFeatures f;
                f.role = static_cast<Role>(rng.next_below(kRoleCount));
                f.specificity = static_cast<int>(rng.next_below(4));
                f.asks_justification = rng.next_bool(0.5);
                f.label_list_present = rng.next_bool(0.75);

                std::string text = synthesize_prompt(f, rng.next_u64());
                if (seen.insert(normalize_text(text)).second) {
                    prompts.push_back(std::move(text));
                    break;
                }
            }
        }
        return join_prompt_lines(prompts);
    }

    throw ProtocolError("mock generator got an instruction of unknown shape");
}

// --- mock MLLM ---------------------------------------------------------------

MockVisionClassify::MockVisionClassify(UserProfile profile, std::string model_id)
    : profile_(std::move(profile)), model_id_(std::move(model_id)) {}

BackendIdentity MockVisionClassify::identity() const { return {"sim", model_id_}; }

namespace {

struct SyntheticId {
    std::string user_id;
    Emotion label;
};

std::optional<SyntheticId> parse_synthetic_id(const std::string& id) {
    if (id.rfind("sim/", 0) != 0) return std::nullopt;
    std::size_t user_end = id.find('/', 4);
    if (user_end == std::string::npos) return std::nullopt;
    std::size_t label_end = id.find('/', user_end + 1);
    if (label_end == std::string::npos) return std::nullopt;
    auto label = emotion_from_name(id.substr(user_end + 1, label_end - user_end - 1));
    if (!label) return std::nullopt;
    return SyntheticId{id.substr(4, user_end - 4), *label};
}

} // namespace

std::string MockVisionClassify::classify(const std::string& image_ref,
                                         const std::string& prompt,
                                         const DecodeParams& decode) {
    (void)decode; // already deterministic per key
    auto parsed = parse_synthetic_id(image_ref);
    if (!parsed || parsed->user_id != profile_.user_id) {
        throw InputError("unknown sample '" + image_ref + "' for user '" + profile_.user_id +
                         "'");
    }
    Emotion truth = parsed->label;

    double p_correct = correct_probability(profile_, extract_features(prompt));

    KeyedRng rng(profile_.seed);
    rng.mix("classify").mix(image_ref).mix(prompt);

    Emotion answer = truth;
    bool non_target = false;
    if (!rng.next_bool(p_correct)) {
        if (rng.next_bool(0.05)) {
            non_target = true;
        } else {
            const auto& row = profile_.confusability[static_cast<std::size_t>(truth)];
            double u = rng.next_double();
            double cum = 0.0;
            answer = truth;
            for (Emotion b : all_emotions()) {
                double w = row[static_cast<std::size_t>(b)];
                if (w <= 0.0) continue;
                cum += w;
                if (u < cum) {
                    answer = b;
                    break;
                }
                answer = b; // guards against floating-point undershoot
            }
        }
    }

    if (non_target) {
        return std::string(kNonTargetAnswers[rng.next_below(kNonTargetAnswers.size())]);
    }
    std::string_view tmpl = kAnswerTemplates[rng.next_below(kAnswerTemplates.size())];
    return fill_template(tmpl, emotion_name(answer));
}

std::vector<LabeledSample> make_synthetic_dataset(const UserProfile& profile, std::size_t size,
                                                  DatasetShape shape) {
    if (size < kEmotionCount) {
        throw InputError("synthetic dataset needs at least " + std::to_string(kEmotionCount) +
                         " samples, got " + std::to_string(size));
    }
    std::array<std::size_t, kEmotionCount> counts{};
    if (shape == DatasetShape::balanced) {
        std::size_t base = size / kEmotionCount;
        std::size_t rem = size % kEmotionCount;
        for (std::size_t i = 0; i < kEmotionCount; ++i) counts[i] = base + (i < rem ? 1 : 0);
    } else {
        std::size_t anger = (size + 39) / 40;
        std::size_t rest = size - anger;
        std::size_t others = kEmotionCount - 1;
        std::size_t base = rest / others;
        std::size_t rem = rest % others;
        std::size_t j = 0;
        for (std::size_t i = 0; i < kEmotionCount; ++i) {
            if (static_cast<Emotion>(i) == Emotion::anger) {
                counts[i] = anger;
            } else {
                counts[i] = base + (j < rem ? 1 : 0);
                ++j;
            }
        }
    }

    std::vector<LabeledSample> samples;
    samples.reserve(size);
    for (std::size_t i = 0; i < kEmotionCount; ++i) {
        Emotion label = static_cast<Emotion>(i);
        for (std::size_t k = 0; k < counts[i]; ++k) {
            char idx[24];
            std::snprintf(idx, sizeof(idx), "%04zu", k);
            std::string id = "sim/" + profile.user_id + "/" + std::string(emotion_name(label)) +
                             "/" + idx;
            samples.push_back(LabeledSample{id, id, profile.user_id, label});
        }
    }
    return samples;
}

} // namespace simkit
} // namespace vertune
