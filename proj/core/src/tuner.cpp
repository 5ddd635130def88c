#include "vertune/tuner.hpp"

#include "vertune/errors.hpp"
#include "vertune/hash.hpp"
#include "vertune/text.hpp"

#include <algorithm>
#include <future>
#include <set>
#include <thread>

#include <json.hpp>

namespace vertune {

void TuningConfig::validate() const {
    auto positive = [](int v, const char* name) {
        if (v < 1) {
            throw ConfigError(std::string(name) + " must be at least 1, got " +
                              std::to_string(v));
        }
    };
    positive(n_initial, "n_initial");
    positive(t_modified, "t_modified");
    positive(k_select, "k_select");
    positive(i1, "i1");
    positive(i2, "i2");
    positive(i3, "i3");
    positive(h_vote, "h_vote");
    positive(parallelism, "parallelism");
}

bool PromptPool::insert(const ScoredPrompt& prompt) {
    std::string norm = normalize_text(prompt.text);
    if (index_by_norm_.count(norm)) return false;
    index_by_norm_.emplace(std::move(norm), entries_.size());
    entries_.push_back(prompt);
    return true;
}

bool PromptPool::contains_text(const std::string& text) const {
    return index_by_norm_.count(normalize_text(text)) != 0;
}

std::vector<ScoredPrompt> PromptPool::ranked() const {
    std::vector<ScoredPrompt> out = entries_;
    std::stable_sort(out.begin(), out.end(), [](const ScoredPrompt& a, const ScoredPrompt& b) {
        if (a.accuracy != b.accuracy) return a.accuracy > b.accuracy;
        return a.created_seq < b.created_seq;
    });
    return out;
}

Extremes select_extremes(const PromptPool& pool, int k) {
    if (pool.empty()) {
        throw LogicError("select_extremes called on an empty pool");
    }
    std::size_t k_eff = std::min<std::size_t>(static_cast<std::size_t>(std::max(k, 1)),
                                              pool.size());
    Extremes out;
    std::vector<ScoredPrompt> desc = pool.ranked();
    out.best.assign(desc.begin(), desc.begin() + static_cast<std::ptrdiff_t>(k_eff));

    std::vector<ScoredPrompt> asc = pool.entries();
    std::stable_sort(asc.begin(), asc.end(), [](const ScoredPrompt& a, const ScoredPrompt& b) {
        if (a.accuracy != b.accuracy) return a.accuracy < b.accuracy;
        return a.created_seq < b.created_seq;
    });
    out.worst.assign(asc.begin(), asc.begin() + static_cast<std::ptrdiff_t>(k_eff));
    return out;
}

std::string render_init_template(int n, const std::vector<Emotion>& labels) {
    if (n < 1) throw PreconditionError("initial prompt count must be at least 1");
    if (labels.empty()) throw PreconditionError("label set must not be empty");
    std::string label_list = "{";
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (i) label_list += ", ";
        label_list += emotion_name(labels[i]);
    }
    label_list += "}";

    std::string out;
    out += "Please provide me with " + std::to_string(n) +
           " diverse prompts that are suitable for input into the MLLM. The prompts should"
           " be diverse, such as detailed and straightforward, and should give the LLM a"
           " role. The prompts should make the LLM classify the emotions that people evoke"
           " when they see the image. The emotion label should prompt the LLM to choose one"
           " of the following emotions: " +
           label_list + ".\n";
    out += "Here are my requirements:\n";
    out += " - Please only reply with the template.\n";
    out += " - Each template should start with '-' in a separate line.\n";
    out += " - Ensure that the output is in a clear and consistent format.\n";
    return out;
}

namespace {

void render_prompt_lines(std::string& out, const std::vector<ScoredPrompt>& prompts) {
    for (const ScoredPrompt& p : prompts) {
        out += "- \"" + p.text + "\" (accuracy: " + format_fixed(p.accuracy, 3) + ")\n";
    }
}

} // namespace

std::string render_mod_template(const std::vector<ScoredPrompt>& best,
                                const std::vector<ScoredPrompt>& worst, int t) {
    if (best.empty() || worst.empty()) {
        throw PreconditionError("both prompt lists must be non-empty");
    }
    std::string out;
    out += "I have two lists of templates: one with good templates and the other with bad"
           " templates. Based on the characteristics that make a template good or bad,"
           " please provide " +
           std::to_string(t) +
           " better templates. Here is the list of good templates with their accuracies:\n";
    out += "Top-" + std::to_string(best.size()) + ":\n";
    render_prompt_lines(out, best);
    out += "Here is the list of bad templates with their accuracies:\n";
    out += "Worst-" + std::to_string(worst.size()) + ":\n";
    render_prompt_lines(out, worst);
    out += "Here are my requirements:\n";
    out += " - Please only reply with the template.\n";
    out += " - Each template should start with '-' in a separate line.\n";
    out += " - Ensure that the output is in a clear and consistent format.\n";
    return out;
}

double score_prompt(const std::string& prompt, const std::vector<LabeledSample>& train,
                    const std::vector<Emotion>& labels, TuningContext& ctx, int parallelism) {
    if (train.empty()) {
        throw PreconditionError("score_prompt requires a non-empty training set");
    }
    DecodeParams decode;
    decode.temperature = ctx.mllm_temperature;
    decode.max_tokens = ctx.mllm_max_tokens;

    std::vector<char> correct(train.size(), 0);
    auto evaluate_range = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const LabeledSample& sample = train[i];
            std::string raw = classify_image(*ctx.mllm, sample.image, prompt, decode,
                                             ctx.cache, ctx.mllm_retry, nullptr);
            ParsedOutput parsed = parse_label(raw, labels);
            correct[i] = (!parsed.is_non_target() && *parsed.label == sample.label) ? 1 : 0;
        }
    };

    int workers = std::max(1, parallelism);
    if (workers == 1 || train.size() < 2) {
        try {
            evaluate_range(0, train.size());
        } catch (const Error& e) {
            throw ScoringError(std::string("scoring failed: ") + e.what());
        }
    } else {
        workers = std::min<int>(workers, static_cast<int>(train.size()));
        std::vector<std::future<void>> futures;
        std::size_t chunk = (train.size() + workers - 1) / workers;
        for (int w = 0; w < workers; ++w) {
            std::size_t begin = static_cast<std::size_t>(w) * chunk;
            std::size_t end = std::min(train.size(), begin + chunk);
            if (begin >= end) break;
            futures.push_back(std::async(std::launch::async, evaluate_range, begin, end));
        }
        std::exception_ptr first_error;
        for (auto& f : futures) {
            try {
                f.get();
            } catch (...) {
                if (!first_error) first_error = std::current_exception();
            }
        }
        if (first_error) {
            try {
                std::rethrow_exception(first_error);
            } catch (const Error& e) {
                throw ScoringError(std::string("scoring failed: ") + e.what());
            }
        }
    }

    std::size_t hits = 0;
    for (char c : correct) hits += static_cast<std::size_t>(c);
    return static_cast<double>(hits) / static_cast<double>(train.size());
}

std::uint64_t train_set_digest(const std::vector<LabeledSample>& train) {
    std::uint64_t h = fnv1a64("train");
    for (const LabeledSample& s : train) {
        h = fnv1a64(s.sample_id, h);
        h = fnv1a64("\x1f", h);
        h = fnv1a64(emotion_name(s.label), h);
        h = fnv1a64("\x1e", h);
    }
    return h;
}

namespace {

const char* origin_name(PromptOrigin origin) {
    return origin == PromptOrigin::initial ? "initial" : "modified";
}

PromptOrigin origin_from_name(const std::string& name) {
    return name == "initial" ? PromptOrigin::initial : PromptOrigin::modified;
}

std::uint64_t derive_decode_seed(std::uint64_t run_seed, const char* stage, int i3, int i2,
                                 int i1, int attempt) {
    KeyedRng rng(run_seed);
    rng.mix(stage)
        .mix(static_cast<std::uint64_t>(i3))
        .mix(static_cast<std::uint64_t>(i2))
        .mix(static_cast<std::uint64_t>(i1))
        .mix(static_cast<std::uint64_t>(attempt));
    return rng.next_u64();
}

std::vector<std::string> truncate_prompts(std::vector<std::string> prompts, int limit) {
    if (static_cast<int>(prompts.size()) > limit) {
        prompts.resize(static_cast<std::size_t>(limit));
    }
    return prompts;
}

// Initial prompt extraction with one re-generation attempt; proceeds with a
// partial yield as long as at least one prompt was obtained.
std::vector<std::string> generate_initial_prompts(const TuningConfig& config,
                                                  const std::vector<Emotion>& labels,
                                                  TuningContext& ctx, int i3) {
    std::string instruction = render_init_template(config.n_initial, labels);
    std::vector<std::string> collected;
    std::set<std::string> seen;
    std::string last_error = "no prompts extracted";
    for (int attempt = 1; attempt <= 2; ++attempt) {
        DecodeParams decode;
        decode.temperature = ctx.llm_temperature;
        decode.max_tokens = ctx.llm_max_tokens;
        decode.seed = derive_decode_seed(config.seed, "gen-init", i3, 0, 0, attempt);
        std::string raw = generate_text(*ctx.llm, instruction, decode, ctx.llm_retry, ctx.journal);
        try {
            for (std::string& text : parse_prompt_list(raw)) {
                if (seen.insert(normalize_text(text)).second) {
                    collected.push_back(std::move(text));
                }
            }
        } catch (const ExtractionError& e) {
            last_error = e.what();
        }
        if (static_cast<int>(collected.size()) >= config.n_initial) break;
    }
    if (collected.empty()) {
        throw TuningSetupError("initial prompt generation yielded nothing after a retry: " +
                               last_error);
    }
    return truncate_prompts(std::move(collected), config.n_initial);
}

std::vector<std::string> generate_modified_prompts(const TuningConfig& config,
                                                   const Extremes& extremes,
                                                   TuningContext& ctx, int i3, int i2, int i1) {
    std::string instruction =
        render_mod_template(extremes.best, extremes.worst, config.t_modified);
    std::string last_error;
    for (int attempt = 1; attempt <= 2; ++attempt) {
        DecodeParams decode;
        decode.temperature = ctx.llm_temperature;
        decode.max_tokens = ctx.llm_max_tokens;
        decode.seed = derive_decode_seed(config.seed, "gen-mod", i3, i2, i1, attempt);
        std::string raw = generate_text(*ctx.llm, instruction, decode, ctx.llm_retry, ctx.journal);
        try {
            return truncate_prompts(parse_prompt_list(raw), config.t_modified);
        } catch (const ExtractionError& e) {
            last_error = e.what();
        }
    }
    throw ExtractionError("modified prompt extraction failed twice: " + last_error);
}

nlohmann::json prompt_to_json(const ScoredPrompt& p) {
    return {
        {"seq", p.created_seq},
        {"text", p.text},
        {"accuracy", p.accuracy},
        {"i3", p.lineage.i3},
        {"i2", p.lineage.i2},
        {"i1", p.lineage.i1},
        {"origin", origin_name(p.lineage.origin)},
    };
}

ScoredPrompt prompt_from_json(const nlohmann::json& j) {
    ScoredPrompt p;
    p.created_seq = j.at("seq").get<std::uint64_t>();
    p.text = j.at("text").get<std::string>();
    p.accuracy = j.at("accuracy").get<double>();
    p.lineage.i3 = j.at("i3").get<int>();
    p.lineage.i2 = j.at("i2").get<int>();
    p.lineage.i1 = j.at("i1").get<int>();
    p.lineage.origin = origin_from_name(j.at("origin").get<std::string>());
    return p;
}

class TuningEngine {
public:
    TuningEngine(const TuningConfig& config, const std::vector<LabeledSample>& train,
                 const std::vector<Emotion>& labels, TuningContext& ctx)
        : config_(config),
          train_(train),
          labels_(labels),
          ctx_(ctx),
          cursor_(ctx.journal ? ctx.journal->replayed() : empty_events_) {}

    PromptPool run() {
        config_.validate();
        if (train_.empty()) {
            throw PreconditionError("run_tuning requires a non-empty training set");
        }
        if (!ctx_.llm || !ctx_.mllm) {
            throw PreconditionError("run_tuning requires both backends");
        }
        ensure_run_started();

        PromptPool all;
        for (int i3 = 1; i3 <= config_.i3; ++i3) {
            std::vector<std::string> init_texts = step_init(i3);
            std::vector<ScoredPrompt> init_scored;
            init_scored.reserve(init_texts.size());
            for (const std::string& text : init_texts) {
                init_scored.push_back(
                    intern_scored(text, Lineage{i3, 0, 0, PromptOrigin::initial}));
            }
            for (int i2 = 1; i2 <= config_.i2; ++i2) {
                PromptPool rank;
                for (const ScoredPrompt& p : init_scored) rank.insert(p);
                for (int i1 = 1; i1 <= config_.i1; ++i1) {
                    Extremes extremes = select_extremes(rank, config_.k_select);
                    auto mod_texts = step_mod(i3, i2, i1, extremes);
                    if (mod_texts) {
                        for (const std::string& text : *mod_texts) {
                            rank.insert(intern_scored(
                                text, Lineage{i3, i2, i1, PromptOrigin::modified}));
                        }
                    }
                    finish_iteration(i3, i2, i1, rank);
                }
                for (const ScoredPrompt& p : rank.entries()) all.insert(p);
                merge_rank(i3, i2, all);
            }
        }
        finish_tuning(all);
        return all;
    }

private:
    void ensure_run_started() {
        nlohmann::json fingerprint = run_fingerprint();
        if (const JournalEvent* ev = cursor_.take({"run_started"})) {
            if (ev->payload.value("fingerprint", nlohmann::json()) != fingerprint) {
                throw JournalError(
                    "journal belongs to a different run configuration; refusing to resume");
            }
            return;
        }
        if (ctx_.journal) {
            ctx_.journal->append("run_started",
                                 {{"schema", 1}, {"fingerprint", fingerprint}});
        }
    }

    nlohmann::json run_fingerprint() const {
        nlohmann::json label_names = nlohmann::json::array();
        for (Emotion e : labels_) label_names.push_back(std::string(emotion_name(e)));
        BackendIdentity llm_id = ctx_.llm->identity();
        BackendIdentity mllm_id = ctx_.mllm->identity();
        return {
            {"n_initial", config_.n_initial},
            {"t_modified", config_.t_modified},
            {"k_select", config_.k_select},
            {"i1", config_.i1},
            {"i2", config_.i2},
            {"i3", config_.i3},
            {"h_vote", config_.h_vote},
            {"seed", config_.seed},
            {"labels", label_names},
            {"llm", llm_id.backend_id + "/" + llm_id.model_id},
            {"mllm", mllm_id.backend_id + "/" + mllm_id.model_id},
            {"llm_temperature", ctx_.llm_temperature},
            {"mllm_temperature", ctx_.mllm_temperature},
            {"train_digest", to_hex(train_set_digest(train_))},
        };
    }

    std::vector<std::string> step_init(int i3) {
        if (const JournalEvent* ev = cursor_.take({"init_prompts_generated"})) {
            if (ev->payload.at("i3").get<int>() != i3) {
                throw JournalError("journal diverges: unexpected restart index in event " +
                                   std::to_string(ev->index));
            }
            return ev->payload.at("prompts").get<std::vector<std::string>>();
        }
        std::vector<std::string> texts =
            generate_initial_prompts(config_, labels_, ctx_, i3);
        if (ctx_.journal) {
            ctx_.journal->append("init_prompts_generated", {{"i3", i3}, {"prompts", texts}});
        }
        return texts;
    }

    std::optional<std::vector<std::string>> step_mod(int i3, int i2, int i1,
                                                     const Extremes& extremes) {
        if (const JournalEvent* ev =
                cursor_.take({"mod_prompts_generated", "mod_generation_failed"})) {
            verify_indices(*ev, i3, i2, i1);
            if (ev->kind == "mod_generation_failed") return std::nullopt;
            return ev->payload.at("prompts").get<std::vector<std::string>>();
        }
        try {
            std::vector<std::string> texts =
                generate_modified_prompts(config_, extremes, ctx_, i3, i2, i1);
            if (ctx_.journal) {
                ctx_.journal->append(
                    "mod_prompts_generated",
                    {{"i3", i3}, {"i2", i2}, {"i1", i1}, {"prompts", texts}});
            }
            return texts;
        } catch (const ExtractionError& e) {
            if (ctx_.journal) {
                ctx_.journal->append(
                    "mod_generation_failed",
                    {{"i3", i3}, {"i2", i2}, {"i1", i1}, {"error", e.what()}});
                ctx_.journal->append(
                    "warning",
                    {{"message", std::string("modification iteration skipped: ") + e.what()}});
            }
            return std::nullopt;
        }
    }

    ScoredPrompt intern_scored(const std::string& text, const Lineage& lineage) {
        std::string norm = normalize_text(text);
        auto it = interned_.find(norm);
        if (it != interned_.end()) return it->second;

        ScoredPrompt prompt;
        if (const JournalEvent* ev = cursor_.take({"prompt_scored"})) {
            prompt = prompt_from_json(ev->payload);
            if (normalize_text(prompt.text) != norm) {
                throw JournalError("journal diverges: scored prompt mismatch at event " +
                                   std::to_string(ev->index));
            }
            next_seq_ = std::max(next_seq_, prompt.created_seq + 1);
        } else {
            prompt.text = text;
            prompt.accuracy =
                score_prompt(text, train_, labels_, ctx_, config_.parallelism);
            prompt.lineage = lineage;
            prompt.created_seq = next_seq_++;
            if (ctx_.journal) {
                ctx_.journal->append("prompt_scored", prompt_to_json(prompt));
            }
        }
        interned_.emplace(std::move(norm), prompt);
        return prompt;
    }

    void finish_iteration(int i3, int i2, int i1, const PromptPool& rank) {
        double best = 0.0;
        for (const ScoredPrompt& p : rank.entries()) best = std::max(best, p.accuracy);
        if (const JournalEvent* ev = cursor_.take({"iteration_finished"})) {
            verify_indices(*ev, i3, i2, i1);
            if (ev->payload.at("pool_size").get<std::size_t>() != rank.size()) {
                throw JournalError("journal diverges: ranked pool size mismatch at event " +
                                   std::to_string(ev->index));
            }
            return;
        }
        if (ctx_.journal) {
            ctx_.journal->append("iteration_finished", {{"i3", i3},
                                                        {"i2", i2},
                                                        {"i1", i1},
                                                        {"pool_size", rank.size()},
                                                        {"best_accuracy", best}});
        }
    }

    void merge_rank(int i3, int i2, const PromptPool& all) {
        if (const JournalEvent* ev = cursor_.take({"rank_merged"})) {
            if (ev->payload.at("i3").get<int>() != i3 ||
                ev->payload.at("i2").get<int>() != i2 ||
                ev->payload.at("pall_size").get<std::size_t>() != all.size()) {
                throw JournalError("journal diverges: pool merge mismatch at event " +
                                   std::to_string(ev->index));
            }
            return;
        }
        if (ctx_.journal) {
            ctx_.journal->append("rank_merged",
                                 {{"i3", i3}, {"i2", i2}, {"pall_size", all.size()}});
        }
    }

    void finish_tuning(const PromptPool& all) {
        if (const JournalEvent* ev = cursor_.take({"tuning_finished"})) {
            if (ev->payload.at("pall_size").get<std::size_t>() != all.size()) {
                throw JournalError("journal diverges: final pool size mismatch at event " +
                                   std::to_string(ev->index));
            }
            return;
        }
        if (ctx_.journal) {
            nlohmann::json prompts = nlohmann::json::array();
            for (const ScoredPrompt& p : all.entries()) prompts.push_back(prompt_to_json(p));
            ctx_.journal->append("tuning_finished",
                                 {{"pall_size", all.size()}, {"prompts", prompts}});
        }
    }

    static void verify_indices(const JournalEvent& ev, int i3, int i2, int i1) {
        if (ev.payload.at("i3").get<int>() != i3 || ev.payload.at("i2").get<int>() != i2 ||
            ev.payload.at("i1").get<int>() != i1) {
            throw JournalError("journal diverges: loop indices mismatch at event " +
                               std::to_string(ev.index));
        }
    }

    TuningConfig config_;
    const std::vector<LabeledSample>& train_;
    const std::vector<Emotion>& labels_;
    TuningContext& ctx_;
    JournalCursor cursor_;
    std::map<std::string, ScoredPrompt> interned_;
    std::uint64_t next_seq_ = 1;
    static const std::vector<JournalEvent> empty_events_;
};

const std::vector<JournalEvent> TuningEngine::empty_events_{};

} // namespace

PromptPool run_tuning(const TuningConfig& config, const std::vector<LabeledSample>& train,
                      const std::vector<Emotion>& labels, TuningContext& ctx) {
    TuningEngine engine(config, train, labels, ctx);
    return engine.run();
}

bool journal_has_finished_tuning(const std::vector<JournalEvent>& events) {
    for (const JournalEvent& ev : events) {
        if (ev.kind == "tuning_finished") return true;
    }
    return false;
}

PromptPool pool_from_journal(const std::vector<JournalEvent>& events) {
    // A finished run records the full pool; prefer that exact listing.
    for (const JournalEvent& ev : events) {
        if (ev.kind == "tuning_finished") {
            PromptPool pool;
            for (const nlohmann::json& j : ev.payload.at("prompts")) {
                pool.insert(prompt_from_json(j));
            }
            return pool;
        }
    }

    // Partial journal: fold the event stream the way the engine built it.
    std::map<std::string, ScoredPrompt> interned;
    std::vector<std::string> current_init;
    std::vector<std::string> current_rank;
    std::set<std::string> rank_set;
    PromptPool all;

    auto reset_rank = [&] {
        current_rank = current_init;
        rank_set = std::set<std::string>(current_init.begin(), current_init.end());
    };

    for (const JournalEvent& ev : events) {
        if (ev.kind == "prompt_scored") {
            ScoredPrompt p = prompt_from_json(ev.payload);
            interned.emplace(normalize_text(p.text), std::move(p));
        } else if (ev.kind == "init_prompts_generated") {
            current_init.clear();
            for (const auto& t : ev.payload.at("prompts")) {
                current_init.push_back(normalize_text(t.get<std::string>()));
            }
            reset_rank();
        } else if (ev.kind == "mod_prompts_generated") {
            for (const auto& t : ev.payload.at("prompts")) {
                std::string norm = normalize_text(t.get<std::string>());
                if (rank_set.insert(norm).second) current_rank.push_back(std::move(norm));
            }
        } else if (ev.kind == "rank_merged") {
            for (const std::string& norm : current_rank) {
                auto it = interned.find(norm);
                if (it != interned.end()) all.insert(it->second);
            }
            reset_rank();
        }
    }
    return all;
}

} // namespace vertune
