#include "vertune/inference.hpp"

#include "vertune/errors.hpp"
#include "vertune/hash.hpp"
#include "vertune/text.hpp"

#include <algorithm>
#include <map>

#include <json.hpp>

namespace vertune {

std::vector<ScoredPrompt> select_optimal_prompts(const PromptPool& pool, int h,
                                                 Journal* journal) {
    if (pool.empty()) {
        throw InferenceSetupError("prompt pool is empty; run tuning first");
    }
    if (h < 1) {
        throw PreconditionError("prompt count for voting must be at least 1");
    }
    std::vector<ScoredPrompt> ranked = pool.ranked();
    std::size_t h_eff = std::min<std::size_t>(static_cast<std::size_t>(h), ranked.size());
    if (h_eff < static_cast<std::size_t>(h) && journal) {
        journal->append("warning",
                        {{"message", "pool holds only " + std::to_string(ranked.size()) +
                                         " prompts; voting over " + std::to_string(h_eff) +
                                         " instead of " + std::to_string(h)}});
    }
    ranked.resize(h_eff);
    return ranked;
}

std::optional<Emotion> majority_vote(const std::vector<ParsedOutput>& results) {
    if (results.empty()) {
        throw LogicError("majority_vote needs at least one result");
    }
    std::map<Emotion, int> counts;
    std::map<Emotion, std::size_t> earliest;
    for (std::size_t i = 0; i < results.size(); ++i) {
        if (results[i].is_non_target()) continue; // abstention, not a ninth candidate
        Emotion label = *results[i].label;
        if (counts.emplace(label, 0).second) earliest.emplace(label, i);
        counts[label] += 1;
    }
    if (counts.empty()) return std::nullopt;
    std::optional<Emotion> winner;
    for (const auto& [label, count] : counts) {
        if (!winner) {
            winner = label;
            continue;
        }
        int best_count = counts[*winner];
        if (count > best_count ||
            (count == best_count && earliest[label] < earliest[*winner])) {
            winner = label;
        }
    }
    return winner;
}

namespace {

nlohmann::json label_to_json(const std::optional<Emotion>& label) {
    if (!label) return nullptr;
    return std::string(emotion_name(*label));
}

std::optional<Emotion> label_from_json(const nlohmann::json& j) {
    if (j.is_null()) return std::nullopt;
    return emotion_from_name(j.get<std::string>());
}

// Replays or extends one journaled inference block. A block is opened by an
// inference_started event whose sample digest identifies the request.
class InferenceSession {
public:
    InferenceSession(const std::vector<ScoredPrompt>& selected,
                     const std::vector<Emotion>& labels, TuningContext& ctx,
                     JournalCursor cursor)
        : selected_(selected), labels_(labels), ctx_(ctx), cursor_(cursor) {}

    // Positions the cursor at (or creates) the block for `digest`, skipping
    // finished blocks from earlier requests.
    void open_block(std::uint64_t digest, std::size_t n_images) {
        for (;;) {
            const JournalEvent* ev = cursor_.peek();
            if (!ev) break; // live from here on
            if (ev->kind != "inference_started") {
                throw JournalError("journal diverges: expected an inference block, found '" +
                                   ev->kind + "' at event " + std::to_string(ev->index));
            }
            if (ev->payload.at("samples_digest").get<std::string>() == to_hex(digest)) {
                cursor_.take({"inference_started"});
                replaying_block_ = true;
                return;
            }
            skip_finished_block();
        }
        if (ctx_.journal) {
            ctx_.journal->append("inference_started",
                                 {{"h", selected_.size()},
                                  {"n_images", n_images},
                                  {"samples_digest", to_hex(digest)}});
        }
    }

    void close_block(std::size_t n_images) {
        if (const JournalEvent* ev = cursor_.take({"inference_finished"})) {
            (void)ev;
            return;
        }
        if (ctx_.journal) {
            ctx_.journal->append("inference_finished", {{"n_images", n_images}});
        }
    }

    VoteRecord infer_one(const std::string& sample_id, const std::string& image_ref) {
        VoteRecord record;
        record.sample_id = sample_id;

        DecodeParams decode;
        decode.temperature = ctx_.mllm_temperature;
        decode.max_tokens = ctx_.mllm_max_tokens;

        for (std::size_t h = 0; h < selected_.size(); ++h) {
            const ScoredPrompt& prompt = selected_[h];
            VoteEntry entry;
            entry.prompt_text = prompt.text;
            entry.prompt_accuracy = prompt.accuracy;
            entry.prompt_seq = prompt.created_seq;

            if (const JournalEvent* ev = cursor_.take({"inference_call"})) {
                if (ev->payload.at("sample_id").get<std::string>() != sample_id ||
                    ev->payload.at("h").get<std::size_t>() != h ||
                    ev->payload.at("prompt_seq").get<std::uint64_t>() != prompt.created_seq) {
                    throw JournalError("journal diverges: inference call mismatch at event " +
                                       std::to_string(ev->index));
                }
                std::string raw = ev->payload.at("raw").get<std::string>();
                auto label = label_from_json(ev->payload.at("parsed"));
                entry.output = label ? ParsedOutput::target(*label, raw)
                                     : ParsedOutput::non_target(raw);
            } else {
                try {
                    std::string raw = classify_image(*ctx_.mllm, image_ref, prompt.text,
                                                     decode, ctx_.cache, ctx_.mllm_retry,
                                                     ctx_.journal);
                    entry.output = parse_label(raw, labels_);
                } catch (const InputError&) {
                    throw; // bad image reference; retrying other prompts cannot help
                } catch (const Error& e) {
                    entry.output = ParsedOutput::non_target("");
                    if (ctx_.journal) {
                        ctx_.journal->append(
                            "warning", {{"message", std::string("inference call failed, "
                                                                "counting an abstention: ") +
                                                        e.what()}});
                    }
                }
                if (ctx_.journal) {
                    ctx_.journal->append("inference_call",
                                         {{"sample_id", sample_id},
                                          {"h", h},
                                          {"prompt_seq", prompt.created_seq},
                                          {"raw", entry.output.raw},
                                          {"parsed", label_to_json(entry.output.label)}});
                }
            }
            record.entries.push_back(std::move(entry));
        }

        std::vector<ParsedOutput> outputs;
        outputs.reserve(record.entries.size());
        for (const VoteEntry& e : record.entries) outputs.push_back(e.output);
        record.final = majority_vote(outputs);

        if (const JournalEvent* ev = cursor_.take({"vote_record"})) {
            if (ev->payload.at("sample_id").get<std::string>() != sample_id ||
                label_from_json(ev->payload.at("final")) != record.final) {
                throw JournalError("journal diverges: vote mismatch at event " +
                                   std::to_string(ev->index));
            }
        } else if (ctx_.journal) {
            ctx_.journal->append(
                "vote_record",
                {{"sample_id", sample_id}, {"final", label_to_json(record.final)}});
        }
        return record;
    }

    bool replaying_block() const { return replaying_block_; }

private:
    void skip_finished_block() {
        cursor_.take({"inference_started"});
        for (;;) {
            const JournalEvent* ev = cursor_.peek();
            if (!ev) {
                throw JournalError(
                    "journal holds an unfinished inference over a different sample set;"
                    " use a fresh journal");
            }
            bool done = ev->kind == "inference_finished";
            cursor_.take({ev->kind.c_str()});
            if (done) return;
        }
    }

    const std::vector<ScoredPrompt>& selected_;
    const std::vector<Emotion>& labels_;
    TuningContext& ctx_;
    JournalCursor cursor_;
    bool replaying_block_ = false;
};

JournalCursor cursor_after_tuning(TuningContext& ctx) {
    static const std::vector<JournalEvent> empty;
    if (!ctx.journal) return JournalCursor(empty);
    const std::vector<JournalEvent>& events = ctx.journal->replayed();
    JournalCursor cursor(events);
    if (journal_has_finished_tuning(events)) {
        while (const JournalEvent* ev = cursor.peek()) {
            bool done = ev->kind == "tuning_finished";
            cursor.take({ev->kind.c_str()});
            if (done) break;
        }
        return cursor;
    }
    // A tuning stage that started in this journal but finished only after
    // reopening leaves no inference events to replay: everything recorded so
    // far belongs to tuning, so the inference stage starts live.
    bool tuning_started = false;
    for (const JournalEvent& ev : events) {
        if (ev.kind == "run_started") {
            tuning_started = true;
            break;
        }
    }
    if (tuning_started) {
        while (cursor.peek()) cursor.take({cursor.peek()->kind.c_str()});
    }
    return cursor;
}

std::uint64_t sample_set_digest(const std::vector<LabeledSample>& samples, std::size_t h) {
    std::uint64_t digest = train_set_digest(samples);
    return fnv1a64_u64(static_cast<std::uint64_t>(h), digest);
}

} // namespace

VoteRecord infer(const std::string& image_ref, const PromptPool& pool,
                 const TuningConfig& config, const std::vector<Emotion>& labels,
                 TuningContext& ctx) {
    if (image_ref.empty()) {
        throw InputError("infer requires an image reference");
    }
    JournalCursor cursor = cursor_after_tuning(ctx);
    // Selection warnings belong to the first (live) pass only.
    bool live = cursor.exhausted();
    std::vector<ScoredPrompt> selected =
        select_optimal_prompts(pool, config.h_vote, live ? ctx.journal : nullptr);

    std::vector<LabeledSample> pseudo = {{image_ref, image_ref, "", Emotion::amusement}};
    InferenceSession session(selected, labels, ctx, cursor);
    session.open_block(sample_set_digest(pseudo, selected.size()), 1);
    VoteRecord record = session.infer_one(image_ref, image_ref);
    session.close_block(1);
    return record;
}

BatchInferenceResult run_batch_inference(const std::vector<LabeledSample>& test,
                                         const PromptPool& pool, const TuningConfig& config,
                                         const std::vector<Emotion>& labels,
                                         TuningContext& ctx) {
    if (test.empty()) {
        throw PreconditionError("batch inference requires at least one test sample");
    }
    JournalCursor cursor = cursor_after_tuning(ctx);
    bool live = cursor.exhausted();
    std::vector<ScoredPrompt> selected =
        select_optimal_prompts(pool, config.h_vote, live ? ctx.journal : nullptr);

    InferenceSession session(selected, labels, ctx, cursor);
    session.open_block(sample_set_digest(test, selected.size()), test.size());

    BatchInferenceResult result;
    for (const LabeledSample& sample : test) {
        VoteRecord record = session.infer_one(sample.sample_id, sample.image);
        ParsedOutput as_output = record.final
                                     ? ParsedOutput::target(*record.final, "")
                                     : ParsedOutput::non_target("");
        result.confusion.add(sample.label, as_output);
        result.votes.push_back(std::move(record));
    }
    session.close_block(test.size());
    return result;
}

} // namespace vertune
