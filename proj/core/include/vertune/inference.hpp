#pragma once

#include "vertune/backend.hpp"
#include "vertune/datastore.hpp"
#include "vertune/emotion.hpp"
#include "vertune/metrics.hpp"
#include "vertune/tuner.hpp"

#include <optional>
#include <string>
#include <vector>

namespace vertune {

struct VoteEntry {
    std::string prompt_text;
    double prompt_accuracy = 0.0; // training accuracy of the prompt
    std::uint64_t prompt_seq = 0;
    ParsedOutput output = ParsedOutput::non_target("");
};

struct VoteRecord {
    std::string sample_id;
    // Ordered by selection order: descending training accuracy, older first.
    std::vector<VoteEntry> entries;
    std::optional<Emotion> final; // empty when every prompt abstained
};

// Picks the argmax-accuracy prompt h times without replacement; ties go to
// the older prompt. Returns fewer than h when the pool is smaller, warning
// through the journal.
std::vector<ScoredPrompt> select_optimal_prompts(const PromptPool& pool, int h,
                                                 Journal* journal = nullptr);

// Non-target entries abstain. The label with the most votes wins; ties go to
// the tied label whose earliest supporter has the smallest selection index.
// All-abstain yields non-target.
std::optional<Emotion> majority_vote(const std::vector<ParsedOutput>& results);

// Classifies one image with each selected prompt and votes. Backend failures
// exhaust retries, then mark that slot non-target instead of aborting.
VoteRecord infer(const std::string& image_ref, const PromptPool& pool,
                 const TuningConfig& config, const std::vector<Emotion>& labels,
                 TuningContext& ctx);

struct BatchInferenceResult {
    std::vector<VoteRecord> votes;
    ConfusionMatrix confusion;
};

// Batch inference over labeled test samples, journaled as one replayable
// block so an interrupted batch resumes without repeating backend calls.
BatchInferenceResult run_batch_inference(const std::vector<LabeledSample>& test,
                                         const PromptPool& pool, const TuningConfig& config,
                                         const std::vector<Emotion>& labels,
                                         TuningContext& ctx);

} // namespace vertune
