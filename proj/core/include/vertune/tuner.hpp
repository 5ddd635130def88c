#pragma once

#include "vertune/backend.hpp"
#include "vertune/datastore.hpp"
#include "vertune/emotion.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace vertune {

enum class PromptOrigin : std::uint8_t { initial, modified };

// Coordinates of a prompt inside the nested search loops: outer restart,
// middle reset, inner refinement step. Initial prompts carry i2 = i1 = 0.
struct Lineage {
    int i3 = 0;
    int i2 = 0;
    int i1 = 0;
    PromptOrigin origin = PromptOrigin::initial;
};

struct ScoredPrompt {
    std::string text;
    double accuracy = 0.0; // training accuracy, set once before any ranking
    Lineage lineage;
    std::uint64_t created_seq = 0; // global, strictly increasing per run
};

struct TuningConfig {
    int n_initial = 6;
    int t_modified = 5;
    int k_select = 3;
    int i1 = 20;
    int i2 = 2;
    int i3 = 3;
    int h_vote = 5;
    std::uint64_t seed = 0;
    int parallelism = 1;

    void validate() const;
};

// Insertion-ordered set of scored prompts, unique by normalized text.
// Inserting a duplicate keeps the earlier entry and its score.
class PromptPool {
public:
    bool insert(const ScoredPrompt& prompt);
    bool contains_text(const std::string& text) const;

    const std::vector<ScoredPrompt>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

    // Entries ordered by descending accuracy; ties go to the older prompt.
    std::vector<ScoredPrompt> ranked() const;

private:
    std::vector<ScoredPrompt> entries_;
    std::map<std::string, std::size_t> index_by_norm_;
};

struct Extremes {
    std::vector<ScoredPrompt> best;  // descending accuracy
    std::vector<ScoredPrompt> worst; // ascending accuracy
};

// Top-k and worst-k by training accuracy; k is clamped to the pool size and
// the lists may overlap when the pool holds fewer than 2k prompts.
Extremes select_extremes(const PromptPool& pool, int k);

// Instruction asking the generator for n candidate prompts over the given
// label set. Byte-stable for fixed inputs.
std::string render_init_template(int n, const std::vector<Emotion>& labels);

// Instruction asking for t improved prompts given the current best and worst
// lists; accuracies render with three decimals.
std::string render_mod_template(const std::vector<ScoredPrompt>& best,
                                const std::vector<ScoredPrompt>& worst, int t);

struct TuningContext {
    TextGenBackend* llm = nullptr;
    VisionClassifyBackend* mllm = nullptr;
    ResponseCache* cache = nullptr;
    Journal* journal = nullptr;
    RetryPolicy llm_retry;
    RetryPolicy mllm_retry;
    double llm_temperature = 1.0;  // generation wants diversity
    double mllm_temperature = 0.0; // evaluation wants reproducibility
    int llm_max_tokens = 1024;
    int mllm_max_tokens = 256;
};

// Training accuracy of one prompt: fraction of samples whose parsed answer
// equals the ground-truth label. Sample order cannot affect the result; calls
// may fan out over `parallelism` threads.
double score_prompt(const std::string& prompt, const std::vector<LabeledSample>& train,
                    const std::vector<Emotion>& labels, TuningContext& ctx,
                    int parallelism = 1);

// Runs the full nested search and returns the accumulated pool with every
// prompt scored. When the journal already holds a (partial) run for the same
// configuration, completed steps are replayed instead of recomputed, so an
// interrupted run resumes exactly where it stopped.
PromptPool run_tuning(const TuningConfig& config, const std::vector<LabeledSample>& train,
                      const std::vector<Emotion>& labels, TuningContext& ctx);

// Rebuilds the accumulated pool from a journal of a finished run.
PromptPool pool_from_journal(const std::vector<JournalEvent>& events);
bool journal_has_finished_tuning(const std::vector<JournalEvent>& events);

// Digest of the training set identity (ids and labels), recorded in the
// journal so a resumed run can refuse mismatched data.
std::uint64_t train_set_digest(const std::vector<LabeledSample>& train);

} // namespace vertune
