#pragma once

#include "vertune/emotion.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace vertune {

struct LabeledSample {
    std::string sample_id;
    std::string image; // path, URL or synthetic id
    std::string user_id;
    Emotion label = Emotion::amusement;
};

// Line-delimited records with exactly the fields sample_id, image, user_id,
// label. Unknown labels and duplicate (sample_id, user_id) keys are rejected
// with row numbers.
std::vector<LabeledSample> load_manifest(const std::filesystem::path& file);
void save_manifest(const std::filesystem::path& file, const std::vector<LabeledSample>& samples);

std::vector<std::string> manifest_users(const std::vector<LabeledSample>& samples);
std::vector<LabeledSample> samples_for_user(const std::vector<LabeledSample>& samples,
                                            const std::string& user_id);

struct SplitSpec {
    double train_fraction = 0.30;
    std::uint64_t seed = 0;
    bool stratified = true;
};

struct SplitResult {
    std::vector<LabeledSample> train;
    std::vector<LabeledSample> test;
    std::vector<std::string> warnings;
};

// Seeded, platform-stable shuffle followed by per-label largest-remainder
// allocation when stratified. A label holding a single sample always lands
// in train, with a warning.
SplitResult split(const std::vector<LabeledSample>& user_samples, const SplitSpec& spec);

struct JournalEvent {
    std::uint64_t index = 0;
    std::uint64_t timestamp = 0;
    std::string kind;
    nlohmann::json payload;
};

// Thrown by the testing crash hook; deliberately not a vertune::Error so no
// recovery path catches it by accident.
struct JournalCrashForTesting {};

// Append-only, line-delimited event log. Every prefix of the file is valid;
// a partial trailing line (crash mid-write) is truncated away on reopen.
// One writer per journal, enforced with an exclusive file lock.
class Journal {
public:
    enum class Clock {
        logical, // timestamp == event index; byte-reproducible runs
        wall,    // unix milliseconds
    };

    Journal(const std::filesystem::path& file, Clock clock);
    ~Journal();

    Journal(const Journal&) = delete;
    Journal& operator=(const Journal&) = delete;

    // Events recovered from the file at open time.
    const std::vector<JournalEvent>& replayed() const { return replayed_; }

    std::uint64_t append(const std::string& kind, nlohmann::json payload);

    std::uint64_t next_index() const { return next_index_; }
    const std::filesystem::path& path() const { return path_; }

    // Testing hook: simulate a crash by refusing the (n+1)-th append.
    void set_append_limit(std::uint64_t n) { append_limit_ = n; }

private:
    std::filesystem::path path_;
    Clock clock_;
    int fd_ = -1;
    std::uint64_t next_index_ = 0;
    std::uint64_t appended_ = 0;
    std::optional<std::uint64_t> append_limit_;
    std::vector<JournalEvent> replayed_;
};

// Reads a journal without taking the writer lock. Stops at the first
// corrupted line.
std::vector<JournalEvent> read_journal(const std::filesystem::path& file);

// Event kinds the tuning / inference engines replay structurally. Auxiliary
// kinds (warning, backend_retry) are informational and skipped by cursors.
bool is_structural_event(const std::string& kind);

// Walks replayed events in order, yielding structural events one at a time.
// Exhaustion means the run continues live from that point.
class JournalCursor {
public:
    explicit JournalCursor(const std::vector<JournalEvent>& events) : events_(&events) {}

    // Returns the next structural event if one exists, requiring its kind to
    // be one of `kinds`; throws JournalError on a kind mismatch.
    const JournalEvent* take(std::initializer_list<const char*> kinds);
    const JournalEvent* peek() const;
    bool exhausted() const { return peek() == nullptr; }

private:
    const std::vector<JournalEvent>* events_;
    std::size_t pos_ = 0;
};

} // namespace vertune
