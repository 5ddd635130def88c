#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace vertune {

class Journal; // datastore.hpp

struct DecodeParams {
    double temperature = 0.0; // evaluation calls keep the default of 0
    int max_tokens = 512;
    std::optional<std::uint64_t> seed;
};

struct BackendIdentity {
    std::string backend_id;
    std::string model_id;
};

// Text generator role: produces prompt candidates from an instruction.
class TextGenBackend {
public:
    virtual ~TextGenBackend() = default;
    virtual BackendIdentity identity() const = 0;
    virtual std::string generate(const std::string& instruction, const DecodeParams& decode) = 0;
};

// Image-conditioned classifier role: returns raw text for a (image, prompt)
// pair; the caller feeds the text to parse_label.
class VisionClassifyBackend {
public:
    virtual ~VisionClassifyBackend() = default;
    virtual BackendIdentity identity() const = 0;
    virtual std::string classify(const std::string& image_ref, const std::string& prompt,
                                 const DecodeParams& decode) = 0;
};

// Content hash identifying one logical request. Semantically identical
// requests collide; distinct ones do not at test scale.
struct CacheKey {
    std::string backend_id;
    std::string model_id;
    std::uint64_t digest = 0;

    static CacheKey for_generate(const BackendIdentity& id, const std::string& instruction,
                                 const DecodeParams& decode);
    static CacheKey for_classify(const BackendIdentity& id, const std::string& image_ref,
                                 const std::string& prompt, const DecodeParams& decode);

    std::string file_stem() const;
};

// Content-addressed on-disk response cache: one file per key digest, value =
// response bytes plus a small header. Persists across runs; concurrent
// writers of the same key are benign because values for identical keys are
// identical under deterministic decoding.
class ResponseCache {
public:
    explicit ResponseCache(std::filesystem::path dir);

    std::optional<std::string> get(const CacheKey& key);
    void put(const CacheKey& key, const std::string& response);

    std::uint64_t hits() const { return hits_.load(); }
    std::uint64_t misses() const { return misses_.load(); }

private:
    std::filesystem::path path_for(const CacheKey& key) const;

    std::filesystem::path dir_;
    std::mutex mutex_;
    std::atomic<std::uint64_t> hits_{0};
    std::atomic<std::uint64_t> misses_{0};
};

struct RetryPolicy {
    int max_attempts = 3;
    int initial_backoff_ms = 100;
    double backoff_multiplier = 2.0;
    int max_backoff_ms = 2000;
};

// Wraps backend.generate with bounded-backoff retries on transient transport
// failures. Retries are recorded in the journal when one is attached.
std::string generate_text(TextGenBackend& backend, const std::string& instruction,
                          const DecodeParams& decode, const RetryPolicy& retry = {},
                          Journal* journal = nullptr);

// Wraps backend.classify with the same retry contract plus response caching.
std::string classify_image(VisionClassifyBackend& backend, const std::string& image_ref,
                           const std::string& prompt, const DecodeParams& decode,
                           ResponseCache* cache = nullptr, const RetryPolicy& retry = {},
                           Journal* journal = nullptr);

// Extracts the trimmed text of every line beginning with '-' (after optional
// leading whitespace), in order, deduplicated by normalized text. Throws
// ExtractionError when nothing matches.
std::vector<std::string> parse_prompt_list(const std::string& raw);

} // namespace vertune
