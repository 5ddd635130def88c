#include "vertune/backend.hpp"

#include "vertune/datastore.hpp"
#include "vertune/errors.hpp"
#include "vertune/hash.hpp"
#include "vertune/text.hpp"

#include <chrono>
#include <fstream>
#include <set>
#include <thread>

#include <json.hpp>

namespace vertune {

namespace {

std::uint64_t decode_digest(std::uint64_t h, const DecodeParams& decode) {
    h = fnv1a64(format_fixed(decode.temperature, 6), h);
    h = fnv1a64_u64(static_cast<std::uint64_t>(decode.max_tokens), h);
    h = fnv1a64_u64(decode.seed ? *decode.seed + 1 : 0, h);
    return h;
}

} // namespace

CacheKey CacheKey::for_generate(const BackendIdentity& id, const std::string& instruction,
                                const DecodeParams& decode) {
    std::uint64_t h = fnv1a64("generate");
    h = fnv1a64(instruction, h);
    h = decode_digest(h, decode);
    return CacheKey{id.backend_id, id.model_id, h};
}

CacheKey CacheKey::for_classify(const BackendIdentity& id, const std::string& image_ref,
                                const std::string& prompt, const DecodeParams& decode) {
    std::uint64_t h = fnv1a64("classify");
    h = fnv1a64(image_ref, h);
    h = fnv1a64("\x1f", h); // field separator so (ab, c) != (a, bc)
    h = fnv1a64(prompt, h);
    h = decode_digest(h, decode);
    return CacheKey{id.backend_id, id.model_id, h};
}

std::string CacheKey::file_stem() const {
    std::uint64_t h = fnv1a64(backend_id);
    h = fnv1a64("\x1f", h);
    h = fnv1a64(model_id, h);
    h = fnv1a64_u64(digest, h);
    return to_hex(h);
}

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
}

std::filesystem::path ResponseCache::path_for(const CacheKey& key) const {
    return dir_ / (key.file_stem() + ".json");
}

std::optional<std::string> ResponseCache::get(const CacheKey& key) {
    std::lock_guard<std::mutex> lock(mutex_);
    std::ifstream in(path_for(key));
    if (!in) {
        misses_.fetch_add(1);
        return std::nullopt;
    }
    try {
        nlohmann::json entry = nlohmann::json::parse(in);
        hits_.fetch_add(1);
        return entry.at("response").get<std::string>();
    } catch (const nlohmann::json::exception&) {
        misses_.fetch_add(1);
        return std::nullopt; // unreadable entry behaves like a miss
    }
}

void ResponseCache::put(const CacheKey& key, const std::string& response) {
    std::lock_guard<std::mutex> lock(mutex_);
    nlohmann::json entry = {
        {"backend", key.backend_id},
        {"model", key.model_id},
        {"stored_at_ms",
         std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
             .count()},
        {"response", response},
    };
    std::filesystem::path final_path = path_for(key);
    std::filesystem::path tmp_path = final_path;
    tmp_path += ".tmp";
    {
        std::ofstream out(tmp_path, std::ios::trunc);
        out << entry.dump() << '\n';
    }
    std::filesystem::rename(tmp_path, final_path); // last write wins
}

namespace {

template <typename Call>
std::string with_retries(const char* role, const RetryPolicy& retry, Journal* journal,
                         Call&& call) {
    int attempts = std::max(1, retry.max_attempts);
    double backoff = retry.initial_backoff_ms;
    for (int attempt = 1;; ++attempt) {
        try {
            return call();
        } catch (const TransportError& e) {
            if (attempt >= attempts) {
                throw BackendError(std::string(role) + " backend unavailable after " +
                                   std::to_string(attempts) + " attempts: " + e.what());
            }
            if (journal) {
                journal->append("backend_retry", {{"role", role},
                                                  {"attempt", attempt},
                                                  {"error", e.what()}});
            }
            if (backoff > 0) {
                std::this_thread::sleep_for(
                    std::chrono::milliseconds(static_cast<int>(backoff)));
            }
            backoff = std::min(backoff * retry.backoff_multiplier,
                               static_cast<double>(retry.max_backoff_ms));
        }
    }
}

} // namespace

std::string generate_text(TextGenBackend& backend, const std::string& instruction,
                          const DecodeParams& decode, const RetryPolicy& retry,
                          Journal* journal) {
    if (instruction.empty()) {
        throw PreconditionError("generate_text requires a non-empty instruction");
    }
    return with_retries("llm", retry, journal,
                        [&] { return backend.generate(instruction, decode); });
}

std::string classify_image(VisionClassifyBackend& backend, const std::string& image_ref,
                           const std::string& prompt, const DecodeParams& decode,
                           ResponseCache* cache, const RetryPolicy& retry, Journal* journal) {
    if (prompt.empty()) {
        throw PreconditionError("classify_image requires a non-empty prompt");
    }
    if (image_ref.empty()) {
        throw InputError("classify_image requires an image reference");
    }
    CacheKey key;
    if (cache) {
        key = CacheKey::for_classify(backend.identity(), image_ref, prompt, decode);
        if (auto cached = cache->get(key)) return *cached;
    }
    std::string response = with_retries("mllm", retry, journal, [&] {
        return backend.classify(image_ref, prompt, decode);
    });
    if (cache) cache->put(key, response);
    return response;
}

std::vector<std::string> parse_prompt_list(const std::string& raw) {
    std::vector<std::string> prompts;
    std::set<std::string> seen;
    for (const std::string& line : split_lines(raw)) {
        std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] != '-') continue;
        std::string text = trim(stripped.substr(1));
        if (text.empty()) continue;
        std::string norm = normalize_text(text);
        if (!seen.insert(norm).second) continue;
        prompts.push_back(std::move(text));
    }
    if (prompts.empty()) {
        throw ExtractionError("no '-' prefixed prompt lines found in generator output");
    }
    return prompts;
}

} // namespace vertune
