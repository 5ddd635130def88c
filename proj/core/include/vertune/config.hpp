#pragma once

#include "vertune/backend.hpp"
#include "vertune/datastore.hpp"
#include "vertune/emotion.hpp"
#include "vertune/tuner.hpp"

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

namespace vertune {

struct BackendConfig {
    std::string type = "mock"; // "mock" or "http"
    std::string model;
    double temperature = 0.0;
    int max_tokens = 512;
    std::string base_url;
    std::string path = "/v1/chat/completions";
    std::string auth_env;
    int timeout_ms = 30000;
    int max_attempts = 3;
    int backoff_ms = 100;

    RetryPolicy retry_policy() const;
};

struct WheelConfig {
    std::vector<Emotion> order;
    std::vector<Emotion> positive;
    int polarity_constant = 4;

    EmotionWheel build() const;
};

// Resolved run configuration: file values overridden by flags, validated
// before any backend call.
struct RunConfig {
    WheelConfig wheel;
    TuningConfig tuning;
    BackendConfig llm;
    BackendConfig mllm;
    double sim_epsilon = 0.05;
    std::string manifest;
    SplitSpec split_spec;
    std::string journal_dir = "runs";
    std::string cache_dir;
    std::string output_dir = "out";

    static RunConfig defaults();
    static RunConfig load(const std::filesystem::path& file);
    static RunConfig from_json(const nlohmann::json& j);

    std::vector<Emotion> labels() const;
    bool fully_mocked() const { return llm.type == "mock" && mllm.type == "mock"; }

    std::filesystem::path journal_path(const std::string& user_id) const;
};

struct BackendSet {
    std::unique_ptr<TextGenBackend> llm;
    std::unique_ptr<VisionClassifyBackend> mllm;
};

// Instantiates the configured backends for one user; mock backends derive
// the user profile from (user id, tuning seed, sim epsilon).
BackendSet make_backends(const RunConfig& config, const std::string& user_id);

} // namespace vertune
