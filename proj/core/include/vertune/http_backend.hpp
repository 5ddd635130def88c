#pragma once

#include "vertune/backend.hpp"

#include <memory>
#include <string>

namespace vertune {

// Minimal chat-style HTTP+JSON client matching the de facto shape of hosted
// model APIs: POST {base_url}{path} with a model id, a message list, decode
// parameters and an optional image payload.
struct HttpBackendConfig {
    std::string base_url;                            // e.g. http://localhost:8089
    std::string path = "/v1/chat/completions";
    std::string model;
    std::string auth_env;                            // env var holding the bearer token
    int timeout_ms = 30000;
};

class HttpTextGenBackend : public TextGenBackend {
public:
    explicit HttpTextGenBackend(HttpBackendConfig config);

    BackendIdentity identity() const override;
    std::string generate(const std::string& instruction, const DecodeParams& decode) override;

private:
    HttpBackendConfig config_;
};

class HttpVisionClassifyBackend : public VisionClassifyBackend {
public:
    explicit HttpVisionClassifyBackend(HttpBackendConfig config);

    BackendIdentity identity() const override;
    std::string classify(const std::string& image_ref, const std::string& prompt,
                         const DecodeParams& decode) override;

private:
    HttpBackendConfig config_;
};

std::string base64_encode(const std::string& bytes);

} // namespace vertune
