#include "vertune/http_backend.hpp"

#include "vertune/errors.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

namespace vertune {

namespace {

struct ParsedUrl {
    std::string scheme_host_port;
};

ParsedUrl require_base_url(const HttpBackendConfig& config) {
    if (config.base_url.empty()) {
        throw ConfigError("http backend needs a base_url");
    }
    return {config.base_url};
}

httplib::Headers auth_headers(const HttpBackendConfig& config) {
    httplib::Headers headers;
    if (!config.auth_env.empty()) {
        const char* token = std::getenv(config.auth_env.c_str());
        if (!token || !*token) {
            throw ConfigError("auth token environment variable '" + config.auth_env +
                              "' is unset");
        }
        headers.emplace("Authorization", std::string("Bearer ") + token);
    }
    return headers;
}

nlohmann::json base_request(const HttpBackendConfig& config, const DecodeParams& decode) {
    nlohmann::json req = {
        {"model", config.model},
        {"temperature", decode.temperature},
        {"max_tokens", decode.max_tokens},
    };
    if (decode.seed) req["seed"] = *decode.seed;
    return req;
}

std::string post_chat(const HttpBackendConfig& config, const nlohmann::json& request) {
    require_base_url(config);
    httplib::Client client(config.base_url);
    client.set_connection_timeout(0, config.timeout_ms * 1000);
    client.set_read_timeout(config.timeout_ms / 1000, (config.timeout_ms % 1000) * 1000);

    auto result = client.Post(config.path, auth_headers(config), request.dump(),
                              "application/json");
    if (!result) {
        throw TransportError("request to " + config.base_url + config.path + " failed: " +
                             httplib::to_string(result.error()));
    }
    if (result->status >= 500) {
        throw TransportError("server error " + std::to_string(result->status) + " from " +
                             config.base_url);
    }
    if (result->status != 200) {
        throw BackendError("unexpected status " + std::to_string(result->status) + " from " +
                           config.base_url + ": " + result->body);
    }
    try {
        nlohmann::json body = nlohmann::json::parse(result->body);
        return body.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw ProtocolError(std::string("malformed completion response: ") + e.what());
    }
}

std::string image_payload(const std::string& image_ref) {
    if (image_ref.rfind("http://", 0) == 0 || image_ref.rfind("https://", 0) == 0 ||
        image_ref.rfind("data:", 0) == 0) {
        return image_ref; // pass through
    }
    std::filesystem::path path(image_ref);
    if (!std::filesystem::exists(path)) {
        throw InputError("image reference is neither a URL nor an existing file: " + image_ref);
    }
    std::ifstream in(path, std::ios::binary);
    std::ostringstream bytes;
    bytes << in.rdbuf();
    std::string ext = path.extension().string();
    std::string mime = (ext == ".png") ? "image/png" : "image/jpeg";
    return "data:" + mime + ";base64," + base64_encode(bytes.str());
}

} // namespace

std::string base64_encode(const std::string& bytes) {
    static const char table[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    while (i + 2 < bytes.size()) {
        unsigned v = (static_cast<unsigned char>(bytes[i]) << 16) |
                     (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                     static_cast<unsigned char>(bytes[i + 2]);
        out.push_back(table[(v >> 18) & 63]);
        out.push_back(table[(v >> 12) & 63]);
        out.push_back(table[(v >> 6) & 63]);
        out.push_back(table[v & 63]);
        i += 3;
    }
    if (i + 1 == bytes.size()) {
        unsigned v = static_cast<unsigned char>(bytes[i]) << 16;
        out.push_back(table[(v >> 18) & 63]);
        out.push_back(table[(v >> 12) & 63]);
        out += "==";
    } else if (i + 2 == bytes.size()) {
        unsigned v = (static_cast<unsigned char>(bytes[i]) << 16) |
                     (static_cast<unsigned char>(bytes[i + 1]) << 8);
        out.push_back(table[(v >> 18) & 63]);
        out.push_back(table[(v >> 12) & 63]);
        out.push_back(table[(v >> 6) & 63]);
        out.push_back('=');
    }
    return out;
}

HttpTextGenBackend::HttpTextGenBackend(HttpBackendConfig config)
    : config_(std::move(config)) {}

BackendIdentity HttpTextGenBackend::identity() const {
    return {"http:" + config_.base_url, config_.model};
}

std::string HttpTextGenBackend::generate(const std::string& instruction,
                                         const DecodeParams& decode) {
    nlohmann::json req = base_request(config_, decode);
    req["messages"] = nlohmann::json::array(
        {nlohmann::json{{"role", "user"}, {"content", instruction}}});
    return post_chat(config_, req);
}

HttpVisionClassifyBackend::HttpVisionClassifyBackend(HttpBackendConfig config)
    : config_(std::move(config)) {}

BackendIdentity HttpVisionClassifyBackend::identity() const {
    return {"http:" + config_.base_url, config_.model};
}

std::string HttpVisionClassifyBackend::classify(const std::string& image_ref,
                                                const std::string& prompt,
                                                const DecodeParams& decode) {
    nlohmann::json content = nlohmann::json::array();
    content.push_back({{"type", "text"}, {"text", prompt}});
    content.push_back(
        {{"type", "image_url"}, {"image_url", {{"url", image_payload(image_ref)}}}});
    nlohmann::json req = base_request(config_, decode);
    req["messages"] =
        nlohmann::json::array({nlohmann::json{{"role", "user"}, {"content", content}}});
    return post_chat(config_, req);
}

} // namespace vertune
