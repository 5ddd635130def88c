#include "vertune/config.hpp"

#include "vertune/errors.hpp"
#include "vertune/hash.hpp"
#include "vertune/http_backend.hpp"
#include "vertune/simkit.hpp"

#include <fstream>
#include <set>

namespace vertune {

RetryPolicy BackendConfig::retry_policy() const {
    RetryPolicy policy;
    policy.max_attempts = max_attempts;
    policy.initial_backoff_ms = backoff_ms;
    return policy;
}

EmotionWheel WheelConfig::build() const {
    return EmotionWheel(order, positive, polarity_constant);
}

namespace {

class StrictReader {
public:
    StrictReader(const nlohmann::json& j, std::string path) : j_(&j), path_(std::move(path)) {
        if (!j.is_object()) {
            throw ConfigError(path_ + ": expected an object");
        }
    }

    ~StrictReader() = default;

    void finish() const {
        for (auto it = j_->begin(); it != j_->end(); ++it) {
            if (!consumed_.count(it.key())) {
                throw ConfigError(path_ + "." + it.key() + ": unknown key");
            }
        }
    }

    bool has(const std::string& key) {
        return j_->contains(key);
    }

    const nlohmann::json* take(const std::string& key) {
        consumed_.insert(key);
        auto it = j_->find(key);
        return it == j_->end() ? nullptr : &*it;
    }

    template <typename T>
    void read(const std::string& key, T& out) {
        if (const nlohmann::json* v = take(key)) {
            try {
                out = v->get<T>();
            } catch (const nlohmann::json::exception&) {
                throw ConfigError(path_ + "." + key + ": wrong type");
            }
        }
    }

    std::string path_for(const std::string& key) const { return path_ + "." + key; }

private:
    const nlohmann::json* j_;
    std::string path_;
    std::set<std::string> consumed_;
};

std::vector<Emotion> parse_label_array(const nlohmann::json& arr, const std::string& path) {
    if (!arr.is_array()) throw ConfigError(path + ": expected an array of label names");
    std::vector<Emotion> out;
    for (const auto& item : arr) {
        if (!item.is_string()) throw ConfigError(path + ": labels must be strings");
        auto e = emotion_from_name(item.get<std::string>());
        if (!e) {
            throw ConfigError(path + ": '" + item.get<std::string>() +
                              "' is not a target label");
        }
        out.push_back(*e);
    }
    return out;
}

BackendConfig parse_backend(const nlohmann::json& j, const std::string& path,
                            BackendConfig defaults) {
    StrictReader r(j, path);
    BackendConfig out = std::move(defaults);
    r.read("type", out.type);
    r.read("model", out.model);
    r.read("temperature", out.temperature);
    r.read("max_tokens", out.max_tokens);
    r.read("base_url", out.base_url);
    r.read("path", out.path);
    r.read("auth_env", out.auth_env);
    r.read("timeout_ms", out.timeout_ms);
    r.read("max_attempts", out.max_attempts);
    r.read("backoff_ms", out.backoff_ms);
    r.finish();
    if (out.type != "mock" && out.type != "http") {
        throw ConfigError(path + ".type: must be 'mock' or 'http', got '" + out.type + "'");
    }
    if (out.type == "http" && out.base_url.empty()) {
        throw ConfigError(path + ".base_url: required for http backends");
    }
    if (out.temperature < 0.0) {
        throw ConfigError(path + ".temperature: must be non-negative");
    }
    if (out.max_tokens < 1) {
        throw ConfigError(path + ".max_tokens: must be positive");
    }
    return out;
}

} // namespace

RunConfig RunConfig::defaults() {
    RunConfig config;
    EmotionWheel wheel = EmotionWheel::standard();
    config.wheel.order = wheel.order();
    config.wheel.positive = {Emotion::amusement, Emotion::awe, Emotion::contentment,
                             Emotion::excitement};
    config.wheel.polarity_constant = 4;
    config.llm.temperature = 1.0;
    config.llm.max_tokens = 1024;
    config.mllm.temperature = 0.0;
    config.mllm.max_tokens = 256;
    return config;
}

RunConfig RunConfig::load(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) {
        throw ConfigError("cannot open config file: " + file.string());
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config parse error in " + file.string() + ": " + e.what());
    }
    return from_json(j);
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    RunConfig config = defaults();
    StrictReader root(j, "config");

    if (const nlohmann::json* wheel = root.take("wheel")) {
        StrictReader r(*wheel, "config.wheel");
        if (const nlohmann::json* order = r.take("order")) {
            config.wheel.order = parse_label_array(*order, "config.wheel.order");
        }
        if (const nlohmann::json* positive = r.take("positive")) {
            config.wheel.positive = parse_label_array(*positive, "config.wheel.positive");
        }
        r.read("polarity_constant", config.wheel.polarity_constant);
        r.finish();
    }

    if (const nlohmann::json* tuning = root.take("tuning")) {
        StrictReader r(*tuning, "config.tuning");
        r.read("n_initial", config.tuning.n_initial);
        r.read("t_modified", config.tuning.t_modified);
        r.read("k_select", config.tuning.k_select);
        r.read("i1", config.tuning.i1);
        r.read("i2", config.tuning.i2);
        r.read("i3", config.tuning.i3);
        r.read("h_vote", config.tuning.h_vote);
        r.read("seed", config.tuning.seed);
        r.read("parallelism", config.tuning.parallelism);
        r.finish();
    }

    if (const nlohmann::json* backends = root.take("backends")) {
        StrictReader r(*backends, "config.backends");
        if (const nlohmann::json* llm = r.take("llm")) {
            config.llm = parse_backend(*llm, "config.backends.llm", config.llm);
        }
        if (const nlohmann::json* mllm = r.take("mllm")) {
            config.mllm = parse_backend(*mllm, "config.backends.mllm", config.mllm);
        }
        r.finish();
    }

    if (const nlohmann::json* sim = root.take("sim")) {
        StrictReader r(*sim, "config.sim");
        r.read("epsilon", config.sim_epsilon);
        r.finish();
        if (!(config.sim_epsilon >= 0.0 && config.sim_epsilon < 0.5)) {
            throw ConfigError("config.sim.epsilon: must lie in [0, 0.5)");
        }
    }

    if (const nlohmann::json* data = root.take("data")) {
        StrictReader r(*data, "config.data");
        r.read("manifest", config.manifest);
        if (const nlohmann::json* split = r.take("split")) {
            StrictReader s(*split, "config.data.split");
            s.read("train_fraction", config.split_spec.train_fraction);
            s.read("seed", config.split_spec.seed);
            s.read("stratified", config.split_spec.stratified);
            s.finish();
        }
        r.finish();
        if (!(config.split_spec.train_fraction > 0.0 &&
              config.split_spec.train_fraction < 1.0)) {
            throw ConfigError(
                "config.data.split.train_fraction: must lie strictly between 0 and 1");
        }
    }

    if (const nlohmann::json* paths = root.take("paths")) {
        StrictReader r(*paths, "config.paths");
        r.read("journal_dir", config.journal_dir);
        r.read("cache_dir", config.cache_dir);
        r.read("output_dir", config.output_dir);
        r.finish();
    }

    root.finish();
    config.tuning.validate();
    config.wheel.build(); // validates order / polarity / constant
    return config;
}

std::vector<Emotion> RunConfig::labels() const {
    std::vector<Emotion> out(all_emotions().begin(), all_emotions().end());
    return out;
}

std::filesystem::path RunConfig::journal_path(const std::string& user_id) const {
    return std::filesystem::path(journal_dir) / (user_id + ".journal");
}

BackendSet make_backends(const RunConfig& config, const std::string& user_id) {
    BackendSet set;
    if (config.llm.type == "mock") {
        std::uint64_t llm_seed = KeyedRng(config.tuning.seed).mix("llm-backend").next_u64();
        set.llm = std::make_unique<simkit::MockTextGen>(
            llm_seed, config.llm.model.empty() ? "sim-promptwriter" : config.llm.model);
    } else {
        HttpBackendConfig http{config.llm.base_url, config.llm.path, config.llm.model,
                               config.llm.auth_env, config.llm.timeout_ms};
        set.llm = std::make_unique<HttpTextGenBackend>(http);
    }
    if (config.mllm.type == "mock") {
        simkit::UserProfile profile =
            simkit::UserProfile::derive(user_id, config.tuning.seed, config.sim_epsilon);
        set.mllm = std::make_unique<simkit::MockVisionClassify>(
            std::move(profile), config.mllm.model.empty() ? "sim-classifier" : config.mllm.model);
    } else {
        HttpBackendConfig http{config.mllm.base_url, config.mllm.path, config.mllm.model,
                               config.mllm.auth_env, config.mllm.timeout_ms};
        set.mllm = std::make_unique<HttpVisionClassifyBackend>(http);
    }
    return set;
}

} // namespace vertune
