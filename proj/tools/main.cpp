#include "vertune/config.hpp"
#include "vertune/datastore.hpp"
#include "vertune/errors.hpp"
#include "vertune/inference.hpp"
#include "vertune/metrics.hpp"
#include "vertune/simkit.hpp"
#include "vertune/text.hpp"
#include "vertune/tuner.hpp"

#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

using namespace vertune;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitBackend = 2;
constexpr int kExitData = 3;

int exit_code_for(const Error& e) {
    switch (e.kind()) {
        case ErrorKind::backend:
        case ErrorKind::protocol:
        case ErrorKind::tuning_setup:
        case ErrorKind::scoring:
        case ErrorKind::extraction:
            return kExitBackend;
        case ErrorKind::data:
        case ErrorKind::input:
        case ErrorKind::journal:
        case ErrorKind::inference_setup:
        case ErrorKind::empty_evaluation:
            return kExitData;
        default:
            return kExitUsage;
    }
}

struct CommonOptions {
    std::string config_path;
    std::string user;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> manifest;
    std::optional<std::string> journal_dir;
    std::optional<std::string> output_dir;
    std::optional<std::string> cache_dir;
    std::optional<int> parallelism;
};

RunConfig resolve_config(const CommonOptions& opts) {
    RunConfig config =
        opts.config_path.empty() ? RunConfig::defaults() : RunConfig::load(opts.config_path);
    if (opts.seed) config.tuning.seed = *opts.seed;
    if (opts.manifest) config.manifest = *opts.manifest;
    if (opts.journal_dir) config.journal_dir = *opts.journal_dir;
    if (opts.output_dir) config.output_dir = *opts.output_dir;
    if (opts.cache_dir) config.cache_dir = *opts.cache_dir;
    if (opts.parallelism) config.tuning.parallelism = *opts.parallelism;
    config.tuning.validate();
    return config;
}

std::vector<LabeledSample> user_samples_or_die(const RunConfig& config,
                                               const std::string& user) {
    if (config.manifest.empty()) {
        throw ConfigError("no manifest configured; set data.manifest or pass --manifest");
    }
    auto samples = load_manifest(config.manifest);
    auto mine = samples_for_user(samples, user);
    if (mine.empty()) {
        std::string available;
        for (const std::string& u : manifest_users(samples)) {
            if (!available.empty()) available += ", ";
            available += u;
        }
        throw DataError("user '" + user + "' not found in manifest; available users: " +
                        (available.empty() ? "(none)" : available));
    }
    return mine;
}

Journal::Clock clock_for(const RunConfig& config) {
    return config.fully_mocked() ? Journal::Clock::logical : Journal::Clock::wall;
}

struct Session {
    BackendSet backends;
    std::unique_ptr<ResponseCache> cache;
    TuningContext ctx;
};

Session make_session(const RunConfig& config, const std::string& user, Journal* journal) {
    Session s{make_backends(config, user), nullptr, {}};
    if (!config.cache_dir.empty()) {
        s.cache = std::make_unique<ResponseCache>(config.cache_dir);
    }
    s.ctx.llm = s.backends.llm.get();
    s.ctx.mllm = s.backends.mllm.get();
    s.ctx.cache = s.cache.get();
    s.ctx.journal = journal;
    s.ctx.llm_retry = config.llm.retry_policy();
    s.ctx.mllm_retry = config.mllm.retry_policy();
    s.ctx.llm_temperature = config.llm.temperature;
    s.ctx.mllm_temperature = config.mllm.temperature;
    s.ctx.llm_max_tokens = config.llm.max_tokens;
    s.ctx.mllm_max_tokens = config.mllm.max_tokens;
    return s;
}

nlohmann::json label_json(const std::optional<Emotion>& label) {
    return label ? nlohmann::json(std::string(emotion_name(*label))) : nlohmann::json(nullptr);
}

void write_prompt_summary(const std::filesystem::path& path, const PromptPool& pool) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    int rank = 1;
    for (const ScoredPrompt& p : pool.ranked()) {
        nlohmann::json rec = {
            {"rank", rank++},
            {"accuracy", p.accuracy},
            {"text", p.text},
            {"origin", p.lineage.origin == PromptOrigin::initial ? "initial" : "modified"},
            {"i3", p.lineage.i3},
            {"i2", p.lineage.i2},
            {"i1", p.lineage.i1},
            {"seq", p.created_seq},
        };
        out << rec.dump() << '\n';
    }
}

void write_votes(const std::filesystem::path& path, const std::vector<VoteRecord>& votes,
                 const std::vector<LabeledSample>& samples) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    for (std::size_t i = 0; i < votes.size(); ++i) {
        const VoteRecord& v = votes[i];
        nlohmann::json entries = nlohmann::json::array();
        for (const VoteEntry& e : v.entries) {
            entries.push_back({{"prompt_seq", e.prompt_seq},
                               {"accuracy", e.prompt_accuracy},
                               {"prompt", e.prompt_text},
                               {"output", label_json(e.output.label)}});
        }
        nlohmann::json rec = {
            {"sample_id", v.sample_id},
            {"final", label_json(v.final)},
            {"truth", std::string(emotion_name(samples[i].label))},
            {"correct", v.final && *v.final == samples[i].label},
            {"entries", entries},
        };
        out << rec.dump() << '\n';
    }
}

void write_confusion(const std::filesystem::path& path, const std::string& user,
                     const ConfusionMatrix& cm) {
    std::filesystem::create_directories(path.parent_path());
    nlohmann::json labels = nlohmann::json::array();
    for (Emotion e : all_emotions()) labels.push_back(std::string(emotion_name(e)));
    nlohmann::json counts = nlohmann::json::array();
    nlohmann::json non_target = nlohmann::json::array();
    for (Emotion a : all_emotions()) {
        nlohmann::json row = nlohmann::json::array();
        for (Emotion b : all_emotions()) row.push_back(cm.count(a, b));
        counts.push_back(row);
        non_target.push_back(cm.non_target_count(a));
    }
    nlohmann::json body = {
        {"user", user},
        {"labels", labels},
        {"counts", counts},
        {"non_target", non_target},
        {"n_test", cm.n_test()},
        {"n_correct", cm.n_correct()},
    };
    std::ofstream out(path, std::ios::trunc);
    out << body.dump(2) << '\n';
}

std::pair<std::string, ConfusionMatrix> read_confusion(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open confusion file: " + path.string());
    nlohmann::json body;
    try {
        body = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("confusion file " + path.string() + ": " + e.what());
    }
    ConfusionMatrix cm;
    try {
        const auto& labels = body.at("labels");
        for (std::size_t i = 0; i < kEmotionCount; ++i) {
            if (labels.at(i).get<std::string>() !=
                emotion_name(static_cast<Emotion>(i))) {
                throw DataError("confusion file " + path.string() +
                                ": label order differs from the canonical one");
            }
        }
        const auto& counts = body.at("counts");
        const auto& non_target = body.at("non_target");
        for (std::size_t a = 0; a < kEmotionCount; ++a) {
            for (std::size_t b = 0; b < kEmotionCount; ++b) {
                std::uint64_t n = counts.at(a).at(b).get<std::uint64_t>();
                for (std::uint64_t i = 0; i < n; ++i) {
                    cm.add_target(static_cast<Emotion>(a), static_cast<Emotion>(b));
                }
            }
            std::uint64_t nt = non_target.at(a).get<std::uint64_t>();
            for (std::uint64_t i = 0; i < nt; ++i) cm.add_non_target(static_cast<Emotion>(a));
        }
        return {body.at("user").get<std::string>(), cm};
    } catch (const nlohmann::json::exception& e) {
        throw DataError("confusion file " + path.string() + " is malformed: " + e.what());
    }
}

// --- commands ---------------------------------------------------------------

int cmd_tune(const CommonOptions& opts) {
    RunConfig config = resolve_config(opts);
    auto samples = user_samples_or_die(config, opts.user);
    SplitResult parts = split(samples, config.split_spec);

    Journal journal(config.journal_path(opts.user), clock_for(config));
    if (journal.replayed().empty()) {
        for (const std::string& w : parts.warnings) {
            journal.append("warning", {{"message", w}});
        }
    }

    Session session = make_session(config, opts.user, &journal);
    PromptPool pool = run_tuning(config.tuning, parts.train, config.labels(), session.ctx);

    std::filesystem::path summary =
        std::filesystem::path(config.output_dir) / (opts.user + "_prompts.jsonl");
    write_prompt_summary(summary, pool);

    std::cout << "tuned " << pool.size() << " prompts for " << opts.user << " over "
              << parts.train.size() << " training samples\n";
    int shown = 0;
    for (const ScoredPrompt& p : pool.ranked()) {
        if (shown++ == 5) break;
        std::string text = p.text.size() > 96 ? p.text.substr(0, 93) + "..." : p.text;
        std::cout << "  " << format_fixed(p.accuracy, 3) << "  " << text << "\n";
    }
    std::cout << "prompt table: " << summary.string() << "\n";
    std::cout << "journal: " << journal.path().string() << "\n";
    return kExitOk;
}

int cmd_infer(const CommonOptions& opts, const std::string& image,
              const std::string& test_manifest) {
    RunConfig config = resolve_config(opts);
    auto samples = user_samples_or_die(config, opts.user);

    std::filesystem::path journal_file = config.journal_path(opts.user);
    if (!std::filesystem::exists(journal_file)) {
        throw DataError("no tuning journal for '" + opts.user + "' at " +
                        journal_file.string() + "; run 'vertune tune' first");
    }
    if (!journal_has_finished_tuning(read_journal(journal_file))) {
        throw DataError("tuning journal for '" + opts.user +
                        "' is incomplete; re-run 'vertune tune' to finish it");
    }

    SplitResult parts = split(samples, config.split_spec);
    Journal journal(journal_file, clock_for(config));
    Session session = make_session(config, opts.user, &journal);

    // Replaying the tuning stage validates the configuration fingerprint and
    // rebuilds the scored pool without touching any backend.
    PromptPool pool = run_tuning(config.tuning, parts.train, config.labels(), session.ctx);

    if (!image.empty()) {
        VoteRecord record = infer(image, pool, config.tuning, config.labels(), session.ctx);
        nlohmann::json entries = nlohmann::json::array();
        for (const VoteEntry& e : record.entries) {
            entries.push_back({{"prompt_seq", e.prompt_seq},
                               {"accuracy", e.prompt_accuracy},
                               {"prompt", e.prompt_text},
                               {"output", label_json(e.output.label)}});
        }
        nlohmann::json rec = {
            {"sample_id", record.sample_id},
            {"final", label_json(record.final)},
            {"entries", entries},
        };
        std::cout << rec.dump() << "\n";
        return kExitOk;
    }

    std::vector<LabeledSample> test;
    if (!test_manifest.empty()) {
        test = samples_for_user(load_manifest(test_manifest), opts.user);
        if (test.empty()) {
            throw DataError("user '" + opts.user + "' has no samples in " + test_manifest);
        }
    } else {
        test = parts.test;
    }

    BatchInferenceResult result =
        run_batch_inference(test, pool, config.tuning, config.labels(), session.ctx);

    std::filesystem::path votes_file =
        std::filesystem::path(config.output_dir) / (opts.user + "_votes.jsonl");
    std::filesystem::path confusion_file =
        std::filesystem::path(config.output_dir) / (opts.user + "_confusion.json");
    write_votes(votes_file, result.votes, test);
    write_confusion(confusion_file, opts.user, result.confusion);

    std::cout << "inferred " << test.size() << " images for " << opts.user
              << "; held-out accuracy " << format_fixed(accuracy(result.confusion), 4) << "\n";
    std::cout << "votes: " << votes_file.string() << "\n";
    std::cout << "confusion: " << confusion_file.string() << "\n";
    return kExitOk;
}

int cmd_evaluate(const CommonOptions& opts, const std::vector<std::string>& confusion_files) {
    RunConfig config = resolve_config(opts);
    if (confusion_files.empty()) {
        throw UsageError("evaluate needs at least one confusion file");
    }
    EmotionWheel wheel = config.wheel.build();
    std::vector<MetricReport> reports;
    for (const std::string& file : confusion_files) {
        auto [user, cm] = read_confusion(file);
        reports.push_back(evaluate(cm, wheel, user));
    }
    AggregateReport agg = aggregate(reports);

    std::filesystem::path metrics_file =
        std::filesystem::path(config.output_dir) / "metrics.jsonl";
    std::filesystem::create_directories(metrics_file.parent_path());
    {
        std::ofstream out(metrics_file, std::ios::trunc);
        out << render_metrics_jsonl(reports, agg);
    }
    std::cout << render_metrics_table(reports, agg);
    std::cout << "report: " << metrics_file.string() << "\n";
    return kExitOk;
}

int cmd_simulate(const CommonOptions& opts, int users, int size, bool scarce_anger,
                 const std::string& out_path) {
    RunConfig config = resolve_config(opts);
    if (users < 1) throw UsageError("--users must be at least 1");
    std::vector<LabeledSample> all;
    for (int u = 1; u <= users; ++u) {
        char name[16];
        std::snprintf(name, sizeof(name), "u%02d", u);
        simkit::UserProfile profile =
            simkit::UserProfile::derive(name, config.tuning.seed, config.sim_epsilon);
        auto samples = simkit::make_synthetic_dataset(
            profile, static_cast<std::size_t>(size),
            scarce_anger ? simkit::DatasetShape::anger_scarce
                         : simkit::DatasetShape::balanced);
        all.insert(all.end(), samples.begin(), samples.end());
    }
    std::filesystem::path path =
        out_path.empty() ? std::filesystem::path(config.output_dir) / "manifest.jsonl"
                         : std::filesystem::path(out_path);
    save_manifest(path, all);
    std::cout << "wrote " << all.size() << " samples for " << users << " users to "
              << path.string() << "\n";
    return kExitOk;
}

int cmd_report(const std::string& journal_file) {
    auto events = read_journal(journal_file);
    if (events.empty()) {
        throw DataError("journal is empty: " + journal_file);
    }
    std::map<std::string, int> kinds;
    for (const JournalEvent& ev : events) kinds[ev.kind] += 1;

    std::cout << "journal: " << journal_file << "\n";
    std::cout << "events: " << events.size() << "\n";
    for (const auto& [kind, count] : kinds) {
        std::cout << "  " << kind << ": " << count << "\n";
    }

    PromptPool pool = pool_from_journal(events);
    if (!pool.empty()) {
        std::cout << "prompts: " << pool.size() << "\n";
        int shown = 0;
        for (const ScoredPrompt& p : pool.ranked()) {
            if (shown++ == 5) break;
            std::string text = p.text.size() > 96 ? p.text.substr(0, 93) + "..." : p.text;
            std::cout << "  " << format_fixed(p.accuracy, 3) << "  " << text << "\n";
        }
    }

    // Best training accuracy per refinement step, for plotting.
    for (const JournalEvent& ev : events) {
        if (ev.kind != "iteration_finished") continue;
        std::cout << "trace i3=" << ev.payload.at("i3").get<int>()
                  << " i2=" << ev.payload.at("i2").get<int>()
                  << " i1=" << ev.payload.at("i1").get<int>() << " best="
                  << format_fixed(ev.payload.at("best_accuracy").get<double>(), 4) << "\n";
    }
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"personalized visual emotion recognition via discrete prompt tuning"};
    app.require_subcommand(1);

    CommonOptions opts;
    std::string image, test_manifest, journal_file, sim_out;
    std::vector<std::string> confusion_files;
    int sim_users = 3, sim_size = 136;
    bool scarce_anger = false;

    auto add_common = [&](CLI::App* cmd, bool with_user) {
        cmd->add_option("--config", opts.config_path, "run configuration file (json)");
        if (with_user) {
            cmd->add_option("--user", opts.user, "target user id")->required();
        }
        cmd->add_option("--seed", opts.seed, "override tuning.seed");
        cmd->add_option("--manifest", opts.manifest, "override data.manifest");
        cmd->add_option("--journal-dir", opts.journal_dir, "override paths.journal_dir");
        cmd->add_option("--output-dir", opts.output_dir, "override paths.output_dir");
        cmd->add_option("--cache-dir", opts.cache_dir, "override paths.cache_dir");
        cmd->add_option("--parallelism", opts.parallelism, "override tuning.parallelism");
    };

    CLI::App* tune = app.add_subcommand("tune", "search for the best prompts for one user");
    add_common(tune, true);

    CLI::App* infer_cmd =
        app.add_subcommand("infer", "classify test images with the tuned prompts");
    add_common(infer_cmd, true);
    infer_cmd->add_option("--image", image, "classify a single image reference instead");
    infer_cmd->add_option("--test-manifest", test_manifest,
                          "classify this manifest instead of the held-out split");

    CLI::App* evaluate_cmd =
        app.add_subcommand("evaluate", "compute accuracy/ecc/emc from confusion files");
    add_common(evaluate_cmd, false);
    evaluate_cmd->add_option("files", confusion_files, "confusion json files");

    CLI::App* simulate_cmd =
        app.add_subcommand("simulate", "write a synthetic dataset manifest");
    add_common(simulate_cmd, false);
    simulate_cmd->add_option("--users", sim_users, "number of synthetic users");
    simulate_cmd->add_option("--size", sim_size, "samples per user");
    simulate_cmd->add_flag("--scarce-anger", scarce_anger, "inject anger scarcity");
    simulate_cmd->add_option("--out", sim_out, "manifest output path");

    CLI::App* report_cmd = app.add_subcommand("report", "summarize a run journal");
    report_cmd->add_option("--journal", journal_file, "journal file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (tune->parsed()) return cmd_tune(opts);
        if (infer_cmd->parsed()) return cmd_infer(opts, image, test_manifest);
        if (evaluate_cmd->parsed()) return cmd_evaluate(opts, confusion_files);
        if (simulate_cmd->parsed()) {
            return cmd_simulate(opts, sim_users, sim_size, scarce_anger, sim_out);
        }
        if (report_cmd->parsed()) return cmd_report(journal_file);
        throw UsageError("no subcommand given");
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitUsage;
    }
}
