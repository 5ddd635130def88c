#include <doctest.h>

#include "vertune/datastore.hpp"
#include "vertune/errors.hpp"
#include "vertune/simkit.hpp"
#include "vertune/tuner.hpp"

#include <atomic>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

using namespace vertune;

namespace {

std::vector<Emotion> all_labels() {
    return {all_emotions().begin(), all_emotions().end()};
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE_MESSAGE(in.good(), "missing file: ", path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

std::filesystem::path fresh_dir(const std::string& name) {
    std::filesystem::path dir = std::filesystem::temp_directory_path() / "vertune_tests" / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

ScoredPrompt scored(std::string text, double acc, std::uint64_t seq) {
    ScoredPrompt p;
    p.text = std::move(text);
    p.accuracy = acc;
    p.created_seq = seq;
    return p;
}

// Answers correctly for an exact set of sample ids, wrongly otherwise.
struct FixedAnswerVision : VisionClassifyBackend {
    std::set<std::string> right_ids;
    std::atomic<int> calls{0};

    BackendIdentity identity() const override { return {"test", "fixed-vision"}; }

    std::string classify(const std::string& image_ref, const std::string&,
                         const DecodeParams&) override {
        calls.fetch_add(1);
        auto parsed = image_ref.find("awe") != std::string::npos ? "awe" : "fear";
        if (right_ids.count(image_ref)) return std::string("clearly ") + parsed;
        return "this looks happy";
    }
};

struct ScriptedLlm : TextGenBackend {
    std::vector<std::string> init_replies; // consumed per init call
    std::string mod_reply;                 // returned for every mod call
    int init_calls = 0;
    int mod_calls = 0;

    BackendIdentity identity() const override { return {"test", "scripted-llm"}; }

    std::string generate(const std::string& instruction, const DecodeParams&) override {
        if (instruction.rfind("I have two lists", 0) == 0) {
            ++mod_calls;
            return mod_reply;
        }
        std::string reply = init_replies.empty() ? "" : init_replies.front();
        if (init_replies.size() > 1) init_replies.erase(init_replies.begin());
        ++init_calls;
        return reply;
    }
};

struct SimBackends {
    simkit::MockTextGen llm;
    simkit::MockVisionClassify mllm;

    SimBackends(std::uint64_t seed, const std::string& user, double epsilon)
        : llm(seed), mllm(simkit::UserProfile::derive(user, seed, epsilon)) {}

    TuningContext context(Journal* journal = nullptr) {
        TuningContext ctx;
        ctx.llm = &llm;
        ctx.mllm = &mllm;
        ctx.journal = journal;
        return ctx;
    }
};

TuningConfig small_config(std::uint64_t seed) {
    TuningConfig config;
    config.n_initial = 3;
    config.t_modified = 2;
    config.k_select = 2;
    config.i1 = 4;
    config.i2 = 2;
    config.i3 = 2;
    config.h_vote = 3;
    config.seed = seed;
    return config;
}

bool same_pool(const PromptPool& a, const PromptPool& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const ScoredPrompt& x = a.entries()[i];
        const ScoredPrompt& y = b.entries()[i];
        if (x.text != y.text || x.accuracy != y.accuracy ||
            x.created_seq != y.created_seq || x.lineage.i3 != y.lineage.i3 ||
            x.lineage.i2 != y.lineage.i2 || x.lineage.i1 != y.lineage.i1 ||
            x.lineage.origin != y.lineage.origin) {
            return false;
        }
    }
    return true;
}

} // namespace

TEST_CASE("initial-generation instruction matches the golden transcription") {
    std::string rendered = render_init_template(6, all_labels());
    CHECK(rendered == read_file(std::filesystem::path(VERTUNE_GOLDEN_DIR) / "t_init.txt"));
    CHECK(rendered == render_init_template(6, all_labels()));

    std::string singular = render_init_template(1, {Emotion::fear});
    CHECK(singular.find("Please provide me with 1 diverse prompts") == 0);
    CHECK(singular.find("{fear}") != std::string::npos);
}

TEST_CASE("modification instruction matches the golden transcription") {
    std::vector<ScoredPrompt> good = {
        scored("You are a professional in emotion assessment. Decide which emotion this image "
               "evokes in the viewer.",
               0.5, 1),
        scored("You are an artist with a sharp eye for mood. Judge which emotion this image "
               "evokes in the viewer.",
               14.0 / 30.0, 2),
        scored("Identify which emotion this image evokes in the viewer. Consider the overall "
               "scene.",
               13.0 / 30.0, 3),
    };
    std::vector<ScoredPrompt> bad = {
        scored("Name which emotion this image evokes in the viewer.", 4.0 / 30.0, 4),
        scored("Assess which emotion this image evokes in the viewer.", 5.0 / 30.0, 5),
        scored("Judge which emotion this image evokes in the viewer. Do not hedge.", 0.2, 6),
    };
    std::string rendered = render_mod_template(good, bad, 5);
    CHECK(rendered == read_file(std::filesystem::path(VERTUNE_GOLDEN_DIR) / "t_mod.txt"));
    CHECK(rendered == render_mod_template(good, bad, 5));
    // 13/30 = 0.4333... renders as 0.433
    CHECK(rendered.find("(accuracy: 0.433)") != std::string::npos);

    CHECK_THROWS_AS(render_mod_template({}, bad, 5), PreconditionError);
}

TEST_CASE("prompt pool dedups by normalized text, keeping the earlier entry") {
    PromptPool pool;
    CHECK(pool.insert(scored("Judge the scene.", 0.5, 1)));
    CHECK_FALSE(pool.insert(scored("judge  the   SCENE.", 0.9, 2)));
    REQUIRE(pool.size() == 1);
    CHECK(pool.entries()[0].accuracy == 0.5);
    CHECK(pool.contains_text("JUDGE THE scene."));
    CHECK_FALSE(pool.contains_text("other"));
}

TEST_CASE("select_extremes picks disjoint tails when the pool is large enough") {
    PromptPool pool;
    for (int i = 0; i < 6; ++i) {
        pool.insert(scored("p" + std::to_string(i), 0.1 * (i + 1), i + 1));
    }
    Extremes ex = select_extremes(pool, 3);
    REQUIRE(ex.best.size() == 3);
    REQUIRE(ex.worst.size() == 3);
    CHECK(ex.best[0].text == "p5");
    CHECK(ex.best[1].text == "p4");
    CHECK(ex.best[2].text == "p3");
    CHECK(ex.worst[0].text == "p0");
    CHECK(ex.worst[1].text == "p1");
    CHECK(ex.worst[2].text == "p2");

    // element-wise dominance after sorting, lists disjoint here
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(ex.best[i].accuracy >= ex.worst[2 - i].accuracy);
    }
}

TEST_CASE("select_extremes overlaps and clamps on small pools") {
    PromptPool pool;
    pool.insert(scored("a", 0.4, 1));
    pool.insert(scored("b", 0.3, 2));
    pool.insert(scored("c", 0.2, 3));
    pool.insert(scored("d", 0.1, 4));
    Extremes ex = select_extremes(pool, 3);
    std::set<std::string> best_set, worst_set;
    for (const auto& p : ex.best) best_set.insert(p.text);
    for (const auto& p : ex.worst) worst_set.insert(p.text);
    CHECK(best_set.count("b"));
    CHECK(best_set.count("c"));
    CHECK(worst_set.count("b"));
    CHECK(worst_set.count("c"));

    PromptPool two;
    two.insert(scored("a", 0.4, 1));
    two.insert(scored("b", 0.3, 2));
    Extremes clamped = select_extremes(two, 3);
    CHECK(clamped.best.size() == 2);

    CHECK_THROWS_AS(select_extremes(PromptPool{}, 3), LogicError);
}

TEST_CASE("select_extremes breaks ties toward the older prompt") {
    PromptPool pool;
    pool.insert(scored("old-top", 0.5, 1));
    pool.insert(scored("new-top", 0.5, 2));
    pool.insert(scored("low", 0.1, 3));
    Extremes ex = select_extremes(pool, 1);
    CHECK(ex.best[0].text == "old-top");
    CHECK(ex.worst[0].text == "low");
}

TEST_CASE("score_prompt counts exact-label hits") {
    FixedAnswerVision vision;
    std::vector<LabeledSample> train;
    for (int i = 0; i < 30; ++i) {
        std::string id = "awe-" + std::to_string(i);
        train.push_back({id, id, "u", Emotion::awe});
        if (i < 9) vision.right_ids.insert(id);
    }
    TuningContext ctx;
    ctx.mllm = &vision;
    CHECK(score_prompt("judge", train, all_labels(), ctx) == doctest::Approx(0.3));
    CHECK(vision.calls.load() == 30);

    FixedAnswerVision abstainer; // answers "happy" for everything
    ctx.mllm = &abstainer;
    CHECK(score_prompt("judge", train, all_labels(), ctx) == 0.0);

    CHECK_THROWS_AS(score_prompt("judge", {}, all_labels(), ctx), PreconditionError);
}

TEST_CASE("score_prompt is order-independent under parallel fan-out") {
    SimBackends sim(11, "u01", 0.05);
    auto samples = simkit::make_synthetic_dataset(sim.mllm.profile(), 64);
    TuningContext ctx = sim.context();
    double serial = score_prompt("Judge which emotion this image evokes in the viewer.",
                                 samples, all_labels(), ctx);
    double parallel = score_prompt("Judge which emotion this image evokes in the viewer.",
                                   samples, all_labels(), ctx, 4);
    CHECK(serial == parallel);

    // reproducible across a fresh backend instance
    SimBackends sim2(11, "u01", 0.05);
    TuningContext ctx2 = sim2.context();
    CHECK(score_prompt("Judge which emotion this image evokes in the viewer.", samples,
                       all_labels(), ctx2) == serial);
}

TEST_CASE("run_tuning keeps the first n prompts when the generator over-produces") {
    ScriptedLlm llm;
    llm.init_replies = {"- p1\n- p2\n- p3\n- p4\n- p5\n- p6\n- p7\n- p8"};
    llm.mod_reply = "- m1\n- m2";
    FixedAnswerVision vision;
    std::vector<LabeledSample> train = {{"awe-1", "awe-1", "u", Emotion::awe},
                                        {"awe-2", "awe-2", "u", Emotion::awe}};

    TuningConfig config;
    config.n_initial = 6;
    config.t_modified = 5;
    config.k_select = 3;
    config.i1 = 1;
    config.i2 = 1;
    config.i3 = 1;
    config.seed = 1;

    TuningContext ctx;
    ctx.llm = &llm;
    ctx.mllm = &vision;
    PromptPool pool = run_tuning(config, train, all_labels(), ctx);

    // 6 of the 8 initial prompts plus 2 modified ones
    CHECK(pool.size() == 8);
    CHECK(pool.contains_text("p6"));
    CHECK_FALSE(pool.contains_text("p7"));
    CHECK(pool.contains_text("m2"));

    int initial = 0;
    for (const auto& p : pool.entries()) {
        if (p.lineage.origin == PromptOrigin::initial) ++initial;
    }
    CHECK(initial == 6);
}

TEST_CASE("run_tuning fails cleanly when no prompts can ever be extracted") {
    ScriptedLlm llm;
    llm.init_replies = {"prose without any dashes", "still no dashes"};
    FixedAnswerVision vision;
    std::vector<LabeledSample> train = {{"s", "s", "u", Emotion::awe}};

    TuningConfig config = small_config(1);
    TuningContext ctx;
    ctx.llm = &llm;
    ctx.mllm = &vision;
    CHECK_THROWS_AS(run_tuning(config, train, all_labels(), ctx), TuningSetupError);
    CHECK(llm.init_calls == 2);
}

TEST_CASE("modified prompts that echo existing ones do not grow the pool") {
    ScriptedLlm llm;
    llm.init_replies = {"- alpha\n- beta\n- gamma"};
    llm.mod_reply = "- ALPHA\n- beta"; // both already present modulo normalization
    FixedAnswerVision vision;
    std::vector<LabeledSample> train = {{"awe-1", "awe-1", "u", Emotion::awe}};

    TuningConfig config;
    config.n_initial = 3;
    config.t_modified = 5;
    config.k_select = 1;
    config.i1 = 3;
    config.i2 = 1;
    config.i3 = 1;
    config.seed = 9;

    TuningContext ctx;
    ctx.llm = &llm;
    ctx.mllm = &vision;
    PromptPool pool = run_tuning(config, train, all_labels(), ctx);
    CHECK(pool.size() == 3);
    CHECK(llm.mod_calls == 3);
}

TEST_CASE("failed modification generations skip the iteration, not the run") {
    auto dir = fresh_dir("tuner_mod_skip");
    ScriptedLlm llm;
    llm.init_replies = {"- alpha\n- beta\n- gamma"};
    llm.mod_reply = "no dash lines here, ever";
    FixedAnswerVision vision;
    std::vector<LabeledSample> train = {{"awe-1", "awe-1", "u", Emotion::awe}};

    TuningConfig config;
    config.n_initial = 3;
    config.t_modified = 2;
    config.k_select = 1;
    config.i1 = 4;
    config.i2 = 1;
    config.i3 = 1;
    config.seed = 2;

    Journal journal(dir / "run.journal", Journal::Clock::logical);
    TuningContext ctx;
    ctx.llm = &llm;
    ctx.mllm = &vision;
    ctx.journal = &journal;
    PromptPool pool = run_tuning(config, train, all_labels(), ctx);

    CHECK(pool.size() == 3); // nothing ever extracted from the generator
    CHECK(llm.mod_calls == 8); // one retry per iteration

    std::map<std::string, int> kinds;
    for (const auto& ev : read_journal(dir / "run.journal")) kinds[ev.kind] += 1;
    CHECK(kinds["mod_generation_failed"] == 4);
    CHECK(kinds["mod_prompts_generated"] == 0);
    CHECK(kinds["warning"] == 4);
    CHECK(kinds["iteration_finished"] == 4);
    CHECK(kinds["tuning_finished"] == 1);
}

TEST_CASE("run_tuning validates its configuration") {
    SimBackends sim(1, "u01", 0.05);
    auto samples = simkit::make_synthetic_dataset(sim.mllm.profile(), 16);
    TuningContext ctx = sim.context();
    TuningConfig config = small_config(1);
    config.i1 = 0;
    CHECK_THROWS_AS(run_tuning(config, samples, all_labels(), ctx), ConfigError);

    TuningConfig ok = small_config(1);
    CHECK_THROWS_AS(run_tuning(ok, {}, all_labels(), ctx), PreconditionError);
}

TEST_CASE("run_tuning follows the nested loop structure and journals it") {
    auto dir = fresh_dir("tuner_structure");
    SimBackends sim(42, "u01", 0.05);
    auto samples = simkit::make_synthetic_dataset(sim.mllm.profile(), 16);
    TuningConfig config = small_config(42);

    Journal journal(dir / "run.journal", Journal::Clock::logical);
    TuningContext ctx = sim.context(&journal);
    PromptPool pool = run_tuning(config, samples, all_labels(), ctx);

    // |pool| <= I3 * (N + I2*I1*T), every entry scored with lineage
    CHECK(pool.size() <= static_cast<std::size_t>(config.i3 *
                                                  (config.n_initial +
                                                   config.i2 * config.i1 * config.t_modified)));
    for (const auto& p : pool.entries()) {
        CHECK(p.accuracy >= 0.0);
        CHECK(p.accuracy <= 1.0);
        CHECK(p.created_seq >= 1);
        CHECK(p.lineage.i3 >= 1);
    }

    std::map<std::string, int> kinds;
    for (const auto& ev : read_journal(dir / "run.journal")) kinds[ev.kind] += 1;
    CHECK(kinds["run_started"] == 1);
    CHECK(kinds["init_prompts_generated"] == config.i3);
    CHECK(kinds["mod_prompts_generated"] == config.i3 * config.i2 * config.i1);
    CHECK(kinds["iteration_finished"] == config.i3 * config.i2 * config.i1);
    CHECK(kinds["rank_merged"] == config.i3 * config.i2);
    CHECK(kinds["tuning_finished"] == 1);
    CHECK(kinds["prompt_scored"] == static_cast<int>(pool.size()));
}

TEST_CASE("each distinct prompt is scored exactly once") {
    SimBackends sim(7, "u02", 0.05);
    auto samples = simkit::make_synthetic_dataset(sim.mllm.profile(), 16);
    TuningConfig config = small_config(7);

    // Count classifier calls through a forwarding wrapper.
    struct CountingVision : VisionClassifyBackend {
        simkit::MockVisionClassify* inner;
        std::atomic<int> calls{0};
        BackendIdentity identity() const override { return inner->identity(); }
        std::string classify(const std::string& image, const std::string& prompt,
                             const DecodeParams& decode) override {
            calls.fetch_add(1);
            return inner->classify(image, prompt, decode);
        }
    } counting;
    counting.inner = &sim.mllm;

    TuningContext ctx;
    ctx.llm = &sim.llm;
    ctx.mllm = &counting;
    PromptPool pool = run_tuning(config, samples, all_labels(), ctx);

    CHECK(counting.calls.load() ==
          static_cast<int>(pool.size() * samples.size()));
}

TEST_CASE("best training accuracy is non-decreasing within each lineage") {
    auto dir = fresh_dir("tuner_monotone");
    SimBackends sim(3, "u03", 0.05);
    auto samples = simkit::make_synthetic_dataset(sim.mllm.profile(), 24);
    TuningConfig config = small_config(3);

    Journal journal(dir / "run.journal", Journal::Clock::logical);
    TuningContext ctx = sim.context(&journal);
    run_tuning(config, samples, all_labels(), ctx);

    std::map<std::pair<int, int>, double> best_so_far;
    for (const auto& ev : read_journal(dir / "run.journal")) {
        if (ev.kind != "iteration_finished") continue;
        auto key = std::make_pair(ev.payload.at("i3").get<int>(), ev.payload.at("i2").get<int>());
        double best = ev.payload.at("best_accuracy").get<double>();
        auto it = best_so_far.find(key);
        if (it != best_so_far.end()) CHECK(best >= it->second);
        best_so_far[key] = best;
    }
    CHECK(best_so_far.size() == static_cast<std::size_t>(config.i3 * config.i2));
}

TEST_CASE("run_tuning is bit-reproducible for a fixed seed") {
    SimBackends a(21, "u04", 0.05);
    auto samples = simkit::make_synthetic_dataset(a.mllm.profile(), 16);
    TuningConfig config = small_config(21);
    TuningContext ctx_a = a.context();
    PromptPool pool_a = run_tuning(config, samples, all_labels(), ctx_a);

    SimBackends b(21, "u04", 0.05);
    TuningContext ctx_b = b.context();
    PromptPool pool_b = run_tuning(config, samples, all_labels(), ctx_b);

    CHECK(same_pool(pool_a, pool_b));

    // A different seed explores differently.
    SimBackends c(22, "u04", 0.05);
    TuningConfig other = small_config(22);
    TuningContext ctx_c = c.context();
    PromptPool pool_c = run_tuning(other, samples, all_labels(), ctx_c);
    CHECK_FALSE(same_pool(pool_a, pool_c));
}

TEST_CASE("a crashed run resumes into a byte-identical journal") {
    auto dir = fresh_dir("tuner_resume");
    TuningConfig config = small_config(5);

    auto run_with = [&](const std::filesystem::path& path,
                        std::optional<std::uint64_t> crash_after) {
        SimBackends sim(5, "u05", 0.05);
        auto samples = simkit::make_synthetic_dataset(sim.mllm.profile(), 16);
        Journal journal(path, Journal::Clock::logical);
        if (crash_after) journal.set_append_limit(*crash_after);
        TuningContext ctx = sim.context(&journal);
        return run_tuning(config, samples, all_labels(), ctx);
    };

    PromptPool golden = run_with(dir / "golden.journal", std::nullopt);

    bool crashed = false;
    try {
        run_with(dir / "crash.journal", 25);
    } catch (const JournalCrashForTesting&) {
        crashed = true;
    }
    REQUIRE(crashed);
    CHECK(read_journal(dir / "crash.journal").size() == 25);

    PromptPool resumed = run_with(dir / "crash.journal", std::nullopt);
    CHECK(same_pool(golden, resumed));

    std::string golden_bytes = read_file(dir / "golden.journal");
    std::string resumed_bytes = read_file(dir / "crash.journal");
    CHECK(golden_bytes == resumed_bytes);
}

TEST_CASE("resume across a torn final line recovers and matches the golden run") {
    auto dir = fresh_dir("tuner_torn");
    TuningConfig config = small_config(6);

    auto run_with = [&](const std::filesystem::path& path) {
        SimBackends sim(6, "u06", 0.05);
        auto samples = simkit::make_synthetic_dataset(sim.mllm.profile(), 16);
        Journal journal(path, Journal::Clock::logical);
        TuningContext ctx = sim.context(&journal);
        return run_tuning(config, samples, all_labels(), ctx);
    };

    PromptPool golden = run_with(dir / "golden.journal");
    std::string bytes = read_file(dir / "golden.journal");

    // Chop the file mid-way through its final line.
    std::string torn = bytes.substr(0, bytes.size() - 40);
    {
        std::ofstream out(dir / "torn.journal", std::ios::binary | std::ios::trunc);
        out << torn;
    }
    PromptPool resumed = run_with(dir / "torn.journal");
    CHECK(same_pool(golden, resumed));
    CHECK(read_file(dir / "torn.journal") == bytes);
}

TEST_CASE("a journal from a different configuration refuses to resume") {
    auto dir = fresh_dir("tuner_mismatch");
    TuningConfig config = small_config(8);
    {
        SimBackends sim(8, "u07", 0.05);
        auto samples = simkit::make_synthetic_dataset(sim.mllm.profile(), 16);
        Journal journal(dir / "run.journal", Journal::Clock::logical);
        TuningContext ctx = sim.context(&journal);
        run_tuning(config, samples, all_labels(), ctx);
    }
    SimBackends sim(8, "u07", 0.05);
    auto samples = simkit::make_synthetic_dataset(sim.mllm.profile(), 16);
    Journal journal(dir / "run.journal", Journal::Clock::logical);
    TuningConfig other = config;
    other.seed = 999;
    TuningContext ctx = sim.context(&journal);
    CHECK_THROWS_AS(run_tuning(other, samples, all_labels(), ctx), JournalError);
}

TEST_CASE("the pool rebuilt from a finished journal equals the returned pool") {
    auto dir = fresh_dir("tuner_pool_replay");
    SimBackends sim(13, "u08", 0.05);
    auto samples = simkit::make_synthetic_dataset(sim.mllm.profile(), 16);
    TuningConfig config = small_config(13);

    PromptPool returned;
    {
        Journal journal(dir / "run.journal", Journal::Clock::logical);
        TuningContext ctx = sim.context(&journal);
        returned = run_tuning(config, samples, all_labels(), ctx);
    }
    auto events = read_journal(dir / "run.journal");
    REQUIRE(journal_has_finished_tuning(events));
    PromptPool rebuilt = pool_from_journal(events);
    CHECK(same_pool(returned, rebuilt));

    // The event-fold route (ignoring the final listing) agrees as well.
    std::vector<JournalEvent> without_final;
    for (const auto& ev : events) {
        if (ev.kind != "tuning_finished") without_final.push_back(ev);
    }
    PromptPool folded = pool_from_journal(without_final);
    CHECK(same_pool(returned, folded));
}

TEST_CASE("degenerate single-iteration run holds initial plus one batch of mods") {
    SimBackends sim(17, "u09", 0.05);
    auto samples = simkit::make_synthetic_dataset(sim.mllm.profile(), 16);
    TuningConfig config;
    config.n_initial = 6;
    config.t_modified = 5;
    config.k_select = 3;
    config.i1 = 1;
    config.i2 = 1;
    config.i3 = 1;
    config.seed = 17;
    TuningContext ctx = sim.context();
    PromptPool pool = run_tuning(config, samples, all_labels(), ctx);
    CHECK(pool.size() >= 6);
    CHECK(pool.size() <= 11);
}
