#include "vertune/datastore.hpp"

#include "vertune/errors.hpp"
#include "vertune/hash.hpp"
#include "vertune/text.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

namespace vertune {

namespace {

LabeledSample parse_manifest_row(const nlohmann::json& rec, std::size_t row) {
    static const std::set<std::string> kFields = {"sample_id", "image", "user_id", "label"};
    if (!rec.is_object()) {
        throw DataError("manifest row " + std::to_string(row) + ": not a record");
    }
    for (auto it = rec.begin(); it != rec.end(); ++it) {
        if (!kFields.count(it.key())) {
            throw DataError("manifest row " + std::to_string(row) + ": unknown field '" +
                            it.key() + "'");
        }
    }
    for (const std::string& field : kFields) {
        if (!rec.contains(field) || !rec.at(field).is_string()) {
            throw DataError("manifest row " + std::to_string(row) + ": missing string field '" +
                            field + "'");
        }
    }
    LabeledSample sample;
    sample.sample_id = rec.at("sample_id").get<std::string>();
    sample.image = rec.at("image").get<std::string>();
    sample.user_id = rec.at("user_id").get<std::string>();
    std::string label_text = rec.at("label").get<std::string>();
    auto label = emotion_from_name(label_text);
    if (!label) {
        throw DataError("manifest row " + std::to_string(row) + ": label '" + label_text +
                        "' is not one of the target labels");
    }
    sample.label = *label;
    return sample;
}

} // namespace

std::vector<LabeledSample> load_manifest(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) {
        throw DataError("cannot open manifest: " + file.string());
    }
    std::vector<LabeledSample> samples;
    std::map<std::pair<std::string, std::string>, std::size_t> seen;
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError("manifest row " + std::to_string(row) + ": parse error: " + e.what());
        }
        LabeledSample sample = parse_manifest_row(rec, row);
        auto key = std::make_pair(sample.sample_id, sample.user_id);
        auto inserted = seen.emplace(key, row);
        if (!inserted.second) {
            throw DataError("manifest rows " + std::to_string(inserted.first->second) + " and " +
                            std::to_string(row) + ": duplicate (sample_id, user_id) key (" +
                            sample.sample_id + ", " + sample.user_id + ")");
        }
        samples.push_back(std::move(sample));
    }
    return samples;
}

void save_manifest(const std::filesystem::path& file,
                   const std::vector<LabeledSample>& samples) {
    if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
    std::ofstream out(file, std::ios::trunc);
    if (!out) {
        throw DataError("cannot write manifest: " + file.string());
    }
    for (const LabeledSample& s : samples) {
        nlohmann::json rec = {
            {"sample_id", s.sample_id},
            {"image", s.image},
            {"user_id", s.user_id},
            {"label", std::string(emotion_name(s.label))},
        };
        out << rec.dump() << '\n';
    }
}

std::vector<std::string> manifest_users(const std::vector<LabeledSample>& samples) {
    std::vector<std::string> users;
    std::set<std::string> seen;
    for (const LabeledSample& s : samples) {
        if (seen.insert(s.user_id).second) users.push_back(s.user_id);
    }
    return users;
}

std::vector<LabeledSample> samples_for_user(const std::vector<LabeledSample>& samples,
                                            const std::string& user_id) {
    std::vector<LabeledSample> out;
    for (const LabeledSample& s : samples) {
        if (s.user_id == user_id) out.push_back(s);
    }
    return out;
}

namespace {

// Banker's rounding: unbiased over many users.
std::size_t round_half_even(double x) {
    double floor_x = std::floor(x);
    double frac = x - floor_x;
    if (frac > 0.5) return static_cast<std::size_t>(floor_x) + 1;
    if (frac < 0.5) return static_cast<std::size_t>(floor_x);
    auto lower = static_cast<std::size_t>(floor_x);
    return (lower % 2 == 0) ? lower : lower + 1;
}

void keyed_shuffle(std::vector<std::size_t>& idx, KeyedRng& rng) {
    for (std::size_t i = idx.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.next_below(i));
        std::swap(idx[i - 1], idx[j]);
    }
}

} // namespace

SplitResult split(const std::vector<LabeledSample>& user_samples, const SplitSpec& spec) {
    if (user_samples.size() < 2) {
        throw PreconditionError("split requires at least 2 samples, got " +
                                std::to_string(user_samples.size()));
    }
    if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
        throw ConfigError("train_fraction must lie strictly between 0 and 1");
    }

    SplitResult result;
    const std::size_t n = user_samples.size();
    const std::size_t want_train = round_half_even(spec.train_fraction * static_cast<double>(n));

    KeyedRng rng(spec.seed);
    rng.mix("split").mix(user_samples.front().user_id);

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    keyed_shuffle(order, rng);

    if (!spec.stratified) {
        for (std::size_t i = 0; i < n; ++i) {
            (i < want_train ? result.train : result.test).push_back(user_samples[order[i]]);
        }
        return result;
    }

    // Group shuffled indices per label, preserving shuffle order inside each.
    std::map<Emotion, std::vector<std::size_t>> by_label;
    for (std::size_t i : order) by_label[user_samples[i].label].push_back(i);

    // Singleton labels are forced into train so no class vanishes from it.
    std::size_t forced = 0;
    for (auto& [label, idx] : by_label) {
        if (idx.size() == 1) {
            result.train.push_back(user_samples[idx.front()]);
            result.warnings.push_back("label '" + std::string(emotion_name(label)) +
                                      "' has a single sample; assigned to train");
            idx.clear();
            ++forced;
        }
    }

    std::size_t remaining_quota = want_train > forced ? want_train - forced : 0;
    std::size_t remaining_total = n - forced;

    // Largest-remainder allocation of the remaining train quota.
    struct Alloc {
        Emotion label;
        std::size_t base;
        double remainder;
    };
    std::vector<Alloc> allocs;
    std::size_t base_sum = 0;
    for (const auto& [label, idx] : by_label) {
        if (idx.empty()) continue;
        double exact = remaining_total == 0
                           ? 0.0
                           : static_cast<double>(remaining_quota) *
                                 (static_cast<double>(idx.size()) /
                                  static_cast<double>(remaining_total));
        std::size_t base = std::min(static_cast<std::size_t>(std::floor(exact)), idx.size());
        allocs.push_back({label, base, exact - std::floor(exact)});
        base_sum += base;
    }
    std::size_t leftover = remaining_quota > base_sum ? remaining_quota - base_sum : 0;
    std::stable_sort(allocs.begin(), allocs.end(), [](const Alloc& a, const Alloc& b) {
        if (a.remainder != b.remainder) return a.remainder > b.remainder;
        return static_cast<int>(a.label) < static_cast<int>(b.label);
    });
    for (Alloc& a : allocs) {
        if (leftover == 0) break;
        if (a.base < by_label[a.label].size()) {
            ++a.base;
            --leftover;
        }
    }

    std::sort(allocs.begin(), allocs.end(), [](const Alloc& a, const Alloc& b) {
        return static_cast<int>(a.label) < static_cast<int>(b.label);
    });
    for (const Alloc& a : allocs) {
        const std::vector<std::size_t>& idx = by_label[a.label];
        for (std::size_t i = 0; i < idx.size(); ++i) {
            (i < a.base ? result.train : result.test).push_back(user_samples[idx[i]]);
        }
    }
    return result;
}

// --- journal ---------------------------------------------------------------

namespace {

std::optional<JournalEvent> parse_event_line(const std::string& line) {
    nlohmann::json rec;
    try {
        rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
        return std::nullopt;
    }
    if (!rec.is_object() || !rec.contains("i") || !rec.contains("ts") || !rec.contains("kind") ||
        !rec.contains("payload")) {
        return std::nullopt;
    }
    JournalEvent ev;
    try {
        ev.index = rec.at("i").get<std::uint64_t>();
        ev.timestamp = rec.at("ts").get<std::uint64_t>();
        ev.kind = rec.at("kind").get<std::string>();
        ev.payload = rec.at("payload");
    } catch (const nlohmann::json::exception&) {
        return std::nullopt;
    }
    return ev;
}

// Reads events until EOF or the first invalid line; returns the byte offset
// of the valid prefix.
std::pair<std::vector<JournalEvent>, std::uint64_t> scan_journal(
    const std::filesystem::path& file) {
    std::vector<JournalEvent> events;
    std::uint64_t valid_bytes = 0;
    std::ifstream in(file, std::ios::binary);
    if (!in) return {events, 0};
    std::string line;
    while (std::getline(in, line)) {
        bool had_newline = !in.eof();
        if (!had_newline) {
            // Final line lacks its terminator: treat as a partial write.
            break;
        }
        auto ev = parse_event_line(line);
        if (!ev || ev->index != events.size()) break;
        events.push_back(std::move(*ev));
        valid_bytes += line.size() + 1;
    }
    return {events, valid_bytes};
}

} // namespace

std::vector<JournalEvent> read_journal(const std::filesystem::path& file) {
    if (!std::filesystem::exists(file)) {
        throw DataError("journal not found: " + file.string());
    }
    return scan_journal(file).first;
}

Journal::Journal(const std::filesystem::path& file, Clock clock)
    : path_(file), clock_(clock) {
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());

    auto [events, valid_bytes] = scan_journal(path_);
    replayed_ = std::move(events);
    next_index_ = replayed_.size();

    fd_ = ::open(path_.c_str(), O_RDWR | O_CREAT, 0644);
    if (fd_ < 0) {
        throw JournalError("cannot open journal: " + path_.string());
    }
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
        ::close(fd_);
        fd_ = -1;
        throw JournalError("journal is locked by another run: " + path_.string());
    }
    // Drop any partial trailing line left by a crash mid-write.
    if (::ftruncate(fd_, static_cast<off_t>(valid_bytes)) != 0) {
        ::flock(fd_, LOCK_UN);
        ::close(fd_);
        fd_ = -1;
        throw JournalError("cannot truncate journal tail: " + path_.string());
    }
    ::lseek(fd_, 0, SEEK_END);
}

Journal::~Journal() {
    if (fd_ >= 0) {
        ::flock(fd_, LOCK_UN);
        ::close(fd_);
    }
}

std::uint64_t Journal::append(const std::string& kind, nlohmann::json payload) {
    if (append_limit_ && appended_ >= *append_limit_) {
        throw JournalCrashForTesting{};
    }
    std::uint64_t ts;
    if (clock_ == Clock::logical) {
        ts = next_index_;
    } else {
        ts = static_cast<std::uint64_t>(
            std::chrono::duration_cast<std::chrono::milliseconds>(
                std::chrono::system_clock::now().time_since_epoch())
                .count());
    }
    nlohmann::json rec = {
        {"i", next_index_}, {"ts", ts}, {"kind", kind}, {"payload", std::move(payload)}};
    std::string line = rec.dump();
    line.push_back('\n');
    ssize_t written = ::write(fd_, line.data(), line.size());
    if (written != static_cast<ssize_t>(line.size())) {
        throw JournalError("short write to journal: " + path_.string());
    }
    ++appended_;
    return next_index_++;
}

bool is_structural_event(const std::string& kind) {
    return kind != "warning" && kind != "backend_retry";
}

const JournalEvent* JournalCursor::peek() const {
    std::size_t p = pos_;
    while (p < events_->size() && !is_structural_event((*events_)[p].kind)) ++p;
    return p < events_->size() ? &(*events_)[p] : nullptr;
}

const JournalEvent* JournalCursor::take(std::initializer_list<const char*> kinds) {
    const JournalEvent* ev = peek();
    if (!ev) return nullptr;
    for (const char* k : kinds) {
        if (ev->kind == k) {
            while (&(*events_)[pos_] != ev) ++pos_;
            ++pos_;
            return ev;
        }
    }
    std::string expected;
    for (const char* k : kinds) {
        if (!expected.empty()) expected += " or ";
        expected += k;
    }
    throw JournalError("journal diverges from this run: found '" + ev->kind + "' at event " +
                       std::to_string(ev->index) + ", expected " + expected +
                       "; was the configuration changed?");
}

} // namespace vertune
