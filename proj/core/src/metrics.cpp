#include "vertune/metrics.hpp"

#include "vertune/errors.hpp"
#include "vertune/text.hpp"

#include <cmath>
#include <sstream>

#include <json.hpp>

namespace vertune {

void ConfusionMatrix::add(Emotion truth, const ParsedOutput& predicted) {
    if (predicted.is_non_target()) {
        add_non_target(truth);
    } else {
        add_target(truth, *predicted.label);
    }
}

void ConfusionMatrix::add_target(Emotion truth, Emotion predicted) {
    counts_[static_cast<std::size_t>(truth)][static_cast<std::size_t>(predicted)] += 1;
}

void ConfusionMatrix::add_non_target(Emotion truth) {
    non_target_[static_cast<std::size_t>(truth)] += 1;
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
    for (std::size_t a = 0; a < kEmotionCount; ++a) {
        for (std::size_t b = 0; b < kEmotionCount; ++b) {
            counts_[a][b] += other.counts_[a][b];
        }
        non_target_[a] += other.non_target_[a];
    }
}

std::uint64_t ConfusionMatrix::count(Emotion truth, Emotion predicted) const {
    return counts_[static_cast<std::size_t>(truth)][static_cast<std::size_t>(predicted)];
}

std::uint64_t ConfusionMatrix::non_target_count(Emotion truth) const {
    return non_target_[static_cast<std::size_t>(truth)];
}

std::uint64_t ConfusionMatrix::n_test() const {
    std::uint64_t total = 0;
    for (std::size_t a = 0; a < kEmotionCount; ++a) {
        for (std::size_t b = 0; b < kEmotionCount; ++b) total += counts_[a][b];
        total += non_target_[a];
    }
    return total;
}

std::uint64_t ConfusionMatrix::n_correct() const {
    std::uint64_t total = 0;
    for (std::size_t a = 0; a < kEmotionCount; ++a) total += counts_[a][a];
    return total;
}

namespace {

void require_non_empty(const ConfusionMatrix& cm) {
    if (cm.n_test() == 0) {
        throw EmptyEvaluationError("confusion matrix holds no samples");
    }
}

} // namespace

double accuracy(const ConfusionMatrix& cm) {
    require_non_empty(cm);
    return static_cast<double>(cm.n_correct()) / static_cast<double>(cm.n_test());
}

double ecc(const ConfusionMatrix& cm, const EmotionWheel& wheel) {
    require_non_empty(cm);
    // Non-target predictions count in the denominator only: there is no
    // weight for an out-of-vocabulary label, so they contribute zero.
    double num = 0.0;
    for (Emotion a : all_emotions()) {
        for (Emotion b : all_emotions()) {
            std::uint64_t s = cm.count(a, b);
            if (s == 0) continue;
            num += static_cast<double>(s) / static_cast<double>(wheel.weight(a, b));
        }
    }
    return num / static_cast<double>(cm.n_test());
}

std::optional<double> emc(const ConfusionMatrix& cm, const EmotionWheel& wheel) {
    require_non_empty(cm);
    std::uint64_t errors = cm.n_test() - cm.n_correct();
    if (errors == 0) return std::nullopt;
    double num = 0.0;
    for (Emotion a : all_emotions()) {
        for (Emotion b : all_emotions()) {
            if (a == b) continue;
            std::uint64_t s = cm.count(a, b);
            if (s == 0) continue;
            num += static_cast<double>(s) / static_cast<double>(wheel.weight(a, b) - 1);
        }
    }
    return num / static_cast<double>(errors);
}

MetricReport evaluate(const ConfusionMatrix& cm, const EmotionWheel& wheel,
                      std::string user_id) {
    MetricReport report;
    report.user_id = std::move(user_id);
    report.accuracy = accuracy(cm);
    report.ecc = ecc(cm, wheel);
    report.emc = emc(cm, wheel);
    report.n_test = cm.n_test();
    report.n_correct = cm.n_correct();
    return report;
}

namespace {

MeanStd mean_std(const std::vector<double>& values) {
    MeanStd out;
    double sum = 0.0;
    for (double v : values) sum += v;
    out.mean = sum / static_cast<double>(values.size());
    double sq = 0.0;
    for (double v : values) sq += (v - out.mean) * (v - out.mean);
    out.std_dev = std::sqrt(sq / static_cast<double>(values.size()));
    return out;
}

} // namespace

AggregateReport aggregate(const std::vector<MetricReport>& reports) {
    if (reports.empty()) {
        throw EmptyEvaluationError("no metric reports to aggregate");
    }
    AggregateReport agg;
    agg.user_count = reports.size();
    std::vector<double> acc, ecc_values, emc_values;
    for (const MetricReport& r : reports) {
        acc.push_back(r.accuracy);
        ecc_values.push_back(r.ecc);
        if (r.emc) emc_values.push_back(*r.emc);
    }
    agg.accuracy = mean_std(acc);
    agg.ecc = mean_std(ecc_values);
    agg.emc_user_count = emc_values.size();
    if (!emc_values.empty()) agg.emc = mean_std(emc_values);
    return agg;
}

std::string render_metrics_jsonl(const std::vector<MetricReport>& reports,
                                 const AggregateReport& agg) {
    std::string out;
    for (const MetricReport& r : reports) {
        nlohmann::json rec = {
            {"record", "user"},
            {"user", r.user_id},
            {"accuracy", r.accuracy},
            {"ecc", r.ecc},
            {"emc", r.emc ? nlohmann::json(*r.emc) : nlohmann::json(nullptr)},
            {"n_test", r.n_test},
            {"n_correct", r.n_correct},
        };
        out += rec.dump();
        out += '\n';
    }
    nlohmann::json arec = {
        {"record", "aggregate"},
        {"users", agg.user_count},
        {"accuracy_mean", agg.accuracy.mean},
        {"accuracy_std", agg.accuracy.std_dev},
        {"ecc_mean", agg.ecc.mean},
        {"ecc_std", agg.ecc.std_dev},
        {"emc_mean", agg.emc ? nlohmann::json(agg.emc->mean) : nlohmann::json(nullptr)},
        {"emc_std", agg.emc ? nlohmann::json(agg.emc->std_dev) : nlohmann::json(nullptr)},
        {"emc_users", agg.emc_user_count},
    };
    out += arec.dump();
    out += '\n';
    return out;
}

std::string render_metrics_table(const std::vector<MetricReport>& reports,
                                 const AggregateReport& agg) {
    std::ostringstream os;
    os << "user        accuracy   ecc        emc        n_test\n";
    for (const MetricReport& r : reports) {
        os << r.user_id;
        for (std::size_t i = r.user_id.size(); i < 12; ++i) os << ' ';
        os << format_fixed(r.accuracy, 4) << "     " << format_fixed(r.ecc, 4) << "     ";
        os << (r.emc ? format_fixed(*r.emc, 4) : std::string("n/a   ")) << "     ";
        os << r.n_test << "\n";
    }
    os << "mean+/-std  " << format_fixed(agg.accuracy.mean, 4) << " +/- "
       << format_fixed(agg.accuracy.std_dev, 4) << "  " << format_fixed(agg.ecc.mean, 4)
       << " +/- " << format_fixed(agg.ecc.std_dev, 4) << "  ";
    if (agg.emc) {
        os << format_fixed(agg.emc->mean, 4) << " +/- " << format_fixed(agg.emc->std_dev, 4)
           << " (" << agg.emc_user_count << " users)";
    } else {
        os << "n/a";
    }
    os << "\n";
    return os.str();
}

} // namespace vertune
