#pragma once

#include "vertune/emotion.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace vertune {

// 8x8 grid of counts indexed (true label, predicted label) plus a per-true-
// label sink for predictions that named none of the target labels.
class ConfusionMatrix {
public:
    void add(Emotion truth, const ParsedOutput& predicted);
    void add_target(Emotion truth, Emotion predicted);
    void add_non_target(Emotion truth);

    // Element-wise sum; associative and commutative, so per-worker matrices
    // can be merged in any order.
    void merge(const ConfusionMatrix& other);

    std::uint64_t count(Emotion truth, Emotion predicted) const;
    std::uint64_t non_target_count(Emotion truth) const;

    std::uint64_t n_test() const;
    std::uint64_t n_correct() const;

private:
    std::array<std::array<std::uint64_t, kEmotionCount>, kEmotionCount> counts_{};
    std::array<std::uint64_t, kEmotionCount> non_target_{};
};

double accuracy(const ConfusionMatrix& cm);
double ecc(const ConfusionMatrix& cm, const EmotionWheel& wheel);
// Absent (not an error) when there are no misclassifications.
std::optional<double> emc(const ConfusionMatrix& cm, const EmotionWheel& wheel);

struct MetricReport {
    std::string user_id;
    double accuracy = 0.0;
    double ecc = 0.0;
    std::optional<double> emc;
    std::uint64_t n_test = 0;
    std::uint64_t n_correct = 0;
};

MetricReport evaluate(const ConfusionMatrix& cm, const EmotionWheel& wheel,
                      std::string user_id = "");

struct MeanStd {
    double mean = 0.0;
    double std_dev = 0.0; // population standard deviation
};

struct AggregateReport {
    std::size_t user_count = 0;
    MeanStd accuracy;
    MeanStd ecc;
    // Users whose report has no emc are excluded here; absent when none has one.
    std::optional<MeanStd> emc;
    std::size_t emc_user_count = 0;
};

AggregateReport aggregate(const std::vector<MetricReport>& reports);

// Line-oriented report: one JSON record per user plus one aggregate record.
// Field names are part of the format contract (see README).
std::string render_metrics_jsonl(const std::vector<MetricReport>& reports,
                                 const AggregateReport& agg);
std::string render_metrics_table(const std::vector<MetricReport>& reports,
                                 const AggregateReport& agg);

} // namespace vertune
