#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sidwatch {

class MetricError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Two-class score sample. Both classes must be non-empty for every metric.
struct LabeledScores {
    std::vector<double> real_scores;
    std::vector<double> synth_scores;
};

// Prediction rule everywhere: score >= threshold -> synthetic.
struct ErrorRates {
    double fpr = 0.0; // real predicted synthetic
    double fnr = 0.0; // synthetic predicted real
};

ErrorRates error_rates(const LabeledScores& s, double threshold);

// (TPR + TNR) / 2.
double balanced_accuracy(const LabeledScores& s, double threshold);

// Mann-Whitney: fraction of (synthetic, real) pairs with synth > real, ties
// counting one half. Never label-inverted, so values below 0.5 are kept.
double auc(const LabeledScores& s);

// Candidate thresholds: midpoints between consecutive distinct pooled scores,
// plus one candidate below the minimum and one above the maximum (half the
// adjacent gap outside the extreme values, 0.5 when all scores are equal).
std::vector<double> eer_candidates(const LabeledScores& s);

// Candidate minimizing |FPR - FNR| (compared exactly), smallest on ties.
double eer_threshold(const LabeledScores& s);

struct PairMetrics {
    std::string synthetic_subset;
    std::string real_dataset;
    double ba_fixed = 0.0; // threshold 0.5
    double ba_eer = 0.0;
    double auc = 0.0;
    double eer_threshold = 0.0;
    std::size_t n_real = 0;
    std::size_t n_synth = 0;
};

inline constexpr double fixed_threshold = 0.5;

// Uses `shared_threshold` for ba_eer when given (global EER), otherwise this
// pair's own EER threshold.
PairMetrics evaluate_pair(const std::string& synthetic_subset, const std::string& real_dataset,
                          const LabeledScores& s, std::optional<double> shared_threshold = std::nullopt);

// Unweighted arithmetic mean, unrounded.
double aggregate_overall(std::span<const double> cells);

// 100 * (after - before) / before, unrounded. Throws MetricError when before == 0.
double relative_diff(double before, double after);

// Display rounding to one decimal, half away from zero, no negative zero.
double round_display(double value);
std::string format_display(double value);

} // namespace sidwatch
