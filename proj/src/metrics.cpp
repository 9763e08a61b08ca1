#include "sidwatch/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <utility>

namespace sidwatch {

namespace {

void require_classes(const LabeledScores& s, const char* what) {
    if (s.real_scores.empty() || s.synth_scores.empty())
        throw MetricError(std::string(what) + ": both classes must be non-empty (real=" +
                          std::to_string(s.real_scores.size()) + ", synthetic=" +
                          std::to_string(s.synth_scores.size()) + ")");
}

struct SortedSample {
    std::vector<double> real;
    std::vector<double> synth;

    explicit SortedSample(const LabeledScores& s) : real(s.real_scores), synth(s.synth_scores) {
        std::sort(real.begin(), real.end());
        std::sort(synth.begin(), synth.end());
    }

    // (false positives, false negatives) at threshold t.
    std::pair<std::int64_t, std::int64_t> errors(double t) const {
        const auto fp = real.end() - std::lower_bound(real.begin(), real.end(), t);
        const auto fn = std::lower_bound(synth.begin(), synth.end(), t) - synth.begin();
        return {fp, fn};
    }
};

} // namespace

ErrorRates error_rates(const LabeledScores& s, double threshold) {
    require_classes(s, "error_rates");
    std::size_t fp = 0, fn = 0;
    for (double v : s.real_scores) fp += v >= threshold;
    for (double v : s.synth_scores) fn += v < threshold;
    return {static_cast<double>(fp) / s.real_scores.size(), static_cast<double>(fn) / s.synth_scores.size()};
}

double balanced_accuracy(const LabeledScores& s, double threshold) {
    require_classes(s, "balanced_accuracy");
    const auto rates = error_rates(s, threshold);
    return ((1.0 - rates.fnr) + (1.0 - rates.fpr)) / 2.0;
}

double auc(const LabeledScores& s) {
    require_classes(s, "auc");
    std::vector<std::pair<double, bool>> pooled; // (score, is_synthetic)
    pooled.reserve(s.real_scores.size() + s.synth_scores.size());
    for (double v : s.real_scores) pooled.emplace_back(v, false);
    for (double v : s.synth_scores) pooled.emplace_back(v, true);
    std::sort(pooled.begin(), pooled.end());

    // Twice the Mann-Whitney U, kept integral.
    std::int64_t twice_wins = 0;
    std::int64_t reals_below = 0;
    for (std::size_t i = 0; i < pooled.size();) {
        std::size_t j = i;
        std::int64_t reals = 0, synths = 0;
        while (j < pooled.size() && pooled[j].first == pooled[i].first) {
            (pooled[j].second ? synths : reals) += 1;
            ++j;
        }
        twice_wins += synths * (2 * reals_below + reals);
        reals_below += reals;
        i = j;
    }
    const double pairs = static_cast<double>(s.real_scores.size()) * static_cast<double>(s.synth_scores.size());
    return static_cast<double>(twice_wins) / (2.0 * pairs);
}

std::vector<double> eer_candidates(const LabeledScores& s) {
    require_classes(s, "eer_candidates");
    std::vector<double> values(s.real_scores);
    values.insert(values.end(), s.synth_scores.begin(), s.synth_scores.end());
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());

    std::vector<double> out;
    if (values.size() == 1) {
        out = {values.front() - 0.5, values.front() + 0.5};
        return out;
    }
    out.push_back(values[0] - (values[1] - values[0]) / 2.0);
    for (std::size_t i = 0; i + 1 < values.size(); ++i) out.push_back((values[i] + values[i + 1]) / 2.0);
    const std::size_t k = values.size();
    out.push_back(values[k - 1] + (values[k - 1] - values[k - 2]) / 2.0);
    return out;
}

double eer_threshold(const LabeledScores& s) {
    const auto candidates = eer_candidates(s);
    const SortedSample sorted(s);
    const auto n_real = static_cast<std::int64_t>(s.real_scores.size());
    const auto n_synth = static_cast<std::int64_t>(s.synth_scores.size());

    double best = candidates.front();
    std::int64_t best_gap = -1;
    for (double t : candidates) {
        const auto [fp, fn] = sorted.errors(t);
        // |fp/n_real - fn/n_synth| scaled by n_real * n_synth.
        const std::int64_t gap = std::llabs(fp * n_synth - fn * n_real);
        if (best_gap < 0 || gap < best_gap) {
            best_gap = gap;
            best = t;
        }
    }
    return best;
}

PairMetrics evaluate_pair(const std::string& synthetic_subset, const std::string& real_dataset,
                          const LabeledScores& s, std::optional<double> shared_threshold) {
    if (s.real_scores.empty() || s.synth_scores.empty())
        throw MetricError("pair (" + synthetic_subset + ", " + real_dataset + "): both classes must be non-empty (real=" +
                          std::to_string(s.real_scores.size()) + ", synthetic=" +
                          std::to_string(s.synth_scores.size()) + ")");
    PairMetrics m;
    m.synthetic_subset = synthetic_subset;
    m.real_dataset = real_dataset;
    m.n_real = s.real_scores.size();
    m.n_synth = s.synth_scores.size();
    m.ba_fixed = balanced_accuracy(s, fixed_threshold);
    m.eer_threshold = shared_threshold ? *shared_threshold : eer_threshold(s);
    m.ba_eer = balanced_accuracy(s, m.eer_threshold);
    m.auc = auc(s);
    return m;
}

double aggregate_overall(std::span<const double> cells) {
    if (cells.empty()) throw MetricError("aggregate_overall: no cells");
    return std::accumulate(cells.begin(), cells.end(), 0.0) / static_cast<double>(cells.size());
}

double relative_diff(double before, double after) {
    if (before == 0.0) throw MetricError("relative difference undefined for a zero baseline");
    return 100.0 * (after - before) / before;
}

double round_display(double value) {
    const double r = std::round(value * 10.0) / 10.0;
    return r == 0.0 ? 0.0 : r;
}

std::string format_display(double value) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.1f", round_display(value));
    return buf;
}

} // namespace sidwatch
