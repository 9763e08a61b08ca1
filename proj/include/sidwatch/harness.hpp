#pragma once

#include "sidwatch/manifest.hpp"
#include "sidwatch/metrics.hpp"
#include "sidwatch/rasid.hpp"
#include "sidwatch/report.hpp"
#include "sidwatch/scoring.hpp"
#include "sidwatch/simindex.hpp"

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sidwatch {

enum class EvalMode { fixed_threshold, eer, per_real_dataset, basic_only, lifespan_quartiles, rasid_vs_direct };

std::optional<EvalMode> parse_mode(std::string_view text);
std::string_view to_string(EvalMode mode);

enum class MetricKind { ba_fixed, ba_eer, auc };
std::optional<MetricKind> parse_metric(std::string_view text);

struct EvalOptions {
    EvalMode mode = EvalMode::eer;
    double similarity_threshold = default_similarity_threshold;
    // Restrict synthetic images to basic ones. lifespan_quartiles and
    // rasid_vs_direct always do.
    bool basic_only = false;
    // Drop (detector, image) pairs without a score instead of failing.
    bool skip_missing = false;
    // One EER threshold per detector and condition instead of per pair.
    bool global_eer = false;
    // Keep only the best variant of each detector name.
    std::optional<MetricKind> best_by;
};

struct PairRecord {
    DetectorId detector;
    std::string condition;
    PairMetrics metrics;
};

struct EvalReport {
    EvalMode mode = EvalMode::eer;
    ReportTable table;
    std::vector<PairRecord> pairs;
    std::vector<ResolvedScore> provenance; // rasid_vs_direct only
};

// Runs one experiment. Evaluation units are the byte-level unique images of
// each subset. `backend` supplies near-duplicate features and is required in
// rasid_vs_direct mode. Throws CoverageError listing missing scores unless
// skip_missing.
EvalReport evaluate(const DatasetManifest& manifest, const ScoreTable& scores, const EvalOptions& options,
                    std::unique_ptr<SimilarityBackend> backend = nullptr);

void write_pairs_csv(std::span<const PairRecord> pairs, std::ostream& out, const std::string& header = {});

// Dataset overview table (one row per synthetic subset plus totals).
ReportTable stats_table(const DatasetManifest& manifest);

// Perceptual hashes for every valid record with a file_path. Throws
// ImageError naming the first undecodable image.
HashTable hash_manifest_images(const DatasetManifest& manifest);

// Requests for every valid record with a file_path, paths made absolute.
std::vector<ScoreRequest> score_requests(const DatasetManifest& manifest);

// Near-duplicate pairs among `hashes` (or of `probes` against `hashes`):
// "probe_id<TAB>match_id<TAB>similarity" lines, self matches excluded.
void write_near_duplicates(const HashTable& hashes, const HashTable* probes, double min_similarity, std::ostream& out);

} // namespace sidwatch
