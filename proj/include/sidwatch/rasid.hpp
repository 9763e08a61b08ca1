#pragma once

#include "sidwatch/manifest.hpp"
#include "sidwatch/scoring.hpp"
#include "sidwatch/simindex.hpp"

#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace sidwatch {

inline constexpr double default_similarity_threshold = 0.7;

struct RasidConfig {
    // Minimum similarity for a Q1 image to count as a near-duplicate. Values
    // above 1 disable retrieval entirely.
    double similarity_threshold = default_similarity_threshold;

    void validate() const;
};

enum class Provenance { direct, retrieved };
std::string_view to_string(Provenance p);

struct ResolvedScore {
    std::string image_id;
    DetectorId detector;
    double value = 0.0;
    Provenance provenance = Provenance::direct;
    // Empty iff provenance is direct.
    std::vector<std::string> contributors;
    std::vector<double> contributor_similarities;
};

// Frozen index of the images submitted during Q1 of their subset, with a
// snapshot of their direct scores. Read-only after build(); safe to share
// across threads.
class Q1Index {
public:
    // Indexes every Q1 member of every assignment. Throws CoverageError when a
    // Q1 image has no features in the backend, or (require_scores) no direct
    // score for one of the detectors.
    static Q1Index build(std::span<const QuartileAssignment> quartiles, std::unique_ptr<SimilarityBackend> backend,
                         const ScoreTable& direct_scores, std::span<const DetectorId> detectors,
                         bool require_scores = true);

    bool in_q1(std::string_view id) const { return q1_ids_.contains(std::string(id)); }
    std::optional<double> snapshot_score(const DetectorId& detector, std::string_view id) const {
        return snapshot_.get(detector, id);
    }
    const SimilarityBackend& backend() const { return *backend_; }
    const std::vector<std::string>& members() const noexcept { return members_; }
    std::size_t size() const noexcept { return members_.size(); }

private:
    std::unique_ptr<SimilarityBackend> backend_;
    std::vector<std::string> members_;
    std::unordered_set<std::string> q1_ids_;
    ScoreTable snapshot_;
};

// Q1 images keep their direct score. Any other image is matched against the
// index; the value becomes the unweighted mean of the matched Q1 images'
// snapshot scores for this detector, or stays direct when nothing matches.
// The query id never contributes to its own score.
ResolvedScore resolve_score(std::string_view query_id, const DetectorId& detector, double direct_score,
                            const Q1Index& index, const RasidConfig& config);

struct ResolvedTable {
    ScoreTable scores;
    // Ordered by detector, then by the order of image_ids.
    std::vector<ResolvedScore> ledger;
};

// One ResolvedScore per (detector, id). A missing direct score throws
// CoverageError, or is skipped when skip_missing.
ResolvedTable resolve_all(std::span<const std::string> image_ids, std::span<const DetectorId> detectors,
                          const ScoreTable& direct_scores, const Q1Index& index, const RasidConfig& config,
                          bool skip_missing = false);

// "image_id<TAB>detector<TAB>provenance<TAB>value<TAB>contributor_ids(comma-sep)"
void write_provenance_ledger(std::span<const ResolvedScore> ledger, std::ostream& out);

} // namespace sidwatch
