#include "sidwatch/rasid.hpp"

#include "sidwatch/errors.hpp"

#include <cstdio>
#include <future>
#include <ostream>
#include <stdexcept>

namespace sidwatch {

void RasidConfig::validate() const {
    if (!(similarity_threshold >= 0.0))
        throw std::invalid_argument("similarity threshold must be >= 0 (got " + std::to_string(similarity_threshold) + ")");
}

std::string_view to_string(Provenance p) { return p == Provenance::direct ? "direct" : "retrieved"; }

Q1Index Q1Index::build(std::span<const QuartileAssignment> quartiles, std::unique_ptr<SimilarityBackend> backend,
                       const ScoreTable& direct_scores, std::span<const DetectorId> detectors, bool require_scores) {
    if (!backend) throw std::invalid_argument("Q1Index::build: null backend");
    Q1Index index;
    std::vector<std::string> missing_features;
    std::vector<std::string> missing_scores;
    for (const auto& qa : quartiles) {
        for (const auto& id : qa.members(Quartile::q1)) {
            if (!backend->has_features(id)) {
                missing_features.push_back(id);
                continue;
            }
            for (const auto& d : detectors) {
                if (auto s = direct_scores.get(d, id)) index.snapshot_.set(d, id, *s);
                else if (require_scores) missing_scores.push_back(d.label() + "/" + id);
            }
            backend->insert(id);
            index.members_.push_back(id);
            index.q1_ids_.insert(id);
        }
    }
    if (!missing_features.empty())
        throw CoverageError("Q1 images without similarity features: " + std::to_string(missing_features.size()),
                            std::move(missing_features));
    if (!missing_scores.empty())
        throw CoverageError("Q1 images without direct scores: " + std::to_string(missing_scores.size()),
                            std::move(missing_scores));
    index.backend_ = std::move(backend);
    return index;
}

ResolvedScore resolve_score(std::string_view query_id, const DetectorId& detector, double direct_score,
                            const Q1Index& index, const RasidConfig& config) {
    if (!(direct_score >= 0.0 && direct_score <= 1.0))
        throw std::out_of_range("direct score outside [0,1] for '" + std::string(query_id) + "'");
    ResolvedScore out;
    out.image_id = std::string(query_id);
    out.detector = detector;
    out.value = direct_score;
    if (index.in_q1(query_id) || config.similarity_threshold > 1.0) return out;

    double sum = 0.0;
    for (const auto& m : index.backend().query(query_id, config.similarity_threshold)) {
        if (m.id == query_id) continue;
        const auto s = index.snapshot_score(detector, m.id);
        if (!s) continue;
        sum += *s;
        out.contributors.push_back(m.id);
        out.contributor_similarities.push_back(m.similarity);
    }
    if (!out.contributors.empty()) {
        out.provenance = Provenance::retrieved;
        out.value = sum / static_cast<double>(out.contributors.size());
    }
    return out;
}

ResolvedTable resolve_all(std::span<const std::string> image_ids, std::span<const DetectorId> detectors,
                          const ScoreTable& direct_scores, const Q1Index& index, const RasidConfig& config,
                          bool skip_missing) {
    config.validate();
    // One task per detector; the index is read-only.
    std::vector<std::future<std::vector<ResolvedScore>>> tasks;
    for (const auto& d : detectors) {
        tasks.push_back(std::async(std::launch::async, [&, d] {
            std::vector<ResolvedScore> column;
            std::vector<std::string> missing;
            for (const auto& id : image_ids) {
                const auto direct = direct_scores.get(d, id);
                if (!direct) {
                    missing.push_back(id);
                    continue;
                }
                column.push_back(resolve_score(id, d, *direct, index, config));
            }
            if (!missing.empty() && !skip_missing)
                throw CoverageError("detector '" + d.label() + "' lacks direct scores for " +
                                        std::to_string(missing.size()) + " image(s)",
                                    std::move(missing));
            return column;
        }));
    }
    ResolvedTable out;
    std::exception_ptr error;
    for (auto& t : tasks) {
        try {
            for (auto& r : t.get()) {
                out.scores.set(r.detector, r.image_id, r.value);
                out.ledger.push_back(std::move(r));
            }
        } catch (...) {
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
    return out;
}

void write_provenance_ledger(std::span<const ResolvedScore> ledger, std::ostream& out) {
    char buf[32];
    for (const auto& r : ledger) {
        std::snprintf(buf, sizeof buf, "%.6f", r.value);
        out << r.image_id << '\t' << r.detector.label() << '\t' << to_string(r.provenance) << '\t' << buf << '\t';
        for (std::size_t i = 0; i < r.contributors.size(); ++i) out << (i ? "," : "") << r.contributors[i];
        out << '\n';
    }
}

} // namespace sidwatch
