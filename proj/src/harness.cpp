#include "sidwatch/harness.hpp"

#include "sidwatch/errors.hpp"

#include <algorithm>
#include <cstdio>
#include <future>
#include <map>
#include <ostream>
#include <set>

namespace sidwatch {

std::optional<EvalMode> parse_mode(std::string_view text) {
    if (text == "fixed_threshold") return EvalMode::fixed_threshold;
    if (text == "eer") return EvalMode::eer;
    if (text == "per_real_dataset") return EvalMode::per_real_dataset;
    if (text == "basic_only") return EvalMode::basic_only;
    if (text == "lifespan_quartiles") return EvalMode::lifespan_quartiles;
    if (text == "rasid_vs_direct") return EvalMode::rasid_vs_direct;
    return std::nullopt;
}

std::string_view to_string(EvalMode mode) {
    switch (mode) {
    case EvalMode::fixed_threshold: return "fixed_threshold";
    case EvalMode::eer: return "eer";
    case EvalMode::per_real_dataset: return "per_real_dataset";
    case EvalMode::basic_only: return "basic_only";
    case EvalMode::lifespan_quartiles: return "lifespan_quartiles";
    case EvalMode::rasid_vs_direct: return "rasid_vs_direct";
    }
    return "unknown";
}

std::optional<MetricKind> parse_metric(std::string_view text) {
    if (text == "ba_fixed") return MetricKind::ba_fixed;
    if (text == "ba_eer" || text == "acc") return MetricKind::ba_eer;
    if (text == "auc") return MetricKind::auc;
    return std::nullopt;
}

namespace {

double metric_of(const PairMetrics& m, MetricKind kind) {
    switch (kind) {
    case MetricKind::ba_fixed: return m.ba_fixed;
    case MetricKind::ba_eer: return m.ba_eer;
    case MetricKind::auc: return m.auc;
    }
    return 0.0;
}

struct Condition {
    std::string name;
    std::map<std::string, std::vector<std::string>> synth; // subset -> unit ids
    const ScoreTable* table = nullptr;
};

using RealSets = std::map<std::string, std::vector<std::string>>;

struct DetectorResult {
    DetectorId detector;
    std::vector<std::vector<PairMetrics>> conditions; // pairs in (subset, real) order
};

std::vector<double> scores_of(const ScoreTable& table, const DetectorId& d, std::span<const std::string> ids) {
    std::vector<double> out;
    out.reserve(ids.size());
    for (const auto& id : ids)
        if (auto s = table.get(d, id)) out.push_back(*s);
    return out;
}

std::vector<PairMetrics> evaluate_condition(const DetectorId& d, const Condition& c, const RealSets& reals,
                                            bool global_eer) {
    std::optional<double> shared;
    if (global_eer) {
        LabeledScores pooled;
        for (const auto& [s, ids] : c.synth) {
            auto v = scores_of(*c.table, d, ids);
            pooled.synth_scores.insert(pooled.synth_scores.end(), v.begin(), v.end());
        }
        for (const auto& [r, ids] : reals) {
            auto v = scores_of(*c.table, d, ids);
            pooled.real_scores.insert(pooled.real_scores.end(), v.begin(), v.end());
        }
        shared = eer_threshold(pooled);
    }
    std::vector<PairMetrics> out;
    for (const auto& [s, synth_ids] : c.synth) {
        const auto synth = scores_of(*c.table, d, synth_ids);
        for (const auto& [r, real_ids] : reals) {
            LabeledScores sample{scores_of(*c.table, d, real_ids), synth};
            try {
                out.push_back(evaluate_pair(s, r, sample, shared));
            } catch (const MetricError& e) {
                throw MetricError("detector '" + d.label() + "', condition '" + c.name + "': " + e.what());
            }
        }
    }
    return out;
}

template <class Pred>
double mean_where(const std::vector<PairMetrics>& pairs, MetricKind kind, Pred pred) {
    std::vector<double> cells;
    for (const auto& p : pairs)
        if (pred(p)) cells.push_back(metric_of(p, kind));
    return aggregate_overall(cells);
}

double overall(const std::vector<PairMetrics>& pairs, MetricKind kind) {
    return mean_where(pairs, kind, [](const PairMetrics&) { return true; });
}

std::optional<double> safe_diff(double before, double after) {
    if (before == 0.0) return std::nullopt;
    return relative_diff(before, after);
}

ReportTable comparison_table(const std::string& title, const std::string& before, const std::string& after,
                             const std::vector<DetectorResult>& results) {
    ReportTable t;
    t.title = title;
    t.columns = {before + " ACC", before + " AUC", after + " ACC", after + " AUC", "Diff ACC (%)", "Diff AUC (%)"};
    std::vector<double> acc_diffs, auc_diffs;
    for (const auto& r : results) {
        const double b_acc = overall(r.conditions[0], MetricKind::ba_eer);
        const double b_auc = overall(r.conditions[0], MetricKind::auc);
        const double a_acc = overall(r.conditions[1], MetricKind::ba_eer);
        const double a_auc = overall(r.conditions[1], MetricKind::auc);
        const auto d_acc = safe_diff(b_acc, a_acc);
        const auto d_auc = safe_diff(b_auc, a_auc);
        if (d_acc) acc_diffs.push_back(*d_acc);
        if (d_auc) auc_diffs.push_back(*d_auc);
        t.add_row(r.detector.label(), {100 * b_acc, 100 * b_auc, 100 * a_acc, 100 * a_auc, d_acc, d_auc});
    }
    std::optional<double> mean_acc, mean_auc;
    if (!acc_diffs.empty()) mean_acc = aggregate_overall(acc_diffs);
    if (!auc_diffs.empty()) mean_auc = aggregate_overall(auc_diffs);
    t.add_row("Overall", {std::nullopt, std::nullopt, std::nullopt, std::nullopt, mean_acc, mean_auc});
    return t;
}

std::vector<DetectorResult> select_best(std::vector<DetectorResult> results, MetricKind kind) {
    std::map<std::string, std::size_t> best;
    for (std::size_t i = 0; i < results.size(); ++i) {
        const auto& name = results[i].detector.name;
        const auto it = best.find(name);
        // Results arrive sorted by (name, variant); strict > keeps the smallest variant on ties.
        if (it == best.end() || overall(results[i].conditions[0], kind) > overall(results[it->second].conditions[0], kind))
            best[name] = i;
    }
    std::vector<DetectorResult> out;
    for (std::size_t i = 0; i < results.size(); ++i)
        if (best.at(results[i].detector.name) == i) out.push_back(std::move(results[i]));
    return out;
}

} // namespace

EvalReport evaluate(const DatasetManifest& manifest, const ScoreTable& scores, const EvalOptions& options,
                    std::unique_ptr<SimilarityBackend> backend) {
    const auto detectors = scores.detectors();
    if (detectors.empty()) throw ValidationError("no detector scores to evaluate");
    const auto subsets = manifest.synthetic_subsets();
    const auto real_names = manifest.real_datasets();
    if (subsets.empty()) throw ValidationError("manifest has no synthetic subsets");
    if (real_names.empty()) throw ValidationError("manifest has no real datasets");

    const bool lifespan = options.mode == EvalMode::lifespan_quartiles;
    const bool rasid = options.mode == EvalMode::rasid_vs_direct;
    const bool basic = options.basic_only || lifespan || rasid;

    std::map<std::string, std::vector<ImageRecord>> units;
    for (const auto& s : subsets) {
        const auto records = manifest.subset_records(s);
        if (!records.empty()) units.emplace(s, unique_images(records));
    }
    if (units.empty()) throw ValidationError("no valid synthetic images");
    RealSets reals;
    for (const auto& r : real_names) {
        const auto records = manifest.subset_records(r);
        if (records.empty()) continue;
        auto& ids = reals[r];
        for (const auto& rec : unique_images(records)) ids.push_back(rec.id);
    }
    if (reals.empty()) throw ValidationError("no valid real images");

    std::vector<QuartileAssignment> quartiles;
    if (lifespan || rasid)
        for (const auto& [s, recs] : units) quartiles.push_back(assign_quartiles(recs));

    auto select = [&](auto keep) {
        std::map<std::string, std::vector<std::string>> out;
        std::size_t qi = 0;
        for (const auto& [s, recs] : units) {
            auto& ids = out[s];
            for (const auto& r : recs)
                if ((!basic || r.is_basic()) && keep(r, qi)) ids.push_back(r.id);
            ++qi;
        }
        return out;
    };
    auto in_quartile = [&](Quartile q) {
        return [&quartiles, q](const ImageRecord& r, std::size_t qi) { return quartiles[qi].find(r.id) == q; };
    };
    const auto any = [](const ImageRecord&, std::size_t) { return true; };

    std::vector<Condition> conditions;
    switch (options.mode) {
    case EvalMode::fixed_threshold:
    case EvalMode::eer:
    case EvalMode::per_real_dataset:
        conditions.push_back({basic ? "basic" : "all", select(any), &scores});
        break;
    case EvalMode::basic_only: {
        Condition all{"all", {}, &scores};
        for (const auto& [s, recs] : units)
            for (const auto& r : recs) all.synth[s].push_back(r.id);
        conditions.push_back(std::move(all));
        conditions.push_back({"basic", select([](const ImageRecord& r, std::size_t) { return r.is_basic(); }), &scores});
        break;
    }
    case EvalMode::lifespan_quartiles:
        conditions.push_back({"Q1", select(in_quartile(Quartile::q1)), &scores});
        conditions.push_back({"Q4", select(in_quartile(Quartile::q4)), &scores});
        break;
    case EvalMode::rasid_vs_direct:
        conditions.push_back({"direct", select(any), &scores});
        conditions.push_back({"rasid", conditions.front().synth, nullptr});
        break;
    }

    // Coverage over every evaluated image.
    std::set<std::string> evaluated;
    for (const auto& c : conditions)
        for (const auto& [s, ids] : c.synth) evaluated.insert(ids.begin(), ids.end());
    for (const auto& [r, ids] : reals) evaluated.insert(ids.begin(), ids.end());
    const std::vector<std::string> evaluated_ids(evaluated.begin(), evaluated.end());
    if (!options.skip_missing) {
        const auto missing = check_coverage(scores, evaluated_ids, detectors);
        if (!missing.empty()) {
            std::vector<std::string> listed;
            for (const auto& m : missing) listed.push_back(m.detector.label() + "\t" + m.image_id);
            throw CoverageError(std::to_string(missing.size()) + " (detector, image) pair(s) lack scores",
                                std::move(listed));
        }
    }

    EvalReport report;
    report.mode = options.mode;

    ResolvedTable resolved;
    if (rasid) {
        if (!backend) throw ValidationError("rasid_vs_direct needs perceptual hashes or embeddings");
        RasidConfig config{options.similarity_threshold};
        config.validate();
        const auto index = Q1Index::build(quartiles, std::move(backend), scores, detectors, !options.skip_missing);
        resolved = resolve_all(evaluated_ids, detectors, scores, index, config, options.skip_missing);
        conditions.back().table = &resolved.scores;
        report.provenance = resolved.ledger;
    }

    std::vector<std::future<DetectorResult>> tasks;
    for (const auto& d : detectors) {
        tasks.push_back(std::async(std::launch::async, [&, d] {
            DetectorResult r{d, {}};
            for (const auto& c : conditions) r.conditions.push_back(evaluate_condition(d, c, reals, options.global_eer));
            return r;
        }));
    }
    std::vector<DetectorResult> results;
    std::exception_ptr error;
    for (auto& t : tasks) {
        try {
            results.push_back(t.get());
        } catch (...) {
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
    if (options.best_by) results = select_best(std::move(results), *options.best_by);

    for (const auto& r : results)
        for (std::size_t ci = 0; ci < conditions.size(); ++ci)
            for (const auto& p : r.conditions[ci]) report.pairs.push_back({r.detector, conditions[ci].name, p});

    auto& t = report.table;
    switch (options.mode) {
    case EvalMode::fixed_threshold: {
        t.title = "Fixed-threshold evaluation: BA at 0.5, averaged over real datasets";
        for (const auto& [s, ids] : conditions[0].synth) t.columns.push_back(s);
        t.columns.push_back("Overall");
        for (const auto& r : results) {
            std::vector<std::optional<double>> cells;
            for (const auto& [s, ids] : conditions[0].synth)
                cells.push_back(100 * mean_where(r.conditions[0], MetricKind::ba_fixed,
                                                 [&](const PairMetrics& p) { return p.synthetic_subset == s; }));
            cells.push_back(100 * overall(r.conditions[0], MetricKind::ba_fixed));
            t.add_row(r.detector.label(), std::move(cells));
        }
        break;
    }
    case EvalMode::eer: {
        t.title = "Discrimination: BA at the EER threshold (ACC) and AUC, averaged over real datasets";
        for (const auto& [s, ids] : conditions[0].synth) {
            t.columns.push_back(s + " ACC");
            t.columns.push_back(s + " AUC");
        }
        t.columns.push_back("Overall ACC");
        t.columns.push_back("Overall AUC");
        for (const auto& r : results) {
            std::vector<std::optional<double>> cells;
            for (const auto& [s, ids] : conditions[0].synth) {
                auto of_subset = [&](const PairMetrics& p) { return p.synthetic_subset == s; };
                cells.push_back(100 * mean_where(r.conditions[0], MetricKind::ba_eer, of_subset));
                cells.push_back(100 * mean_where(r.conditions[0], MetricKind::auc, of_subset));
            }
            cells.push_back(100 * overall(r.conditions[0], MetricKind::ba_eer));
            cells.push_back(100 * overall(r.conditions[0], MetricKind::auc));
            t.add_row(r.detector.label(), std::move(cells));
        }
        break;
    }
    case EvalMode::per_real_dataset: {
        t.title = "Per real dataset: BA at the EER threshold (ACC) and AUC, averaged over synthetic subsets";
        for (const auto& [rname, ids] : reals) {
            t.columns.push_back(rname + " ACC");
            t.columns.push_back(rname + " AUC");
        }
        t.columns.push_back("Overall ACC");
        t.columns.push_back("Overall AUC");
        std::vector<std::vector<double>> column_values(t.columns.size());
        for (const auto& r : results) {
            std::vector<std::optional<double>> cells;
            for (const auto& [rname, ids] : reals) {
                auto of_real = [&](const PairMetrics& p) { return p.real_dataset == rname; };
                cells.push_back(100 * mean_where(r.conditions[0], MetricKind::ba_eer, of_real));
                cells.push_back(100 * mean_where(r.conditions[0], MetricKind::auc, of_real));
            }
            cells.push_back(100 * overall(r.conditions[0], MetricKind::ba_eer));
            cells.push_back(100 * overall(r.conditions[0], MetricKind::auc));
            for (std::size_t i = 0; i < cells.size(); ++i) column_values[i].push_back(*cells[i]);
            t.add_row(r.detector.label(), std::move(cells));
        }
        std::vector<std::optional<double>> means;
        for (const auto& col : column_values) means.push_back(aggregate_overall(col));
        t.add_row("Overall", std::move(means));
        break;
    }
    case EvalMode::basic_only:
        t = comparison_table("All vs basic images: BA at the EER threshold (ACC) and AUC", "All", "Basic", results);
        break;
    case EvalMode::lifespan_quartiles:
        t = comparison_table("Online lifespan: first vs fourth quarter, basic images", "Q1", "Q4", results);
        break;
    case EvalMode::rasid_vs_direct:
        t = comparison_table("Retrieval-assisted vs direct detection, basic images", "Direct", "RASID", results);
        break;
    }
    return report;
}

void write_pairs_csv(std::span<const PairRecord> pairs, std::ostream& out, const std::string& header) {
    if (!header.empty()) out << "# " << header << '\n';
    out << "detector,condition,synthetic_subset,real_dataset,n_synth,n_real,ba_fixed,ba_eer,auc,eer_threshold\n";
    char buf[160];
    for (const auto& p : pairs) {
        const auto& m = p.metrics;
        std::snprintf(buf, sizeof buf, "%zu,%zu,%.6f,%.6f,%.6f,%.6f", m.n_synth, m.n_real, m.ba_fixed, m.ba_eer,
                      m.auc, m.eer_threshold);
        out << p.detector.label() << ',' << p.condition << ',' << m.synthetic_subset << ',' << m.real_dataset << ','
            << buf << '\n';
    }
}

ReportTable stats_table(const DatasetManifest& manifest) {
    ReportTable t;
    t.title = "Dataset overview";
    t.row_header = "Subset";
    t.integral = true;
    t.columns = {"Lifespan (days)", "Lifespan (months)", "Total URLs", "Valid URLs", "Unique Img", "Basic Img"};
    for (const auto& row : summarize(manifest)) {
        t.add_row(row.subset, {static_cast<double>(row.lifespan_days), static_cast<double>(row.lifespan_months),
                               static_cast<double>(row.total_urls), static_cast<double>(row.valid_urls),
                               static_cast<double>(row.unique_images), static_cast<double>(row.basic_images)});
    }
    return t;
}

HashTable hash_manifest_images(const DatasetManifest& manifest) {
    HashTable out;
    for (const auto& r : manifest.records()) {
        if (!r.valid || !r.file_path) continue;
        const auto image = load_image(manifest.base_dir / *r.file_path, r.id);
        out.emplace(r.id, compute_phash(image, r.id));
    }
    return out;
}

std::vector<ScoreRequest> score_requests(const DatasetManifest& manifest) {
    std::vector<ScoreRequest> out;
    for (const auto& r : manifest.records()) {
        if (!r.valid || !r.file_path) continue;
        out.push_back({r.id, std::filesystem::absolute(manifest.base_dir / *r.file_path).lexically_normal()});
    }
    return out;
}

void write_near_duplicates(const HashTable& hashes, const HashTable* probes, double min_similarity, std::ostream& out) {
    NearDupIndex index;
    for (const auto& [id, h] : hashes) index.insert(id, h);
    char buf[32];
    for (const auto& [probe_id, h] : probes ? *probes : hashes) {
        for (const auto& m : index.query(h, min_similarity)) {
            if (m.id == probe_id) continue;
            std::snprintf(buf, sizeof buf, "%.6f", m.similarity);
            out << probe_id << '\t' << m.id << '\t' << buf << '\n';
        }
    }
}

} // namespace sidwatch
