// sidwatch: evaluate synthetic image detectors on time-stamped, fact-checked
// image collections, with optional retrieval-assisted scoring.

#include "sidwatch/errors.hpp"
#include "sidwatch/harness.hpp"
#include "sidwatch/version.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace sidwatch;

namespace {

enum Exit { ok = 0, validation_failure = 1, coverage_failure = 2, protocol_failure = 3 };

struct Args {
    std::string manifest;
    std::vector<std::string> scores;
    std::vector<std::string> detector_cmds;
    std::string hashes;
    std::string probes;
    std::string embeddings;
    std::string mode = "eer";
    double similarity_threshold = default_similarity_threshold;
    bool basic_only = false;
    std::string best_by;
    bool skip_missing = false;
    bool global_eer = false;
    std::string out;
    std::string format = "all";
    bool no_header = false;
    int timeout = 300;
    std::string input;
};

// "NAME[:VARIANT]=command line"
DetectorEndpoint parse_detector_cmd(const std::string& spec, int timeout) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size())
        throw ValidationError("--detector-cmd expects NAME[:VARIANT]=COMMAND, got '" + spec + "'");
    DetectorEndpoint e;
    e.kind = DetectorEndpoint::Kind::subprocess;
    e.detector = DetectorId::parse_label(spec.substr(0, eq));
    e.location = spec.substr(eq + 1);
    e.timeout = std::chrono::seconds(timeout);
    return e;
}

ScoreTable load_all_scores(const Args& a, const DatasetManifest* manifest) {
    ScoreTable table;
    ScoreLoadOptions opts{manifest, true};
    for (const auto& path : a.scores) table.merge(load_scores(path, opts));
    return table;
}

// Write to `path`, or to stdout when path is empty.
template <class F>
void emit(const std::string& path, F&& write) {
    if (path.empty()) {
        write(std::cout);
        return;
    }
    if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    write(out);
    if (!out) throw Error("write to '" + path + "' failed");
}

void write_table(const ReportTable& table, const Args& a, const std::string& stem) {
    const auto header = generation_header(!a.no_header);
    const bool csv = a.format == "csv" || a.format == "all";
    const bool md = a.format == "markdown" || a.format == "all";
    if (a.out.empty()) {
        if (md || !csv) write_markdown(table, std::cout, header);
        else write_csv(table, std::cout, header);
        return;
    }
    fs::create_directories(a.out);
    const fs::path dir(a.out);
    if (csv) emit((dir / (stem + ".csv")).string(), [&](std::ostream& o) { write_csv(table, o, header); });
    if (md) emit((dir / (stem + ".md")).string(), [&](std::ostream& o) { write_markdown(table, o, header); });
}

int cmd_validate(const Args& a) {
    const auto m = load_manifest(a.manifest);
    std::size_t valid = 0;
    for (const auto& r : m.records()) valid += r.valid;
    std::cout << a.manifest << ": ok, " << m.records().size() << " records (" << valid << " valid), "
              << m.synthetic_subsets().size() << " synthetic subsets, " << m.real_datasets().size()
              << " real datasets\n";
    return ok;
}

int cmd_stats(const Args& a) {
    write_table(stats_table(load_manifest(a.manifest)), a, "stats");
    return ok;
}

int cmd_hash(const Args& a) {
    const auto hashes = hash_manifest_images(load_manifest(a.manifest));
    emit(a.out, [&](std::ostream& o) { write_hash_cache(hashes, o); });
    std::cerr << "hashed " << hashes.size() << " images\n";
    return ok;
}

int cmd_index(const Args& a) {
    RasidConfig{a.similarity_threshold}.validate();
    const auto hashes = load_hash_cache(a.hashes);
    HashTable probes;
    if (!a.probes.empty()) probes = load_hash_cache(a.probes);
    emit(a.out, [&](std::ostream& o) {
        write_near_duplicates(hashes, a.probes.empty() ? nullptr : &probes, a.similarity_threshold, o);
    });
    return ok;
}

int report_failures(const SubprocessResult& result) {
    if (result.failures.empty()) return ok;
    std::cerr << "error: " << result.failures.size() << " image(s) could not be scored\n";
    for (const auto& [id, reason] : result.failures) std::cerr << "  " << id << ": " << reason << '\n';
    return coverage_failure;
}

int cmd_score(const Args& a) {
    const auto m = load_manifest(a.manifest);
    std::vector<DetectorEndpoint> endpoints;
    for (const auto& path : a.scores)
        endpoints.push_back({DetectorEndpoint::Kind::score_file, {}, path, std::chrono::seconds(a.timeout)});
    for (const auto& spec : a.detector_cmds) endpoints.push_back(parse_detector_cmd(spec, a.timeout));
    if (endpoints.empty()) throw ValidationError("score needs --detector-cmd or --scores");
    const auto requests = score_requests(m);
    const auto result = collect_scores(endpoints, requests, {&m, true});
    emit(a.out, [&](std::ostream& o) { write_scores(result.fragment, o); });
    return report_failures(result);
}

std::unique_ptr<SimilarityBackend> make_backend(const Args& a, const DatasetManifest& m) {
    if (!a.embeddings.empty()) return std::make_unique<EmbeddingBackend>(load_embeddings(a.embeddings));
    if (!a.hashes.empty()) return std::make_unique<HashBackend>(load_hash_cache(a.hashes));
    return std::make_unique<HashBackend>(hash_manifest_images(m));
}

int cmd_eval(const Args& a) {
    const auto m = load_manifest(a.manifest);
    EvalOptions opts;
    const auto mode = parse_mode(a.mode);
    if (!mode) throw ValidationError("unknown mode '" + a.mode + "'");
    opts.mode = *mode;
    opts.similarity_threshold = a.similarity_threshold;
    opts.basic_only = a.basic_only;
    opts.skip_missing = a.skip_missing;
    opts.global_eer = a.global_eer;
    if (!a.best_by.empty()) {
        opts.best_by = parse_metric(a.best_by);
        if (!opts.best_by) throw ValidationError("unknown metric '" + a.best_by + "' (ba_fixed, ba_eer, auc)");
    }

    auto scores = load_all_scores(a, &m);
    int status = ok;
    if (!a.detector_cmds.empty()) {
        std::vector<DetectorEndpoint> endpoints;
        for (const auto& spec : a.detector_cmds) endpoints.push_back(parse_detector_cmd(spec, a.timeout));
        const auto result = collect_scores(endpoints, score_requests(m), {&m, true});
        scores.merge(result.fragment);
        if (!a.skip_missing) status = report_failures(result);
        if (status != ok) return status;
    }

    std::unique_ptr<SimilarityBackend> backend;
    if (opts.mode == EvalMode::rasid_vs_direct) backend = make_backend(a, m);
    const auto report = evaluate(m, scores, opts, std::move(backend));

    const std::string stem(to_string(opts.mode));
    write_table(report.table, a, stem);
    if (!a.out.empty()) {
        const auto header = generation_header(!a.no_header);
        const fs::path dir(a.out);
        emit((dir / "pairs.csv").string(), [&](std::ostream& o) { write_pairs_csv(report.pairs, o, header); });
        if (opts.mode == EvalMode::rasid_vs_direct)
            emit((dir / "provenance.tsv").string(), [&](std::ostream& o) { write_provenance_ledger(report.provenance, o); });
    }
    return ok;
}

// Re-render a CSV report, e.g. as markdown.
int cmd_report(const Args& a) {
    std::ifstream in(a.input);
    if (!in) throw Error("cannot open '" + a.input + "'");
    const auto table = read_csv(in, a.input);
    const auto header = generation_header(!a.no_header);
    emit(a.out, [&](std::ostream& o) {
        if (a.format == "csv") write_csv(table, o, header);
        else write_markdown(table, o, header);
    });
    return ok;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Evaluate synthetic image detectors on fact-checked image collections"};
    app.set_version_flag("--version", std::string(version));
    app.require_subcommand(1);
    Args a;

    auto manifest_opt = [&](CLI::App* cmd) {
        cmd->add_option("--manifest", a.manifest, "Manifest (JSON lines)")->required()->check(CLI::ExistingFile);
    };
    auto header_opt = [&](CLI::App* cmd) {
        cmd->add_flag("--no-header", a.no_header, "Omit the generation timestamp line");
    };
    auto format_opt = [&](CLI::App* cmd) {
        cmd->add_option("--format", a.format, "csv, markdown or all")
            ->check(CLI::IsMember({"csv", "markdown", "all"}))
            ->capture_default_str();
    };
    auto detector_opts = [&](CLI::App* cmd) {
        cmd->add_option("--detector-cmd", a.detector_cmds, "NAME[:VARIANT]=COMMAND speaking the line protocol");
        cmd->add_option("--timeout", a.timeout, "Per-detector timeout in seconds")->capture_default_str();
    };

    auto* validate = app.add_subcommand("validate", "Check a manifest");
    manifest_opt(validate);

    auto* stats = app.add_subcommand("stats", "Dataset overview per subset");
    manifest_opt(stats);
    stats->add_option("--out", a.out, "Output directory (stdout when omitted)");
    format_opt(stats);
    header_opt(stats);

    auto* hash = app.add_subcommand("hash", "Perceptual hashes of the manifest images");
    manifest_opt(hash);
    hash->add_option("--out", a.out, "Hash cache file (stdout when omitted)");

    auto* index = app.add_subcommand("index", "Near-duplicate pairs from a hash cache");
    index->add_option("--hashes", a.hashes, "Hash cache to index")->required()->check(CLI::ExistingFile);
    index->add_option("--probes", a.probes, "Hash cache of query images (default: the indexed ones)")
        ->check(CLI::ExistingFile);
    index->add_option("--similarity-threshold", a.similarity_threshold)->capture_default_str();
    index->add_option("--out", a.out, "Output file (stdout when omitted)");

    auto* score = app.add_subcommand("score", "Collect detector scores");
    manifest_opt(score);
    score->add_option("--scores", a.scores, "Existing score files to merge")->check(CLI::ExistingFile);
    detector_opts(score);
    score->add_option("--out", a.out, "Score file (stdout when omitted)");

    auto* eval = app.add_subcommand("eval", "Run one evaluation");
    manifest_opt(eval);
    eval->add_option("--scores", a.scores, "Score files")->check(CLI::ExistingFile);
    detector_opts(eval);
    eval->add_option("--mode", a.mode)
        ->check(CLI::IsMember({"fixed_threshold", "eer", "per_real_dataset", "basic_only", "lifespan_quartiles",
                               "rasid_vs_direct"}))
        ->capture_default_str();
    eval->add_option("--hashes", a.hashes, "Hash cache for retrieval (computed from images when omitted)")
        ->check(CLI::ExistingFile);
    eval->add_option("--embeddings", a.embeddings, "Embedding file for retrieval")->check(CLI::ExistingFile);
    eval->add_option("--similarity-threshold", a.similarity_threshold)->capture_default_str();
    eval->add_flag("--basic-only", a.basic_only, "Evaluate basic synthetic images only");
    eval->add_option("--best-by", a.best_by, "Keep the best variant per detector by ba_fixed, ba_eer or auc");
    eval->add_flag("--skip-missing", a.skip_missing, "Drop images without a score instead of failing");
    eval->add_flag("--global-eer", a.global_eer, "One EER threshold per detector instead of per pair");
    eval->add_option("--out", a.out, "Output directory (markdown table on stdout when omitted)");
    format_opt(eval);
    header_opt(eval);

    auto* report = app.add_subcommand("report", "Render a CSV report");
    report->add_option("input", a.input, "CSV report")->required()->check(CLI::ExistingFile);
    report->add_option("--out", a.out, "Output file (stdout when omitted)");
    report->add_option("--format", a.format, "csv or markdown")
        ->check(CLI::IsMember({"csv", "markdown", "all"}));
    header_opt(report);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*validate) return cmd_validate(a);
        if (*stats) return cmd_stats(a);
        if (*hash) return cmd_hash(a);
        if (*index) return cmd_index(a);
        if (*score) return cmd_score(a);
        if (*eval) return cmd_eval(a);
        if (*report) return cmd_report(a);
    } catch (const CoverageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        for (const auto& m : e.missing()) std::cerr << "  missing: " << m << '\n';
        return coverage_failure;
    } catch (const ProtocolError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return protocol_failure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return validation_failure;
    }
    return validation_failure;
}
