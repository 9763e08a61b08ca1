#pragma once

#include <chrono>
#include <compare>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace sidwatch {

class DatasetManifest;

struct DetectorId {
    std::string name;
    std::string variant; // empty when the method ships a single model

    // "NAME" or "NAME:VARIANT".
    std::string label() const { return variant.empty() ? name : name + ":" + variant; }
    static DetectorId parse_label(std::string_view label);

    auto operator<=>(const DetectorId&) const = default;
};

// Raw detector outputs in [0,1], higher = more likely synthetic.
class ScoreTable {
public:
    using Column = std::map<std::string, double>;

    // Throws std::out_of_range for a score outside [0,1] (or NaN) and
    // std::invalid_argument when (detector, id) is already present.
    void set(const DetectorId& detector, const std::string& image_id, double score);
    std::optional<double> get(const DetectorId& detector, std::string_view image_id) const;

    std::vector<DetectorId> detectors() const;
    const Column& column(const DetectorId& detector) const;
    std::set<std::string> coverage(const DetectorId& detector) const;
    std::size_t size() const;
    bool empty() const { return size() == 0; }

    // Union over disjoint keys; overlapping keys throw std::invalid_argument.
    void merge(const ScoreTable& other);

    bool operator==(const ScoreTable&) const = default;

private:
    std::map<DetectorId, Column> columns_;
};

struct ScoreLoadOptions {
    // When set, image ids must exist in the manifest.
    const DatasetManifest* manifest = nullptr;
    // Unknown ids are an error when strict, otherwise dropped with a warning.
    bool strict_ids = true;
};

// Score file: "detector<TAB>variant<TAB>image_id<TAB>score" per line; the
// variant column may be empty. Errors carry the line number.
ScoreTable read_scores(std::istream& in, const std::string& source = "<scores>", const ScoreLoadOptions& options = {},
                       std::vector<std::string>* warnings = nullptr);
ScoreTable load_scores(const std::filesystem::path& path, const ScoreLoadOptions& options = {},
                       std::vector<std::string>* warnings = nullptr);
// Scores written with 6 decimal digits, rows ordered by detector then id.
void write_scores(const ScoreTable& table, std::ostream& out);

struct DetectorEndpoint {
    enum class Kind { score_file, subprocess };

    Kind kind = Kind::subprocess;
    DetectorId detector;
    // Score file path, or a shell command line run via /bin/sh -c.
    std::string location;
    std::chrono::seconds timeout{300};
};

struct ScoreRequest {
    std::string image_id;
    std::filesystem::path path; // made absolute before sending
};

struct SubprocessResult {
    ScoreTable fragment;
    // "image_id<TAB>ERROR<TAB>reason" records: (image id, reason).
    std::vector<std::pair<std::string, std::string>> failures;
};

// Drives one detector child: one request line "image_id<TAB>absolute_path"
// per image, then end-of-input; the child answers "image_id<TAB>score" lines
// in any order and exits 0. Throws ProtocolError on a malformed or unexpected
// line, a duplicate answer, a nonzero exit, a timeout, or missing answers
// (the message lists the missing ids).
SubprocessResult score_via_subprocess(const DetectorEndpoint& endpoint, std::span<const ScoreRequest> requests);

// Runs every endpoint (score files are loaded, subprocesses driven
// concurrently) and merges the results.
SubprocessResult collect_scores(std::span<const DetectorEndpoint> endpoints, std::span<const ScoreRequest> requests,
                                const ScoreLoadOptions& options = {});

struct MissingScore {
    DetectorId detector;
    std::string image_id;

    auto operator<=>(const MissingScore&) const = default;
};

// Every (detector, id) pair without a score, ordered by detector then id.
std::vector<MissingScore> check_coverage(const ScoreTable& table, std::span<const std::string> image_ids,
                                         std::span<const DetectorId> detectors);

} // namespace sidwatch
