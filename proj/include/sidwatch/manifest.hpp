#pragma once

#include <array>
#include <chrono>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace sidwatch {

using Timestamp = std::chrono::sys_seconds;

// RFC-3339 date-time ("2023-03-25T14:03:00Z", "...+02:00", fractional seconds
// accepted and discarded). Result is normalized to UTC.
std::optional<Timestamp> parse_rfc3339(std::string_view text);
std::string format_rfc3339(Timestamp t);

// SHA-256 of raw file bytes.
class ContentDigest {
public:
    ContentDigest() = default;
    explicit ContentDigest(const std::array<std::uint8_t, 32>& bytes) : bytes_(bytes) {}

    static std::optional<ContentDigest> from_hex(std::string_view hex);
    static ContentDigest of_bytes(std::span<const std::uint8_t> data);
    static ContentDigest of_file(const std::filesystem::path& path);

    std::string hex() const;
    const std::array<std::uint8_t, 32>& bytes() const noexcept { return bytes_; }

    auto operator<=>(const ContentDigest&) const = default;

private:
    std::array<std::uint8_t, 32> bytes_{};
};

enum class Label { real, synthetic };
enum class SubsetKind { synthetic_subset, real_dataset };

std::string_view to_string(Label label);
std::string_view to_string(SubsetKind kind);

struct SubsetId {
    std::string name;
    SubsetKind kind = SubsetKind::synthetic_subset;

    auto operator<=>(const SubsetId&) const = default;
};

struct ImageRecord {
    std::string id;
    std::optional<ContentDigest> content_digest;
    std::optional<Timestamp> first_seen;
    SubsetId subset;
    Label label = Label::synthetic;
    std::optional<bool> basic;
    // False for a curated URL that no longer resolves to an image (counted
    // in "total URLs" but never evaluated). Such records may lack a digest.
    bool valid = true;
    std::optional<std::string> source_url;
    std::optional<std::string> file_path;
    // Unknown manifest fields, name -> serialized JSON value, kept for round-trip.
    std::map<std::string, std::string> extra;

    bool is_basic() const { return basic.value_or(false); }
};

class DatasetManifest {
public:
    DatasetManifest() = default;
    // Validates cross-record invariants (unique ids, subset kind/label agreement).
    explicit DatasetManifest(std::vector<ImageRecord> records);

    const std::vector<ImageRecord>& records() const noexcept { return records_; }
    const std::map<std::string, SubsetId>& subsets() const noexcept { return subsets_; }
    const ImageRecord* find(std::string_view id) const;

    // Valid records of a subset, in manifest order.
    std::vector<ImageRecord> subset_records(std::string_view subset) const;
    std::vector<std::string> synthetic_subsets() const;
    std::vector<std::string> real_datasets() const;

    // Directory file_path entries are resolved against.
    std::filesystem::path base_dir;

private:
    std::vector<ImageRecord> records_;
    std::map<std::string, SubsetId> subsets_;
    std::unordered_map<std::string, std::size_t> by_id_;
};

DatasetManifest parse_manifest(std::istream& in, const std::string& source = "<manifest>");
DatasetManifest load_manifest(const std::filesystem::path& path);
void serialize_manifest(const DatasetManifest& manifest, std::ostream& out);
std::string serialize_record(const ImageRecord& record);

struct DuplicateGroup {
    ContentDigest content_digest;
    std::vector<std::string> member_ids;
    std::string canonical_id;
};

// Groups records by content digest. Canonical member: earliest first_seen
// (records without one sort last), ties broken by smallest id. Groups are
// returned ordered by digest. Throws std::invalid_argument on a record with
// no digest.
std::vector<DuplicateGroup> dedup_by_content(std::span<const ImageRecord> records);

// The canonical record of every duplicate group, ordered by (first_seen, id).
std::vector<ImageRecord> unique_images(std::span<const ImageRecord> records);

enum class Quartile : std::uint8_t { q1 = 1, q2 = 2, q3 = 3, q4 = 4 };

struct QuartileAssignment {
    std::string subset;
    // Records sorted by (first_seen, id).
    std::vector<std::string> ordered_ids;
    // Cut indices into ordered_ids: floor(i*n/4), i = 1, 2, 3.
    std::array<std::size_t, 3> boundaries{};
    std::unordered_map<std::string, Quartile> quartile_of;

    std::span<const std::string> members(Quartile q) const;
    std::optional<Quartile> find(std::string_view id) const;
};

QuartileAssignment assign_quartiles(std::span<const ImageRecord> subset_records);

std::vector<ImageRecord> filter_basic(std::span<const ImageRecord> records);

// (first_seen, id) ordering with missing timestamps last.
bool earlier(const ImageRecord& a, const ImageRecord& b);

// One row of the dataset overview table.
struct SubsetSummary {
    std::string subset;
    std::int64_t lifespan_days = 0;
    std::int64_t lifespan_months = 0;
    std::size_t total_urls = 0;
    std::size_t valid_urls = 0;
    std::size_t unique_images = 0;
    std::size_t basic_images = 0;
};

// One row per synthetic subset (sorted by name) followed by a "Total" row of
// column sums.
std::vector<SubsetSummary> summarize(const DatasetManifest& manifest);

} // namespace sidwatch
