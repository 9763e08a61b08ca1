#include "sidwatch/manifest.hpp"

#include "sidwatch/errors.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <memory>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_set>

namespace sidwatch {

namespace {

using json = nlohmann::json;

bool parse_fixed_int(std::string_view text, std::size_t pos, std::size_t len, int& out) {
    if (pos + len > text.size()) return false;
    auto first = text.data() + pos;
    auto last = first + len;
    if (!std::all_of(first, last, [](char c) { return c >= '0' && c <= '9'; })) return false;
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc{} && ptr == last;
}

int hex_value(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

} // namespace

std::optional<Timestamp> parse_rfc3339(std::string_view s) {
    using namespace std::chrono;
    // YYYY-MM-DDTHH:MM:SS
    if (s.size() < 20) return std::nullopt;
    int y, mo, d, h, mi, sec;
    if (!parse_fixed_int(s, 0, 4, y) || s[4] != '-' || !parse_fixed_int(s, 5, 2, mo) || s[7] != '-' ||
        !parse_fixed_int(s, 8, 2, d))
        return std::nullopt;
    if (s[10] != 'T' && s[10] != 't' && s[10] != ' ') return std::nullopt;
    if (!parse_fixed_int(s, 11, 2, h) || s[13] != ':' || !parse_fixed_int(s, 14, 2, mi) || s[16] != ':' ||
        !parse_fixed_int(s, 17, 2, sec))
        return std::nullopt;
    std::size_t pos = 19;
    if (pos < s.size() && s[pos] == '.') {
        ++pos;
        std::size_t digits = 0;
        while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') {
            ++pos;
            ++digits;
        }
        if (digits == 0) return std::nullopt;
    }
    if (pos >= s.size()) return std::nullopt;
    int offset_minutes = 0;
    if (s[pos] == 'Z' || s[pos] == 'z') {
        ++pos;
    } else if (s[pos] == '+' || s[pos] == '-') {
        int oh, om;
        if (!parse_fixed_int(s, pos + 1, 2, oh) || pos + 3 >= s.size() || s[pos + 3] != ':' ||
            !parse_fixed_int(s, pos + 4, 2, om) || oh > 23 || om > 59)
            return std::nullopt;
        offset_minutes = (oh * 60 + om) * (s[pos] == '+' ? 1 : -1);
        pos += 6;
    } else {
        return std::nullopt;
    }
    if (pos != s.size()) return std::nullopt;

    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    // Leap second 60 is representable in RFC-3339; fold it into the next second.
    if (!ymd.ok() || h > 23 || mi > 59 || sec > 60) return std::nullopt;
    const auto t = sys_days{ymd} + hours{h} + minutes{mi} + seconds{sec} - minutes{offset_minutes};
    return time_point_cast<seconds>(t);
}

std::string format_rfc3339(Timestamp t) {
    using namespace std::chrono;
    const auto day_point = floor<days>(t);
    const year_month_day ymd{day_point};
    const hh_mm_ss hms{t - day_point};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                  static_cast<int>(hms.seconds().count()));
    return buf;
}

std::optional<ContentDigest> ContentDigest::from_hex(std::string_view hex) {
    if (hex.size() != 64) return std::nullopt;
    std::array<std::uint8_t, 32> bytes{};
    for (std::size_t i = 0; i < 32; ++i) {
        const int hi = hex_value(hex[2 * i]);
        const int lo = hex_value(hex[2 * i + 1]);
        if (hi < 0 || lo < 0) return std::nullopt;
        bytes[i] = static_cast<std::uint8_t>(hi * 16 + lo);
    }
    return ContentDigest{bytes};
}

ContentDigest ContentDigest::of_bytes(std::span<const std::uint8_t> data) {
    std::array<std::uint8_t, 32> out{};
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 || len != 32)
        throw Error("SHA-256 computation failed");
    return ContentDigest{out};
}

ContentDigest ContentDigest::of_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw Error("SHA-256 init failed");
    std::array<char, 1 << 16> buf;
    while (in) {
        in.read(buf.data(), buf.size());
        if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    std::array<std::uint8_t, 32> out{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), out.data(), &len);
    return ContentDigest{out};
}

std::string ContentDigest::hex() const {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(64, '0');
    for (std::size_t i = 0; i < 32; ++i) {
        out[2 * i] = digits[bytes_[i] >> 4];
        out[2 * i + 1] = digits[bytes_[i] & 0xf];
    }
    return out;
}

std::string_view to_string(Label label) { return label == Label::real ? "real" : "synthetic"; }

std::string_view to_string(SubsetKind kind) {
    return kind == SubsetKind::real_dataset ? "real_dataset" : "synthetic_subset";
}

bool earlier(const ImageRecord& a, const ImageRecord& b) {
    if (a.first_seen.has_value() != b.first_seen.has_value()) return a.first_seen.has_value();
    if (a.first_seen && *a.first_seen != *b.first_seen) return *a.first_seen < *b.first_seen;
    return a.id < b.id;
}

namespace {

// Record-level invariants; returns an error message or empty.
std::string check_record(const ImageRecord& r) {
    if (r.id.empty()) return "empty id";
    if (r.subset.name.empty()) return "empty subset";
    if (r.valid && !r.content_digest) return "missing mandatory field 'content_digest'";
    if (r.label == Label::synthetic && !r.first_seen)
        return "missing mandatory field 'first_seen' on synthetic record '" + r.id + "'";
    if (r.label == Label::synthetic && r.valid && !r.basic)
        return "missing mandatory field 'basic' on synthetic record '" + r.id + "'";
    const bool kind_matches = (r.subset.kind == SubsetKind::synthetic_subset) == (r.label == Label::synthetic);
    if (!kind_matches)
        return "label '" + std::string(to_string(r.label)) + "' inconsistent with subset kind '" +
               std::string(to_string(r.subset.kind)) + "'";
    return {};
}

} // namespace

DatasetManifest::DatasetManifest(std::vector<ImageRecord> records) : records_(std::move(records)) {
    for (std::size_t i = 0; i < records_.size(); ++i) {
        const auto& r = records_[i];
        if (auto msg = check_record(r); !msg.empty()) throw ValidationError("record '" + r.id + "': " + msg);
        if (!by_id_.emplace(r.id, i).second) throw ValidationError("duplicate id '" + r.id + "'");
        auto [it, inserted] = subsets_.emplace(r.subset.name, r.subset);
        if (!inserted && it->second.kind != r.subset.kind)
            throw ValidationError("subset '" + r.subset.name + "' used with conflicting kinds");
    }
}

const ImageRecord* DatasetManifest::find(std::string_view id) const {
    const auto it = by_id_.find(std::string(id));
    return it == by_id_.end() ? nullptr : &records_[it->second];
}

std::vector<ImageRecord> DatasetManifest::subset_records(std::string_view subset) const {
    std::vector<ImageRecord> out;
    for (const auto& r : records_)
        if (r.valid && r.subset.name == subset) out.push_back(r);
    return out;
}

std::vector<std::string> DatasetManifest::synthetic_subsets() const {
    std::vector<std::string> out;
    for (const auto& [name, id] : subsets_)
        if (id.kind == SubsetKind::synthetic_subset) out.push_back(name);
    return out;
}

std::vector<std::string> DatasetManifest::real_datasets() const {
    std::vector<std::string> out;
    for (const auto& [name, id] : subsets_)
        if (id.kind == SubsetKind::real_dataset) out.push_back(name);
    return out;
}

namespace {

const std::set<std::string, std::less<>> known_fields = {
    "id", "content_digest", "first_seen", "subset", "subset_kind", "label",
    "basic", "valid", "source_url", "file_path"};

std::string require_string(const json& obj, const char* field, const std::string& source, std::size_t line) {
    const auto it = obj.find(field);
    if (it == obj.end() || it->is_null()) throw ParseError(source, line, std::string("missing mandatory field '") + field + "'");
    if (!it->is_string()) throw ParseError(source, line, std::string("field '") + field + "' must be a string");
    return it->get<std::string>();
}

std::optional<std::string> optional_string(const json& obj, const char* field, const std::string& source,
                                           std::size_t line) {
    const auto it = obj.find(field);
    if (it == obj.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) throw ParseError(source, line, std::string("field '") + field + "' must be a string");
    return it->get<std::string>();
}

std::optional<bool> optional_bool(const json& obj, const char* field, const std::string& source, std::size_t line) {
    const auto it = obj.find(field);
    if (it == obj.end() || it->is_null()) return std::nullopt;
    if (!it->is_boolean()) throw ParseError(source, line, std::string("field '") + field + "' must be a boolean");
    return it->get<bool>();
}

ImageRecord parse_record(const json& obj, const std::string& source, std::size_t line) {
    if (!obj.is_object()) throw ParseError(source, line, "record must be a JSON object");
    ImageRecord r;
    r.id = require_string(obj, "id", source, line);
    if (r.id.empty()) throw ParseError(source, line, "empty id");

    const auto label = require_string(obj, "label", source, line);
    if (label == "real") r.label = Label::real;
    else if (label == "synthetic") r.label = Label::synthetic;
    else throw ParseError(source, line, "unknown label '" + label + "'");

    r.subset.name = require_string(obj, "subset", source, line);
    if (auto kind = optional_string(obj, "subset_kind", source, line)) {
        if (*kind == "synthetic_subset") r.subset.kind = SubsetKind::synthetic_subset;
        else if (*kind == "real_dataset") r.subset.kind = SubsetKind::real_dataset;
        else throw ParseError(source, line, "unknown subset kind '" + *kind + "'");
    } else {
        r.subset.kind = r.label == Label::synthetic ? SubsetKind::synthetic_subset : SubsetKind::real_dataset;
    }

    r.valid = optional_bool(obj, "valid", source, line).value_or(true);
    if (auto digest = optional_string(obj, "content_digest", source, line)) {
        r.content_digest = ContentDigest::from_hex(*digest);
        if (!r.content_digest) throw ParseError(source, line, "content_digest must be 64 hex digits");
    }
    if (auto ts = optional_string(obj, "first_seen", source, line)) {
        r.first_seen = parse_rfc3339(*ts);
        if (!r.first_seen) throw ParseError(source, line, "unparsable timestamp '" + *ts + "'");
    }
    r.basic = optional_bool(obj, "basic", source, line);
    r.source_url = optional_string(obj, "source_url", source, line);
    r.file_path = optional_string(obj, "file_path", source, line);

    for (const auto& [key, value] : obj.items())
        if (!known_fields.contains(key)) r.extra.emplace(key, value.dump());

    if (auto msg = check_record(r); !msg.empty()) throw ParseError(source, line, msg);
    return r;
}

} // namespace

DatasetManifest parse_manifest(std::istream& in, const std::string& source) {
    std::vector<ImageRecord> records;
    std::unordered_set<std::string> seen;
    std::map<std::string, SubsetKind> kinds;
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (!text.empty() && text.back() == '\r') text.pop_back();
        if (std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c); })) continue;
        json obj;
        try {
            obj = json::parse(text);
        } catch (const json::parse_error& e) {
            throw ParseError(source, line, std::string("invalid JSON: ") + e.what());
        }
        auto record = parse_record(obj, source, line);
        if (!seen.insert(record.id).second) throw ParseError(source, line, "duplicate id '" + record.id + "'");
        auto [it, inserted] = kinds.emplace(record.subset.name, record.subset.kind);
        if (!inserted && it->second != record.subset.kind)
            throw ParseError(source, line, "subset '" + record.subset.name + "' used with conflicting kinds");
        records.push_back(std::move(record));
    }
    return DatasetManifest(std::move(records));
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open manifest '" + path.string() + "'");
    auto manifest = parse_manifest(in, path.string());
    manifest.base_dir = path.parent_path();
    return manifest;
}

std::string serialize_record(const ImageRecord& r) {
    nlohmann::ordered_json obj;
    obj["id"] = r.id;
    if (r.content_digest) obj["content_digest"] = r.content_digest->hex();
    if (r.first_seen) obj["first_seen"] = format_rfc3339(*r.first_seen);
    obj["subset"] = r.subset.name;
    obj["subset_kind"] = std::string(to_string(r.subset.kind));
    obj["label"] = std::string(to_string(r.label));
    if (r.basic) obj["basic"] = *r.basic;
    if (!r.valid) obj["valid"] = false;
    if (r.source_url) obj["source_url"] = *r.source_url;
    if (r.file_path) obj["file_path"] = *r.file_path;
    for (const auto& [key, value] : r.extra) obj[key] = nlohmann::ordered_json::parse(value);
    return obj.dump();
}

void serialize_manifest(const DatasetManifest& manifest, std::ostream& out) {
    for (const auto& r : manifest.records()) out << serialize_record(r) << '\n';
}

std::vector<DuplicateGroup> dedup_by_content(std::span<const ImageRecord> records) {
    std::map<ContentDigest, std::vector<const ImageRecord*>> by_digest;
    for (const auto& r : records) {
        if (!r.content_digest) throw std::invalid_argument("record '" + r.id + "' has no content digest");
        by_digest[*r.content_digest].push_back(&r);
    }
    std::vector<DuplicateGroup> groups;
    groups.reserve(by_digest.size());
    for (auto& [digest, members] : by_digest) {
        std::sort(members.begin(), members.end(), [](auto* a, auto* b) { return earlier(*a, *b); });
        DuplicateGroup g;
        g.content_digest = digest;
        g.canonical_id = members.front()->id;
        for (const auto* m : members) g.member_ids.push_back(m->id);
        groups.push_back(std::move(g));
    }
    return groups;
}

std::vector<ImageRecord> unique_images(std::span<const ImageRecord> records) {
    std::unordered_map<std::string, const ImageRecord*> by_id;
    for (const auto& r : records) by_id.emplace(r.id, &r);
    std::vector<ImageRecord> out;
    for (const auto& g : dedup_by_content(records)) out.push_back(*by_id.at(g.canonical_id));
    std::sort(out.begin(), out.end(), earlier);
    return out;
}

std::span<const std::string> QuartileAssignment::members(Quartile q) const {
    const auto i = static_cast<std::size_t>(q) - 1;
    const std::size_t begin = i == 0 ? 0 : boundaries[i - 1];
    const std::size_t end = i == 3 ? ordered_ids.size() : boundaries[i];
    return std::span<const std::string>(ordered_ids).subspan(begin, end - begin);
}

std::optional<Quartile> QuartileAssignment::find(std::string_view id) const {
    const auto it = quartile_of.find(std::string(id));
    if (it == quartile_of.end()) return std::nullopt;
    return it->second;
}

QuartileAssignment assign_quartiles(std::span<const ImageRecord> subset_records) {
    if (subset_records.empty()) throw ValidationError("cannot quarter an empty subset");
    const std::string& subset = subset_records.front().subset.name;
    for (const auto& r : subset_records) {
        if (r.subset.name != subset) throw ValidationError("records from several subsets passed to assign_quartiles");
        if (r.subset.kind != SubsetKind::synthetic_subset)
            throw ValidationError("subset '" + subset + "' is not a synthetic subset");
        if (!r.first_seen) throw ValidationError("record '" + r.id + "' has no first_seen");
    }
    const std::size_t n = subset_records.size();
    if (n < 4) throw ValidationError("subset '" + subset + "' too small to quarter (" + std::to_string(n) + " records)");

    std::vector<const ImageRecord*> sorted;
    for (const auto& r : subset_records) sorted.push_back(&r);
    std::stable_sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return earlier(*a, *b); });

    QuartileAssignment qa;
    qa.subset = subset;
    for (std::size_t i = 1; i <= 3; ++i) qa.boundaries[i - 1] = i * n / 4;
    for (std::size_t i = 0; i < n; ++i) {
        qa.ordered_ids.push_back(sorted[i]->id);
        std::uint8_t q = 1;
        while (q <= 3 && i >= qa.boundaries[q - 1]) ++q;
        qa.quartile_of.emplace(sorted[i]->id, static_cast<Quartile>(q));
    }
    return qa;
}

std::vector<ImageRecord> filter_basic(std::span<const ImageRecord> records) {
    std::vector<ImageRecord> out;
    std::copy_if(records.begin(), records.end(), std::back_inserter(out), [](const auto& r) { return r.is_basic(); });
    return out;
}

std::vector<SubsetSummary> summarize(const DatasetManifest& manifest) {
    using namespace std::chrono;
    std::vector<SubsetSummary> rows;
    SubsetSummary total;
    total.subset = "Total";
    for (const auto& name : manifest.synthetic_subsets()) {
        SubsetSummary row;
        row.subset = name;
        std::vector<ImageRecord> valid;
        for (const auto& r : manifest.records()) {
            if (r.subset.name != name) continue;
            ++row.total_urls;
            if (r.valid) valid.push_back(r);
        }
        row.valid_urls = valid.size();
        if (!valid.empty()) {
            const auto uniques = unique_images(valid);
            row.unique_images = uniques.size();
            row.basic_images = static_cast<std::size_t>(
                std::count_if(uniques.begin(), uniques.end(), [](const auto& r) { return r.is_basic(); }));
            std::optional<Timestamp> lo, hi;
            for (const auto& r : valid) {
                if (!r.first_seen) continue;
                if (!lo || *r.first_seen < *lo) lo = r.first_seen;
                if (!hi || *r.first_seen > *hi) hi = r.first_seen;
            }
            if (lo) {
                row.lifespan_days = duration_cast<days>(*hi - *lo).count();
                row.lifespan_months = std::llround(static_cast<double>(row.lifespan_days) / 30.436875);
            }
        }
        total.lifespan_days += row.lifespan_days;
        total.lifespan_months += row.lifespan_months;
        total.total_urls += row.total_urls;
        total.valid_urls += row.valid_urls;
        total.unique_images += row.unique_images;
        total.basic_images += row.basic_images;
        rows.push_back(std::move(row));
    }
    rows.push_back(std::move(total));
    return rows;
}

} // namespace sidwatch
