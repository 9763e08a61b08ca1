#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace sidwatch {

// Decoded 8-bit image, interleaved RGB (3 channels) or gray (1 channel).
struct Image {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<std::uint8_t> pixels;

    std::uint8_t at(int x, int y, int c = 0) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
};

// Decodes any format OpenCV's imgcodecs understands. Alpha is dropped, 16-bit
// input is scaled to 8 bits. Throws ImageError naming image_id on failure.
Image load_image(const std::filesystem::path& path, const std::string& image_id);

struct PerceptualHash {
    std::uint64_t bits = 0;

    std::string hex() const;
    static std::optional<PerceptualHash> from_hex(std::string_view text);

    auto operator<=>(const PerceptualHash&) const = default;
};

inline constexpr int hash_bits = 64;

// 64-bit DCT hash:
//   1. luma = 0.299 R + 0.587 G + 0.114 B (gray input used as-is)
//   2. area-average resample to 32x32 (exact overlap weights)
//   3. unnormalized 2-D DCT-II
//   4. coefficients at rows 0..7, columns 1..8, row-major -> slots 0..63
//      (DC excluded); slot k is bit 63-k
//   5. bit set iff coefficient > median of the 64 (strict)
// Coefficients with magnitude below 1e-7 are taken as exactly zero first.
// Throws ImageError if either dimension is below 8.
PerceptualHash compute_phash(const Image& image, const std::string& image_id = "<image>");

// Intermediate used by the hash; exposed for tests.
std::array<double, 64> phash_coefficients(const Image& image);

int hamming_distance(PerceptualHash a, PerceptualHash b);
double hamming_similarity(PerceptualHash a, PerceptualHash b);

// Largest Hamming distance d with 1 - d/64 >= min_similarity, or -1 when no
// distance qualifies (min_similarity > 1).
int radius_for_similarity(double min_similarity);

struct Match {
    std::string id;
    double similarity = 0.0;

    bool operator==(const Match&) const = default;
};

// Descending similarity, then ascending id.
void sort_matches(std::vector<Match>& matches);

// Exact Hamming-radius search over 64-bit hashes (BK-tree). Entries sharing a
// hash live in one node. Build, then query from any number of threads.
class NearDupIndex {
public:
    void insert(const std::string& id, PerceptualHash hash);

    std::vector<Match> query(PerceptualHash probe, double min_similarity) const;
    std::vector<Match> query_radius(PerceptualHash probe, int radius) const;

    bool contains(std::string_view id) const { return ids_.contains(std::string(id)); }
    std::size_t size() const noexcept { return ids_.size(); }
    bool empty() const noexcept { return ids_.empty(); }

private:
    struct Node {
        PerceptualHash hash;
        std::vector<std::string> ids;
        std::array<std::int32_t, hash_bits + 1> child;
    };
    std::vector<Node> nodes_;
    std::unordered_set<std::string> ids_;
};

// Unit-normalized embedding; max(0, u.v). Throws std::invalid_argument on
// dimension mismatch.
double cosine_similarity(std::span<const double> u, std::span<const double> v);

using HashTable = std::map<std::string, PerceptualHash>;
using EmbeddingTable = std::map<std::string, std::vector<double>>;

// Hash cache: "id<TAB>16 hex digits" per line.
HashTable read_hash_cache(std::istream& in, const std::string& source = "<hashes>");
HashTable load_hash_cache(const std::filesystem::path& path);
void write_hash_cache(const HashTable& hashes, std::ostream& out);

// Embedding file: "id<TAB>comma-separated reals" per line. All vectors must
// share one dimension and have unit norm within 1e-6.
EmbeddingTable read_embeddings(std::istream& in, const std::string& source = "<embeddings>");
EmbeddingTable load_embeddings(const std::filesystem::path& path);

// Near-duplicate search over a searchable subset of a feature table. The
// backend knows features for every image; only inserted ids are returned by
// query().
class SimilarityBackend {
public:
    virtual ~SimilarityBackend() = default;

    virtual bool has_features(std::string_view id) const = 0;
    virtual void insert(const std::string& id) = 0;
    // Searchable entries with similarity >= min_similarity to the features of
    // probe_id, sorted per sort_matches. probe_id must have features.
    virtual std::vector<Match> query(std::string_view probe_id, double min_similarity) const = 0;
    virtual std::size_t size() const = 0;
};

class HashBackend final : public SimilarityBackend {
public:
    explicit HashBackend(HashTable features) : features_(std::move(features)) {}

    bool has_features(std::string_view id) const override;
    void insert(const std::string& id) override;
    std::vector<Match> query(std::string_view probe_id, double min_similarity) const override;
    std::size_t size() const override { return index_.size(); }

private:
    HashTable features_;
    NearDupIndex index_;
};

// Exhaustive cosine scan; exact like the hash index.
class EmbeddingBackend final : public SimilarityBackend {
public:
    explicit EmbeddingBackend(EmbeddingTable features) : features_(std::move(features)) {}

    bool has_features(std::string_view id) const override;
    void insert(const std::string& id) override;
    std::vector<Match> query(std::string_view probe_id, double min_similarity) const override;
    std::size_t size() const override { return searchable_.size(); }

private:
    EmbeddingTable features_;
    std::vector<std::string> searchable_;
};

} // namespace sidwatch
