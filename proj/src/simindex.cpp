#include "sidwatch/simindex.hpp"

#include "sidwatch/errors.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <stdexcept>

namespace sidwatch {

Image load_image(const std::filesystem::path& path, const std::string& image_id) {
    cv::Mat mat;
    try {
        mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    } catch (const cv::Exception& e) {
        throw ImageError(image_id, "cannot decode '" + path.string() + "': " + e.what());
    }
    if (mat.empty()) throw ImageError(image_id, "cannot decode '" + path.string() + "'");
    if (mat.depth() == CV_16U) mat.convertTo(mat, CV_8U, 1.0 / 257.0);
    else if (mat.depth() != CV_8U) throw ImageError(image_id, "unsupported pixel depth");

    cv::Mat rgb;
    switch (mat.channels()) {
    case 1: rgb = mat; break;
    case 3: cv::cvtColor(mat, rgb, cv::COLOR_BGR2RGB); break;
    case 4: cv::cvtColor(mat, rgb, cv::COLOR_BGRA2RGB); break;
    default: throw ImageError(image_id, "unsupported channel count " + std::to_string(mat.channels()));
    }

    Image img;
    img.width = rgb.cols;
    img.height = rgb.rows;
    img.channels = rgb.channels();
    img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * img.channels);
    const std::size_t row_bytes = static_cast<std::size_t>(img.width) * img.channels;
    for (int y = 0; y < img.height; ++y)
        std::copy_n(rgb.ptr<std::uint8_t>(y), row_bytes, img.pixels.data() + y * row_bytes);
    return img;
}

std::string PerceptualHash::hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(bits));
    return buf;
}

std::optional<PerceptualHash> PerceptualHash::from_hex(std::string_view text) {
    if (text.size() != 16) return std::nullopt;
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v, 16);
    if (ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
    return PerceptualHash{v};
}

namespace {

constexpr int kSide = 32;
constexpr double kSnap = 1e-7;

using Plane = std::vector<double>;

Plane luma_plane(const Image& img) {
    Plane out(static_cast<std::size_t>(img.width) * img.height);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            double v;
            if (img.channels >= 3)
                v = 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
            else
                v = img.at(x, y, 0);
            out[static_cast<std::size_t>(y) * img.width + x] = v;
        }
    }
    return out;
}

// Overlap weights of output cell i (of `out` cells) with the source samples.
struct Span {
    int first = 0;
    std::vector<double> weights;
};

std::vector<Span> area_spans(int in, int out) {
    std::vector<Span> spans(out);
    const double scale = static_cast<double>(in) / out;
    for (int i = 0; i < out; ++i) {
        const double lo = i * scale;
        const double hi = (i + 1) * scale;
        const int first = static_cast<int>(std::floor(lo));
        const int last = std::min(in - 1, static_cast<int>(std::ceil(hi)) - 1);
        spans[i].first = first;
        for (int s = first; s <= last; ++s) {
            const double w = std::min(hi, s + 1.0) - std::max(lo, static_cast<double>(s));
            spans[i].weights.push_back(std::max(0.0, w));
        }
    }
    return spans;
}

Plane area_resize(const Plane& src, int w, int h) {
    const auto xs = area_spans(w, kSide);
    const auto ys = area_spans(h, kSide);
    Plane rows(static_cast<std::size_t>(h) * kSide);
    for (int y = 0; y < h; ++y) {
        for (int ox = 0; ox < kSide; ++ox) {
            double acc = 0.0, wsum = 0.0;
            for (std::size_t k = 0; k < xs[ox].weights.size(); ++k) {
                acc += xs[ox].weights[k] * src[static_cast<std::size_t>(y) * w + xs[ox].first + k];
                wsum += xs[ox].weights[k];
            }
            rows[static_cast<std::size_t>(y) * kSide + ox] = acc / wsum;
        }
    }
    Plane out(kSide * kSide);
    for (int oy = 0; oy < kSide; ++oy) {
        for (int ox = 0; ox < kSide; ++ox) {
            double acc = 0.0, wsum = 0.0;
            for (std::size_t k = 0; k < ys[oy].weights.size(); ++k) {
                acc += ys[oy].weights[k] * rows[(ys[oy].first + k) * kSide + ox];
                wsum += ys[oy].weights[k];
            }
            out[oy * kSide + ox] = acc / wsum;
        }
    }
    return out;
}

} // namespace

std::array<double, 64> phash_coefficients(const Image& image) {
    const Plane small = area_resize(luma_plane(image), image.width, image.height);

    // cos(pi (2n+1) k / 64) for k = 0..8.
    std::array<std::array<double, kSide>, 9> basis{};
    for (int k = 0; k <= 8; ++k)
        for (int n = 0; n < kSide; ++n)
            basis[k][n] = std::cos(std::numbers::pi * (2 * n + 1) * k / (2.0 * kSide));

    // Row pass over columns 0..8, then column pass over rows 0..7.
    std::array<std::array<double, 9>, kSide> row_dct{};
    for (int y = 0; y < kSide; ++y)
        for (int c = 0; c <= 8; ++c) {
            double acc = 0.0;
            for (int x = 0; x < kSide; ++x) acc += small[y * kSide + x] * basis[c][x];
            row_dct[y][c] = acc;
        }

    std::array<double, 64> coeffs{};
    for (int r = 0; r < 8; ++r)
        for (int c = 1; c <= 8; ++c) {
            double acc = 0.0;
            for (int y = 0; y < kSide; ++y) acc += row_dct[y][c] * basis[r][y];
            coeffs[r * 8 + (c - 1)] = std::abs(acc) < kSnap ? 0.0 : acc;
        }
    return coeffs;
}

PerceptualHash compute_phash(const Image& image, const std::string& image_id) {
    if (image.width < 8 || image.height < 8)
        throw ImageError(image_id, "image smaller than 8x8 (" + std::to_string(image.width) + "x" +
                                       std::to_string(image.height) + ")");
    if (image.channels != 1 && image.channels != 3)
        throw ImageError(image_id, "expected 1 or 3 channels");
    if (image.pixels.size() != static_cast<std::size_t>(image.width) * image.height * image.channels)
        throw ImageError(image_id, "pixel buffer size does not match dimensions");

    const auto coeffs = phash_coefficients(image);
    auto sorted = coeffs;
    std::sort(sorted.begin(), sorted.end());
    const double median = (sorted[31] + sorted[32]) / 2.0;

    PerceptualHash h;
    for (int k = 0; k < 64; ++k)
        if (coeffs[k] > median) h.bits |= std::uint64_t{1} << (63 - k);
    return h;
}

int hamming_distance(PerceptualHash a, PerceptualHash b) { return std::popcount(a.bits ^ b.bits); }

double hamming_similarity(PerceptualHash a, PerceptualHash b) {
    return 1.0 - static_cast<double>(hamming_distance(a, b)) / hash_bits;
}

int radius_for_similarity(double min_similarity) {
    if (min_similarity > 1.0) return -1;
    if (min_similarity <= 0.0) return hash_bits;
    int radius = -1;
    for (int d = 0; d <= hash_bits; ++d)
        if (1.0 - static_cast<double>(d) / hash_bits >= min_similarity) radius = d;
    return radius;
}

void sort_matches(std::vector<Match>& matches) {
    std::sort(matches.begin(), matches.end(), [](const Match& a, const Match& b) {
        if (a.similarity != b.similarity) return a.similarity > b.similarity;
        return a.id < b.id;
    });
}

void NearDupIndex::insert(const std::string& id, PerceptualHash hash) {
    if (!ids_.insert(id).second) throw std::invalid_argument("duplicate id '" + id + "' in near-duplicate index");
    auto make_node = [&] {
        Node n;
        n.hash = hash;
        n.ids.push_back(id);
        n.child.fill(-1);
        nodes_.push_back(std::move(n));
        return static_cast<std::int32_t>(nodes_.size() - 1);
    };
    if (nodes_.empty()) {
        make_node();
        return;
    }
    std::size_t cur = 0;
    for (;;) {
        const int d = hamming_distance(nodes_[cur].hash, hash);
        if (d == 0) {
            nodes_[cur].ids.push_back(id);
            return;
        }
        const auto next = nodes_[cur].child[d];
        if (next < 0) {
            const auto created = make_node();
            nodes_[cur].child[d] = created;
            return;
        }
        cur = static_cast<std::size_t>(next);
    }
}

std::vector<Match> NearDupIndex::query_radius(PerceptualHash probe, int radius) const {
    std::vector<Match> out;
    if (nodes_.empty() || radius < 0) return out;
    std::vector<std::size_t> stack{0};
    while (!stack.empty()) {
        const Node& node = nodes_[stack.back()];
        stack.pop_back();
        const int d = hamming_distance(node.hash, probe);
        if (d <= radius) {
            const double sim = 1.0 - static_cast<double>(d) / hash_bits;
            for (const auto& id : node.ids) out.push_back({id, sim});
        }
        // Triangle inequality: children at edge distance k can only hold
        // matches when |k - d| <= radius.
        const int lo = std::max(1, d - radius);
        const int hi = std::min(hash_bits, d + radius);
        for (int k = lo; k <= hi; ++k)
            if (node.child[k] >= 0) stack.push_back(static_cast<std::size_t>(node.child[k]));
    }
    sort_matches(out);
    return out;
}

std::vector<Match> NearDupIndex::query(PerceptualHash probe, double min_similarity) const {
    auto matches = query_radius(probe, radius_for_similarity(min_similarity));
    std::erase_if(matches, [&](const Match& m) { return m.similarity < min_similarity; });
    return matches;
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size())
        throw std::invalid_argument("embedding dimension mismatch (" + std::to_string(u.size()) + " vs " +
                                    std::to_string(v.size()) + ")");
    double dot = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) dot += u[i] * v[i];
    return std::clamp(dot, 0.0, 1.0);
}

namespace {

bool blank(const std::string& s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

} // namespace

HashTable read_hash_cache(std::istream& in, const std::string& source) {
    HashTable out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (blank(line)) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos || tab == 0)
            throw ParseError(source, n, "corrupt hash cache line: expected 'id<TAB>16 hex digits'");
        const auto hash = PerceptualHash::from_hex(std::string_view(line).substr(tab + 1));
        if (!hash) throw ParseError(source, n, "corrupt hash cache line: bad hash '" + line.substr(tab + 1) + "'");
        if (!out.emplace(line.substr(0, tab), *hash).second)
            throw ParseError(source, n, "duplicate id '" + line.substr(0, tab) + "' in hash cache");
    }
    return out;
}

HashTable load_hash_cache(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open hash cache '" + path.string() + "'");
    return read_hash_cache(in, path.string());
}

void write_hash_cache(const HashTable& hashes, std::ostream& out) {
    for (const auto& [id, h] : hashes) out << id << '\t' << h.hex() << '\n';
}

EmbeddingTable read_embeddings(std::istream& in, const std::string& source) {
    EmbeddingTable out;
    std::optional<std::size_t> dim;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (blank(line)) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos || tab == 0)
            throw ParseError(source, n, "corrupt embedding line: expected 'id<TAB>v1,v2,...'");
        std::vector<double> vec;
        std::string_view rest = std::string_view(line).substr(tab + 1);
        while (true) {
            const auto comma = rest.find(',');
            const auto field = rest.substr(0, comma);
            double v = 0.0;
            auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
            if (field.empty() || ec != std::errc{} || ptr != field.data() + field.size() || !std::isfinite(v))
                throw ParseError(source, n, "bad embedding component '" + std::string(field) + "'");
            vec.push_back(v);
            if (comma == std::string_view::npos) break;
            rest.remove_prefix(comma + 1);
        }
        if (dim && *dim != vec.size())
            throw ParseError(source, n, "embedding dimension " + std::to_string(vec.size()) + " differs from " +
                                            std::to_string(*dim));
        dim = vec.size();
        double norm2 = 0.0;
        for (double v : vec) norm2 += v * v;
        if (std::abs(std::sqrt(norm2) - 1.0) > 1e-6) throw ParseError(source, n, "embedding is not unit-normalized");
        const std::string id = line.substr(0, tab);
        if (!out.emplace(id, std::move(vec)).second)
            throw ParseError(source, n, "duplicate id '" + id + "' in embedding file");
    }
    return out;
}

EmbeddingTable load_embeddings(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open embedding file '" + path.string() + "'");
    return read_embeddings(in, path.string());
}

bool HashBackend::has_features(std::string_view id) const { return features_.contains(std::string(id)); }

void HashBackend::insert(const std::string& id) {
    const auto it = features_.find(id);
    if (it == features_.end()) throw CoverageError("no perceptual hash for '" + id + "'", {id});
    index_.insert(id, it->second);
}

std::vector<Match> HashBackend::query(std::string_view probe_id, double min_similarity) const {
    const auto it = features_.find(std::string(probe_id));
    if (it == features_.end())
        throw CoverageError("no perceptual hash for '" + std::string(probe_id) + "'", {std::string(probe_id)});
    return index_.query(it->second, min_similarity);
}

bool EmbeddingBackend::has_features(std::string_view id) const { return features_.contains(std::string(id)); }

void EmbeddingBackend::insert(const std::string& id) {
    if (!features_.contains(id)) throw CoverageError("no embedding for '" + id + "'", {id});
    if (std::find(searchable_.begin(), searchable_.end(), id) != searchable_.end())
        throw std::invalid_argument("duplicate id '" + id + "' in embedding index");
    searchable_.push_back(id);
}

std::vector<Match> EmbeddingBackend::query(std::string_view probe_id, double min_similarity) const {
    const auto it = features_.find(std::string(probe_id));
    if (it == features_.end())
        throw CoverageError("no embedding for '" + std::string(probe_id) + "'", {std::string(probe_id)});
    std::vector<Match> out;
    for (const auto& id : searchable_) {
        const double sim = cosine_similarity(it->second, features_.at(id));
        if (sim >= min_similarity) out.push_back({id, sim});
    }
    sort_matches(out);
    return out;
}

} // namespace sidwatch
