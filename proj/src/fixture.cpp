#include "sidwatch/fixture.hpp"

#include "sidwatch/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

namespace sidwatch {

namespace {

// Uniform [0,1) from raw engine bits; std distributions are not portable.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

private:
    std::mt19937_64 engine_;
};

Image smooth_random_image(Rng& rng, int side) {
    constexpr int grid = 8;
    double knots[grid][grid][3];
    for (auto& row : knots)
        for (auto& knot : row)
            for (double& c : knot) c = rng.uniform(0.0, 255.0);
    Image img;
    img.width = img.height = side;
    img.channels = 3;
    img.pixels.resize(static_cast<std::size_t>(side) * side * 3);
    for (int y = 0; y < side; ++y) {
        const double gy = static_cast<double>(y) / (side - 1) * (grid - 1);
        const int y0 = std::min(grid - 2, static_cast<int>(gy));
        const double fy = gy - y0;
        for (int x = 0; x < side; ++x) {
            const double gx = static_cast<double>(x) / (side - 1) * (grid - 1);
            const int x0 = std::min(grid - 2, static_cast<int>(gx));
            const double fx = gx - x0;
            for (int c = 0; c < 3; ++c) {
                const double v = (1 - fy) * ((1 - fx) * knots[y0][x0][c] + fx * knots[y0][x0 + 1][c]) +
                                 fy * ((1 - fx) * knots[y0 + 1][x0][c] + fx * knots[y0 + 1][x0 + 1][c]);
                img.pixels[(static_cast<std::size_t>(y) * side + x) * 3 + c] =
                    static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
            }
        }
    }
    return img;
}

double round6(double v) { return std::round(v * 1e6) / 1e6; }

std::string numbered(const std::string& prefix, std::size_t i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%03zu", i);
    std::string lower = prefix;
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    return lower + "-" + buf;
}

} // namespace

FixtureSpec recovery_fixture_spec(std::uint64_t seed) {
    FixtureSpec spec;
    spec.seed = seed;
    return spec;
}

FixtureSpec tiny_fixture_spec(std::uint64_t seed) {
    FixtureSpec spec;
    spec.subsets = {"Alpha", "Beta"};
    spec.per_subset = 6;
    spec.real_datasets = {"RealA", "RealB"};
    spec.per_real_dataset = 4;
    spec.copy_probability = 0.5;
    spec.all_basic = false;
    spec.duplicate_urls = 1;
    spec.invalid_urls = 1;
    spec.image_side = 32;
    spec.seed = seed;
    return spec;
}

std::vector<std::uint8_t> encode_pnm(const Image& image, const std::string& comment) {
    std::string header = image.channels == 3 ? "P6\n" : "P5\n";
    if (!comment.empty()) header += "# " + comment + "\n";
    header += std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), image.pixels.begin(), image.pixels.end());
    return out;
}

Fixture generate_fixture(const FixtureSpec& spec) {
    using namespace std::chrono;
    Rng rng(spec.seed);
    Fixture fx;
    std::vector<PerceptualHash> distinct_hashes;

    // Fresh images stay at least 20 bits away from every earlier fresh image,
    // so only deliberate copies are near-duplicates at thresholds >= 0.7.
    auto fresh_image = [&]() {
        for (int attempt = 0; attempt < 1000; ++attempt) {
            auto img = smooth_random_image(rng, spec.image_side);
            const auto h = compute_phash(img);
            const bool far = std::all_of(distinct_hashes.begin(), distinct_hashes.end(),
                                         [&](PerceptualHash o) { return hamming_distance(o, h) >= 20; });
            if (far) {
                distinct_hashes.push_back(h);
                return img;
            }
        }
        throw Error("fixture generator could not find a distinct image");
    };

    auto add = [&](ImageRecord r, const Image& img) {
        const std::string path = "images/" + r.id + (img.channels == 3 ? ".ppm" : ".pgm");
        auto bytes = encode_pnm(img, r.id);
        r.content_digest = ContentDigest::of_bytes(bytes);
        r.file_path = path;
        fx.files.emplace(path, std::move(bytes));
        fx.images.emplace(r.id, img);
        fx.records.push_back(std::move(r));
    };

    const auto origin = sys_days{year{2023} / March / 20};
    const std::size_t q1_count = spec.per_subset / 4;
    if (q1_count == 0) throw std::invalid_argument("fixture subsets need at least 4 records");

    // Scores: Q1 and fresh images draw a base score, copies lose a drop.
    std::map<std::string, std::vector<double>> base_scores; // id -> per detector
    for (std::size_t si = 0; si < spec.subsets.size(); ++si) {
        const auto& subset = spec.subsets[si];
        std::vector<std::string> q1_ids;
        for (std::size_t i = 0; i < spec.per_subset; ++i) {
            ImageRecord r;
            r.id = numbered(subset, i);
            r.subset = {subset, SubsetKind::synthetic_subset};
            r.label = Label::synthetic;
            r.first_seen = time_point_cast<seconds>(origin + days{30 * si} + hours{72 * i} + minutes{7 * si});
            r.basic = spec.all_basic || i % 5 != 2;
            r.source_url = "https://example.org/" + subset + "/" + std::to_string(i);

            std::vector<double> s;
            if (i >= q1_count && rng.uniform() < spec.copy_probability) {
                const auto& base = q1_ids[i % q1_count];
                fx.copy_of.emplace(r.id, base);
                for (double b : base_scores.at(base)) s.push_back(round6(std::max(0.0, b - rng.uniform(spec.drop_lo, spec.drop_hi))));
                const Image img = fx.images.at(base);
                base_scores.emplace(r.id, s);
                add(std::move(r), img);
                continue;
            }
            for (std::size_t d = 0; d < spec.detectors.size(); ++d) s.push_back(round6(rng.uniform(0.40, 0.95)));
            if (i < q1_count) q1_ids.push_back(r.id);
            base_scores.emplace(r.id, s);
            add(std::move(r), fresh_image());
        }
    }
    for (const auto& dataset : spec.real_datasets) {
        for (std::size_t i = 0; i < spec.per_real_dataset; ++i) {
            ImageRecord r;
            r.id = numbered(dataset, i);
            r.subset = {dataset, SubsetKind::real_dataset};
            r.label = Label::real;
            std::vector<double> s;
            for (std::size_t d = 0; d < spec.detectors.size(); ++d) s.push_back(round6(rng.uniform(0.05, 0.70)));
            base_scores.emplace(r.id, s);
            add(std::move(r), fresh_image());
        }
    }

    // Same file reached through another URL, seen a day later.
    const std::size_t synthetic_count = spec.subsets.size() * spec.per_subset;
    for (std::size_t k = 0; k < spec.duplicate_urls && synthetic_count > 0; ++k) {
        ImageRecord dup = fx.records[(k * 7 + 1) % synthetic_count];
        dup.id += "-dup";
        dup.first_seen = *dup.first_seen + days{1};
        dup.source_url = *dup.source_url + "?mirror";
        base_scores.emplace(dup.id, base_scores.at(fx.records[(k * 7 + 1) % synthetic_count].id));
        fx.images.emplace(dup.id, fx.images.at(fx.records[(k * 7 + 1) % synthetic_count].id));
        fx.records.push_back(std::move(dup));
    }
    for (std::size_t k = 0; k < spec.invalid_urls && !spec.subsets.empty(); ++k) {
        ImageRecord dead;
        const auto& subset = spec.subsets[k % spec.subsets.size()];
        dead.id = numbered(subset, 900 + k);
        dead.subset = {subset, SubsetKind::synthetic_subset};
        dead.label = Label::synthetic;
        dead.valid = false;
        dead.first_seen = time_point_cast<seconds>(origin + hours{5});
        dead.source_url = "https://example.org/gone/" + std::to_string(k);
        fx.records.push_back(std::move(dead));
    }

    for (const auto& r : fx.records) {
        if (!r.valid) continue;
        const auto& s = base_scores.at(r.id);
        for (std::size_t d = 0; d < spec.detectors.size(); ++d) fx.scores.set(spec.detectors[d], r.id, s[d]);
    }
    return fx;
}

void write_fixture(const Fixture& fixture, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir / "images");
    for (const auto& [path, bytes] : fixture.files) {
        std::ofstream out(dir / path, std::ios::binary);
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw Error("cannot write '" + (dir / path).string() + "'");
    }
    {
        std::ofstream out(dir / "manifest.jsonl");
        for (const auto& r : fixture.records) out << serialize_record(r) << '\n';
    }
    std::ofstream out(dir / "scores.tsv");
    write_scores(fixture.scores, out);
}

} // namespace sidwatch
