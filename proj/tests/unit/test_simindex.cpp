#include "sidwatch/errors.hpp"
#include "sidwatch/fixture.hpp"
#include "sidwatch/simindex.hpp"

#include <gtest/gtest.h>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <bit>
#include <random>
#include <set>
#include <sstream>

using namespace sidwatch;

namespace {

const std::filesystem::path data_dir = std::filesystem::path(SIDWATCH_TEST_DATA) / "phash";

PerceptualHash golden(const char* file) { return compute_phash(load_image(data_dir / file, file), file); }

// Frozen from tests/oracles/phash_oracle.py (straight-line Python DCT).
struct Golden {
    const char* file;
    const char* hex;
};
constexpr Golden goldens[] = {
    {"checkerboard32.pgm", "f343f343530303fc"},
    {"checkerboard40.pgm", "a3eb83ab03a303fc"},
    {"constant48x40.pgm", "0000000000000000"},
    {"gradient40x24.ppm", "5442f644b9b9b38b"},
};

Image to_image(const cv::Mat& rgb) {
    Image img;
    img.width = rgb.cols;
    img.height = rgb.rows;
    img.channels = 3;
    img.pixels.assign(rgb.datastart, rgb.dataend);
    return img;
}

cv::Mat to_mat(const Image& img) {
    return cv::Mat(img.height, img.width, CV_8UC3, const_cast<std::uint8_t*>(img.pixels.data())).clone();
}

} // namespace

TEST(PHash, GoldenVectors) {
    for (const auto& g : goldens) EXPECT_EQ(golden(g.file).hex(), g.hex) << g.file;
}

TEST(PHash, ConstantImageHasNoBitsSet) {
    Image img;
    img.width = 17;
    img.height = 9;
    img.channels = 3;
    img.pixels.assign(17 * 9 * 3, 200);
    EXPECT_EQ(compute_phash(img).bits, 0u);
    for (double c : phash_coefficients(img)) EXPECT_EQ(c, 0.0);
}

TEST(PHash, IdenticalPixelsIdenticalHashes) {
    const auto fx = generate_fixture(tiny_fixture_spec());
    for (const auto& [copy, base] : fx.copy_of)
        EXPECT_EQ(compute_phash(fx.images.at(copy)), compute_phash(fx.images.at(base)));
}

TEST(PHash, RejectsTinyAndUndecodableImages) {
    Image img;
    img.width = 7;
    img.height = 30;
    img.pixels.assign(7 * 30, 1);
    EXPECT_THROW(compute_phash(img, "tiny"), ImageError);
    try {
        load_image(data_dir / "does-not-exist.png", "ghost");
        FAIL();
    } catch (const ImageError& e) {
        EXPECT_EQ(e.image_id(), "ghost");
    }
}

TEST(PHash, HexRoundTrip) {
    const PerceptualHash h{0x0123456789abcdefULL};
    EXPECT_EQ(h.hex(), "0123456789abcdef");
    EXPECT_EQ(PerceptualHash::from_hex("0123456789ABCDEF"), h);
    EXPECT_FALSE(PerceptualHash::from_hex("0123"));
    EXPECT_FALSE(PerceptualHash::from_hex("0123456789abcdeg"));
}

// Re-encoding and downscaling keep fixture images near-identical.
TEST(PHash, RobustToJpegAndDownscale) {
    const auto fx = generate_fixture(recovery_fixture_spec());
    std::size_t total = 0, jpeg_ok = 0, scale_ok = 0;
    for (const auto& [id, img] : fx.images) {
        if (fx.copy_of.contains(id)) continue;
        const auto h = compute_phash(img);
        cv::Mat bgr;
        cv::cvtColor(to_mat(img), bgr, cv::COLOR_RGB2BGR);

        std::vector<std::uint8_t> buf;
        cv::imencode(".jpg", bgr, buf, {cv::IMWRITE_JPEG_QUALITY, 70});
        cv::Mat decoded = cv::imdecode(buf, cv::IMREAD_COLOR), rgb;
        cv::cvtColor(decoded, rgb, cv::COLOR_BGR2RGB);
        jpeg_ok += hamming_similarity(h, compute_phash(to_image(rgb))) >= 0.7;

        cv::Mat small;
        cv::resize(bgr, small, cv::Size(img.width / 2, img.height / 2), 0, 0, cv::INTER_AREA);
        cv::cvtColor(small, rgb, cv::COLOR_BGR2RGB);
        scale_ok += hamming_similarity(h, compute_phash(to_image(rgb))) >= 0.7;
        ++total;
    }
    ASSERT_GT(total, 100u);
    EXPECT_GE(10 * jpeg_ok, 9 * total);
    EXPECT_GE(10 * scale_ok, 9 * total);
}

TEST(Hamming, Examples) {
    const PerceptualHash a{0xdeadbeefcafef00dULL};
    EXPECT_EQ(hamming_similarity(a, a), 1.0);
    EXPECT_EQ(hamming_similarity(a, PerceptualHash{~a.bits}), 0.0);
    const PerceptualHash b{a.bits ^ ((1ULL << 19) - 1)};
    EXPECT_EQ(hamming_distance(a, b), 19);
    EXPECT_EQ(hamming_similarity(a, b), 0.703125);
    EXPECT_EQ(radius_for_similarity(0.7), 19);
    EXPECT_EQ(radius_for_similarity(1.0), 0);
    EXPECT_EQ(radius_for_similarity(0.0), 64);
    EXPECT_EQ(radius_for_similarity(1.0000001), -1);
}

TEST(Hamming, SymmetryAndTriangleInequality) {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 2000; ++i) {
        const PerceptualHash a{rng()}, b{rng()}, c{rng()};
        EXPECT_EQ(hamming_similarity(a, b), hamming_similarity(b, a));
        EXPECT_LE(hamming_distance(a, c), hamming_distance(a, b) + hamming_distance(b, c));
    }
}

TEST(NearDupIndex, Basics) {
    NearDupIndex ix;
    EXPECT_TRUE(ix.query(PerceptualHash{1}, 0.0).empty());
    const PerceptualHash h{0xffff0000ffff0000ULL};
    ix.insert("b", h);
    ix.insert("a", h);
    EXPECT_THROW(ix.insert("a", PerceptualHash{3}), std::invalid_argument);
    const auto exact = ix.query_radius(h, 0);
    ASSERT_EQ(exact.size(), 2u);
    EXPECT_EQ(exact[0].id, "a");
    EXPECT_EQ(exact[1].id, "b");
    ix.insert("c", PerceptualHash{~h.bits});
    EXPECT_EQ(ix.query(h, 0.0).size(), 3u);
}

TEST(NearDupIndex, ThresholdExample) {
    const PerceptualHash probe{0};
    NearDupIndex ix;
    ix.insert("near", PerceptualHash{(1ULL << 5) - 1});
    ix.insert("far", PerceptualHash{(1ULL << 20) - 1});
    const auto got = ix.query(probe, 0.7);
    ASSERT_EQ(got.size(), 1u);
    EXPECT_EQ(got[0].id, "near");
    EXPECT_EQ(got[0].similarity, 0.921875);
    EXPECT_TRUE(ix.query(probe, 1.5).empty());
}

TEST(NearDupIndex, MatchesLinearScan) {
    std::mt19937_64 rng(42);
    // Clustered hashes so small radii return something.
    std::vector<PerceptualHash> centers;
    for (int i = 0; i < 20; ++i) centers.push_back({rng()});
    std::vector<std::pair<std::string, PerceptualHash>> entries;
    NearDupIndex ix;
    for (int i = 0; i < 1000; ++i) {
        std::uint64_t bits = centers[rng() % centers.size()].bits;
        for (int f = static_cast<int>(rng() % 24); f > 0; --f) bits ^= 1ULL << (rng() % 64);
        entries.emplace_back("h" + std::to_string(i), PerceptualHash{bits});
        ix.insert(entries.back().first, entries.back().second);
    }
    for (int p = 0; p < 100; ++p) {
        const PerceptualHash probe = p % 2 ? entries[rng() % entries.size()].second : PerceptualHash{rng()};
        for (int radius : {0, 5, 19, 32}) {
            std::vector<Match> expected;
            for (const auto& [id, h] : entries)
                if (hamming_distance(h, probe) <= radius) expected.push_back({id, hamming_similarity(h, probe)});
            sort_matches(expected);
            EXPECT_EQ(ix.query_radius(probe, radius), expected) << "radius " << radius;
        }
    }
}

TEST(Cosine, Examples) {
    const std::vector<double> u{1, 0, 0}, v{0, 1, 0}, w{-1, 0, 0};
    EXPECT_EQ(cosine_similarity(u, u), 1.0);
    EXPECT_EQ(cosine_similarity(u, v), 0.0);
    EXPECT_EQ(cosine_similarity(u, w), 0.0);
    const std::vector<double> short_v{1, 0};
    EXPECT_THROW(cosine_similarity(u, short_v), std::invalid_argument);
}

TEST(HashCache, RoundTripEmptyAndCorrupt) {
    HashTable t{{"a", {1}}, {"b", {0xffffffffffffffffULL}}};
    std::ostringstream out;
    write_hash_cache(t, out);
    std::istringstream in(out.str());
    EXPECT_EQ(read_hash_cache(in), t);

    std::istringstream empty("");
    EXPECT_TRUE(read_hash_cache(empty).empty());

    std::istringstream bad("a\t0000000000000001\nb\tnothex\n");
    try {
        read_hash_cache(bad, "cache.tsv");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2u);
        EXPECT_EQ(e.source(), "cache.tsv");
    }
}

TEST(Embeddings, ValidateNormAndDimension) {
    std::istringstream good("a\t1,0\nb\t0.6,0.8\n");
    const auto t = read_embeddings(good);
    EXPECT_EQ(t.size(), 2u);
    std::istringstream unnormed("a\t1,1\n");
    EXPECT_THROW(read_embeddings(unnormed), ParseError);
    std::istringstream mixed("a\t1,0\nb\t1,0,0\n");
    EXPECT_THROW(read_embeddings(mixed), ParseError);
}

TEST(Backends, HashAndEmbeddingAgreeOnSearchability) {
    HashBackend hb({{"q1", {0}}, {"later", {1}}});
    EXPECT_TRUE(hb.has_features("later"));
    hb.insert("q1");
    const auto m = hb.query("later", 0.7);
    ASSERT_EQ(m.size(), 1u);
    EXPECT_EQ(m[0].id, "q1");
    EXPECT_THROW(hb.query("unknown", 0.7), CoverageError);

    EmbeddingBackend eb({{"q1", {1, 0}}, {"later", {0.6, 0.8}}, {"orth", {0, 1}}});
    eb.insert("q1");
    eb.insert("orth");
    const auto e = eb.query("later", 0.7);
    ASSERT_EQ(e.size(), 1u);
    EXPECT_EQ(e[0].id, "orth");
    EXPECT_DOUBLE_EQ(e[0].similarity, 0.8);
}
