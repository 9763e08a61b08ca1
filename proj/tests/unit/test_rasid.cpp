#include "sidwatch/errors.hpp"
#include "sidwatch/fixture.hpp"
#include "sidwatch/rasid.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

using namespace sidwatch;
using namespace std::chrono;

namespace {

const DetectorId det{"D", ""};

ImageRecord rec(const std::string& subset, const std::string& id, int day) {
    ImageRecord r;
    r.id = id;
    r.content_digest = ContentDigest::of_bytes(std::span(reinterpret_cast<const std::uint8_t*>(id.data()), id.size()));
    r.first_seen = time_point_cast<seconds>(sys_days{year{2023} / June / 1} + days{day});
    r.subset = {subset, SubsetKind::synthetic_subset};
    r.basic = true;
    return r;
}

struct World {
    std::vector<ImageRecord> records;
    HashTable hashes;
    ScoreTable scores;

    void add(const std::string& subset, const std::string& id, int day, std::uint64_t hash, double score) {
        records.push_back(rec(subset, id, day));
        hashes.emplace(id, PerceptualHash{hash});
        scores.set(det, id, score);
    }

    std::vector<QuartileAssignment> quartiles() const {
        std::map<std::string, std::vector<ImageRecord>> by;
        for (const auto& r : records) by[r.subset.name].push_back(r);
        std::vector<QuartileAssignment> out;
        for (const auto& [s, recs] : by) out.push_back(assign_quartiles(recs));
        return out;
    }

    Q1Index index() const {
        const auto q = quartiles();
        const std::vector<DetectorId> dets{det};
        return Q1Index::build(q, std::make_unique<HashBackend>(hashes), scores, dets);
    }
};

} // namespace

TEST(Q1Index, HoldsEarliestQuarterPerSubset) {
    World w;
    for (int i = 0; i < 4; ++i) w.add("A", "a" + std::to_string(i), 10 - i, i, 0.5);
    EXPECT_EQ(w.index().members(), std::vector<std::string>{"a3"});
    for (int i = 0; i < 8; ++i) w.add("B", "b" + std::to_string(i), i, 100 + i, 0.5);
    const auto ix = w.index();
    EXPECT_EQ(ix.size(), 3u);
    EXPECT_TRUE(ix.in_q1("a3") && ix.in_q1("b0") && ix.in_q1("b1"));
    EXPECT_FALSE(ix.in_q1("b2"));
}

TEST(Q1Index, FortyImagesGiveTen) {
    World w;
    for (int i = 0; i < 40; ++i) w.add("A", "a" + std::to_string(i), i, static_cast<std::uint64_t>(i) << 20, 0.5);
    EXPECT_EQ(w.index().size(), 10u);
}

TEST(Q1Index, MissingFeaturesOrScoresThrow) {
    World w;
    for (int i = 0; i < 4; ++i) w.add("A", "a" + std::to_string(i), i, i, 0.5);
    auto no_hash = w;
    no_hash.hashes.erase("a0");
    EXPECT_THROW(no_hash.index(), CoverageError);
    auto no_score = w;
    no_score.scores = ScoreTable{};
    EXPECT_THROW(no_score.index(), CoverageError);
}

TEST(ResolveScore, Examples) {
    World w;
    w.add("A", "q1a", 0, 0, 0.2);
    w.add("A", "q1b", 1, 0, 0.8);
    w.add("A", "lone", 10, ~0ULL, 0.9);
    w.add("A", "dup", 11, 0, 0.1);
    w.add("A", "x", 12, 123, 0.3);
    w.add("A", "y", 13, 456, 0.3);
    w.add("A", "z", 14, 789, 0.3);
    w.add("A", "w", 15, 1000, 0.3);
    // 8 records: Q1 = q1a, q1b.
    const auto ix = w.index();
    const RasidConfig cfg;

    const auto lone = resolve_score("lone", det, 0.9, ix, cfg);
    EXPECT_EQ(lone.provenance, Provenance::direct);
    EXPECT_EQ(lone.value, 0.9);
    EXPECT_TRUE(lone.contributors.empty());

    const auto dup = resolve_score("dup", det, 0.1, ix, cfg);
    EXPECT_EQ(dup.provenance, Provenance::retrieved);
    EXPECT_EQ(dup.value, 0.5);
    EXPECT_EQ(dup.contributors, (std::vector<std::string>{"q1a", "q1b"}));

    // Inside Q1: direct even though q1b is identical.
    const auto inside = resolve_score("q1a", det, 0.2, ix, cfg);
    EXPECT_EQ(inside.provenance, Provenance::direct);
    EXPECT_EQ(inside.value, 0.2);
}

TEST(ResolveScore, ThresholdBoundaryAtDistance19) {
    World w;
    w.add("A", "q19", 0, (1ULL << 19) - 1, 0.4);
    w.add("A", "q20", 1, ~((1ULL << 44) - 1), 0.6); // 20 bits set, far from q19
    for (int i = 0; i < 6; ++i) w.add("A", "pad" + std::to_string(i), 50 + i, 0xaaaaaaaaaaaaaaaaULL ^ i, 0.5);
    w.add("A", "post", 10, 0, 0.9);
    ASSERT_EQ(hamming_distance(PerceptualHash{0}, PerceptualHash{(1ULL << 19) - 1}), 19);
    ASSERT_EQ(hamming_distance(PerceptualHash{0}, PerceptualHash{~((1ULL << 44) - 1)}), 20);
    const auto ix = w.index();
    const auto r = resolve_score("post", det, 0.9, ix, RasidConfig{0.7});
    EXPECT_EQ(r.contributors, std::vector<std::string>{"q19"});
    EXPECT_EQ(r.contributor_similarities, std::vector<double>{0.703125});
    EXPECT_EQ(r.value, 0.4);
}

TEST(ResolveScore, ThresholdInvariants) {
    std::mt19937_64 rng(31);
    World w;
    const std::vector<std::uint64_t> centers = {rng(), rng(), rng()};
    for (int i = 0; i < 80; ++i) {
        std::uint64_t h = centers[rng() % 3];
        for (int f = static_cast<int>(rng() % 14); f > 0; --f) h ^= 1ULL << (rng() % 64);
        w.add("A", "i" + std::to_string(i), i, h, static_cast<double>(rng() % 1001) / 1000.0);
    }
    const auto ix = w.index();
    for (const auto& r : w.records) {
        const double direct = *w.scores.get(det, r.id);
        std::size_t prev = SIZE_MAX;
        for (double t : {0.0, 0.5, 0.7, 0.8, 0.9, 1.0, 1.0 + 1e-9}) {
            const auto res = resolve_score(r.id, det, direct, ix, RasidConfig{t});
            EXPECT_LE(res.contributors.size(), prev);
            prev = res.contributors.size();
            if (res.provenance == Provenance::retrieved) {
                double lo = 1, hi = 0;
                for (const auto& c : res.contributors) {
                    const double s = *ix.snapshot_score(det, c);
                    lo = std::min(lo, s);
                    hi = std::max(hi, s);
                }
                EXPECT_GE(res.value, lo);
                EXPECT_LE(res.value, hi);
            }
            if (t > 1.0 || ix.in_q1(r.id)) {
                EXPECT_EQ(res.provenance, Provenance::direct);
                EXPECT_EQ(res.value, direct);
            }
        }
    }
    EXPECT_THROW(RasidConfig{-0.1}.validate(), std::invalid_argument);
}

TEST(ResolveAll, AllQ1IsIdentityAndFixtureCopiesGetTheirBaseScore) {
    const auto fx = generate_fixture(recovery_fixture_spec());
    const auto m = fx.manifest();
    std::vector<QuartileAssignment> quartiles;
    std::vector<std::string> ids;
    for (const auto& s : m.synthetic_subsets()) {
        const auto recs = unique_images(m.subset_records(s));
        quartiles.push_back(assign_quartiles(recs));
        for (const auto& r : recs) ids.push_back(r.id);
    }
    HashTable hashes;
    for (const auto& [id, img] : fx.images) hashes.emplace(id, compute_phash(img));
    const auto dets = fx.scores.detectors();
    const auto ix = Q1Index::build(quartiles, std::make_unique<HashBackend>(hashes), fx.scores, dets);
    const auto resolved = resolve_all(ids, dets, fx.scores, ix, RasidConfig{});
    for (const auto& d : dets) {
        for (const auto& id : ids) {
            const auto v = *resolved.scores.get(d, id);
            if (ix.in_q1(id)) EXPECT_EQ(v, *fx.scores.get(d, id));
            else EXPECT_EQ(v, *fx.scores.get(d, fx.copy_of.at(id))) << id;
        }
    }
    EXPECT_EQ(resolved.ledger.size(), ids.size() * dets.size());

    // A table restricted to Q1 images resolves to itself.
    std::vector<std::string> q1_ids(ix.members().begin(), ix.members().end());
    const auto q1_only = resolve_all(q1_ids, dets, fx.scores, ix, RasidConfig{});
    for (const auto& d : dets)
        for (const auto& id : q1_ids) EXPECT_EQ(q1_only.scores.get(d, id), fx.scores.get(d, id));

    std::vector<std::string> with_unknown = ids;
    with_unknown.push_back("nobody");
    EXPECT_THROW(resolve_all(with_unknown, dets, fx.scores, ix, RasidConfig{}), CoverageError);
    EXPECT_EQ(resolve_all(with_unknown, dets, fx.scores, ix, RasidConfig{}, true).ledger.size(), ids.size() * dets.size());
}
