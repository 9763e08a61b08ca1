#include "sidwatch/errors.hpp"
#include "sidwatch/manifest.hpp"
#include "sidwatch/scoring.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

using namespace sidwatch;

namespace {

ScoreTable parse(const std::string& text, const ScoreLoadOptions& opts = {}, std::vector<std::string>* warnings = nullptr) {
    std::istringstream in(text);
    return read_scores(in, "scores.tsv", opts, warnings);
}

std::vector<ScoreRequest> requests(std::size_t n) {
    std::vector<ScoreRequest> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back({"img-" + std::to_string(i), "/tmp/img-" + std::to_string(i) + ".png"});
    return out;
}

DetectorEndpoint child(const std::string& cmd, int timeout_s = 20) {
    return {DetectorEndpoint::Kind::subprocess, {"Echo", ""}, cmd, std::chrono::seconds(timeout_s)};
}

// Answers 0.5 for every request id.
const std::string echo_detector = R"(awk -F'	' '{ printf "%s\t0.5\n", $1 }')";

} // namespace

TEST(DetectorId, LabelRoundTrip) {
    EXPECT_EQ(DetectorId::parse_label("DIMD").label(), "DIMD");
    const auto d = DetectorId::parse_label("DIMD:latent");
    EXPECT_EQ(d.name, "DIMD");
    EXPECT_EQ(d.variant, "latent");
    EXPECT_EQ(d.label(), "DIMD:latent");
}

TEST(ScoreTable, RejectsOutOfRangeAndDuplicates) {
    ScoreTable t;
    t.set({"A", ""}, "x", 0.0);
    t.set({"A", ""}, "y", 1.0);
    EXPECT_THROW(t.set({"A", ""}, "z", 1.3), std::out_of_range);
    EXPECT_THROW(t.set({"A", ""}, "z", -0.1), std::out_of_range);
    EXPECT_THROW(t.set({"A", ""}, "z", std::nan("")), std::out_of_range);
    EXPECT_THROW(t.set({"A", ""}, "x", 0.5), std::invalid_argument);
    EXPECT_EQ(t.size(), 2u);
    EXPECT_EQ(t.get({"A", ""}, "y"), 1.0);
    EXPECT_FALSE(t.get({"B", ""}, "y"));
}

TEST(LoadScores, EmptyFileGivesEmptyTable) { EXPECT_TRUE(parse("").empty()); }

TEST(LoadScores, RangeErrorCarriesLineNumber) {
    try {
        parse("A\t\tx\t0.4\nA\t\ty\t1.3\n");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2u);
        EXPECT_NE(std::string(e.what()).find("out of range"), std::string::npos);
    }
}

TEST(LoadScores, MalformedAndDuplicateRows) {
    EXPECT_THROW(parse("A\tx\t0.4\n"), ParseError);
    EXPECT_THROW(parse("A\t\tx\tabc\n"), ParseError);
    try {
        parse("A\tv\tx\t0.4\nA\tv\tx\t0.5\n");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
}

TEST(LoadScores, ThreeDetectorsTwentyIdsCoverEverything) {
    std::string text;
    std::vector<std::string> ids;
    std::vector<DetectorId> dets = {{"A", ""}, {"B", "v1"}, {"B", "v2"}};
    for (int i = 0; i < 20; ++i) ids.push_back("id" + std::to_string(i));
    for (const auto& d : dets)
        for (const auto& id : ids) text += d.name + "\t" + d.variant + "\t" + id + "\t0.25\n";
    const auto t = parse(text);
    EXPECT_EQ(t.size(), 60u);
    EXPECT_EQ(t.detectors(), dets);
    EXPECT_TRUE(check_coverage(t, ids, dets).empty());
}

TEST(LoadScores, UnknownIdsStrictOrWarn) {
    std::istringstream m(R"({"id":"known","subset":"R","label":"real","content_digest":")" + std::string(64, 'a') + "\"}\n");
    const auto manifest = parse_manifest(m);
    const std::string text = "A\t\tknown\t0.1\nA\t\tstranger\t0.2\n";
    EXPECT_THROW(parse(text, {&manifest, true}), ParseError);
    std::vector<std::string> warnings;
    const auto t = parse(text, {&manifest, false}, &warnings);
    EXPECT_EQ(t.size(), 1u);
    ASSERT_EQ(warnings.size(), 1u);
    EXPECT_NE(warnings[0].find("stranger"), std::string::npos);
}

TEST(WriteScores, SixDecimalRoundTrip) {
    std::mt19937_64 rng(9);
    ScoreTable t;
    for (int i = 0; i < 500; ++i) {
        // Values already on the 6-decimal grid survive exactly.
        const double v = static_cast<double>(rng() % 1000001) / 1e6;
        t.set({"D", i % 2 ? "x" : ""}, "i" + std::to_string(i), v);
    }
    std::ostringstream out;
    write_scores(t, out);
    EXPECT_EQ(parse(out.str()), t);
    std::ostringstream again;
    write_scores(parse(out.str()), again);
    EXPECT_EQ(out.str(), again.str());
}

TEST(Coverage, Examples) {
    ScoreTable t;
    const DetectorId a{"A", ""}, b{"B", ""};
    const std::vector<std::string> ids = {"x", "y"};
    t.set(a, "x", 0.1);
    t.set(a, "y", 0.2);
    const std::vector<DetectorId> just_a{a};
    EXPECT_TRUE(check_coverage(t, ids, just_a).empty());
    const std::vector<DetectorId> both{a, b};
    EXPECT_EQ(check_coverage(t, ids, both), (std::vector<MissingScore>{{b, "x"}, {b, "y"}}));
    ScoreTable partial;
    partial.set(a, "x", 0.1);
    EXPECT_EQ(check_coverage(partial, ids, just_a), (std::vector<MissingScore>{{a, "y"}}));
}

TEST(Subprocess, ZeroRequests) {
    const auto r = score_via_subprocess(child(echo_detector), {});
    EXPECT_TRUE(r.fragment.empty());
    EXPECT_TRUE(r.failures.empty());
}

TEST(Subprocess, EchoDetectorOnFiveIds) {
    const auto reqs = requests(5);
    const auto r = score_via_subprocess(child(echo_detector), reqs);
    EXPECT_EQ(r.fragment.size(), 5u);
    for (const auto& q : reqs) EXPECT_EQ(r.fragment.get({"Echo", ""}, q.image_id), 0.5);
}

TEST(Subprocess, LargeBatchDoesNotDeadlock) {
    const auto reqs = requests(20000);
    const auto r = score_via_subprocess(child(echo_detector), reqs);
    EXPECT_EQ(r.fragment.size(), 20000u);
}

TEST(Subprocess, AnswersInAnyOrder) {
    const auto reqs = requests(50);
    const auto r = score_via_subprocess(child(echo_detector + " | sort -r"), reqs);
    EXPECT_EQ(r.fragment.size(), 50u);
}

TEST(Subprocess, MalformedLineIsNamed) {
    try {
        score_via_subprocess(child("cat >/dev/null; printf 'img-0\\t0.5\\nthis is garbage\\n'"), requests(2));
        FAIL();
    } catch (const ProtocolError& e) {
        const std::string what = e.what();
        EXPECT_NE(what.find("output line 2"), std::string::npos) << what;
        EXPECT_NE(what.find("this is garbage"), std::string::npos) << what;
    }
}

TEST(Subprocess, OutOfRangeAndUnknownIdsAreViolations) {
    EXPECT_THROW(score_via_subprocess(child("cat >/dev/null; printf 'img-0\\t1.5\\n'"), requests(1)), ProtocolError);
    EXPECT_THROW(score_via_subprocess(child("cat >/dev/null; printf 'other\\t0.5\\n'"), requests(1)), ProtocolError);
    EXPECT_THROW(score_via_subprocess(child("cat >/dev/null; printf 'img-0\\t0.5\\nimg-0\\t0.5\\n'"), requests(1)),
                 ProtocolError);
}

TEST(Subprocess, ErrorRecordBecomesFailure) {
    const auto r =
        score_via_subprocess(child("cat >/dev/null; printf 'img-0\\t0.25\\nimg-1\\tERROR\\tcannot decode\\n'"), requests(2));
    EXPECT_EQ(r.fragment.size(), 1u);
    ASSERT_EQ(r.failures.size(), 1u);
    EXPECT_EQ(r.failures[0].first, "img-1");
    EXPECT_EQ(r.failures[0].second, "cannot decode");
}

TEST(Subprocess, NonzeroExitFails) {
    try {
        score_via_subprocess(child("cat >/dev/null; exit 3"), requests(1));
        FAIL();
    } catch (const ProtocolError& e) {
        EXPECT_NE(std::string(e.what()).find("status 3"), std::string::npos);
    }
}

TEST(Subprocess, MissingAnswersAreListed) {
    try {
        score_via_subprocess(child("cat >/dev/null; printf 'img-1\\t0.5\\n'"), requests(3));
        FAIL();
    } catch (const ProtocolError& e) {
        const std::string what = e.what();
        EXPECT_NE(what.find("img-0, img-2"), std::string::npos) << what;
    }
}

TEST(Subprocess, TimeoutListsMissingIds) {
    const auto start = std::chrono::steady_clock::now();
    try {
        score_via_subprocess(child("read line; printf 'img-0\\t0.5\\n'; exec sleep 30", 1), requests(2));
        FAIL();
    } catch (const ProtocolError& e) {
        const std::string what = e.what();
        EXPECT_NE(what.find("timed out"), std::string::npos) << what;
        EXPECT_NE(what.find("missing ids: img-1"), std::string::npos) << what;
    }
    EXPECT_LT(std::chrono::steady_clock::now() - start, std::chrono::seconds(5));
}

TEST(CollectScores, MergesFilesAndChildren) {
    const auto reqs = requests(3);
    std::vector<DetectorEndpoint> eps = {child(echo_detector),
                                         {DetectorEndpoint::Kind::subprocess, {"Echo", "b"}, echo_detector,
                                          std::chrono::seconds(20)}};
    const auto r = collect_scores(eps, reqs);
    EXPECT_EQ(r.fragment.size(), 6u);
    EXPECT_EQ(r.fragment.detectors().size(), 2u);
}
