#pragma once

#include "sidwatch/manifest.hpp"
#include "sidwatch/scoring.hpp"
#include "sidwatch/simindex.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace sidwatch {

// Synthetic test corpus: time-ordered synthetic subsets whose later records
// are pixel-identical (byte-distinct) copies of first-quarter images, plus
// real datasets. Copies carry degraded direct scores.
struct FixtureSpec {
    std::vector<std::string> subsets = {"Gaza1", "Gaza2", "Gaza3", "Pope"};
    std::size_t per_subset = 40;
    std::vector<std::string> real_datasets = {"COCO", "FODB", "ImageNet", "OpenImages", "RAISE"};
    std::size_t per_real_dataset = 40;
    std::vector<DetectorId> detectors = {{"HighFreq", ""}, {"Residual", "v1"}};
    // Probability that a post-Q1 record copies a Q1 image of its subset.
    double copy_probability = 1.0;
    // Score drop applied to copies, drawn uniformly from [lo, hi).
    double drop_lo = 0.05;
    double drop_hi = 0.35;
    bool all_basic = true;
    // Extra records pointing at an existing file (same bytes), and dead URLs.
    std::size_t duplicate_urls = 0;
    std::size_t invalid_urls = 0;
    int image_side = 48;
    std::uint64_t seed = 1;
};

FixtureSpec recovery_fixture_spec(std::uint64_t seed = 1);
FixtureSpec tiny_fixture_spec(std::uint64_t seed = 7);

struct Fixture {
    std::vector<ImageRecord> records;
    // file_path -> encoded PPM bytes
    std::map<std::string, std::vector<std::uint8_t>> files;
    std::map<std::string, Image> images; // by record id
    ScoreTable scores;
    // Q1 image each copy was taken from.
    std::map<std::string, std::string> copy_of;

    DatasetManifest manifest() const { return DatasetManifest(records); }
};

Fixture generate_fixture(const FixtureSpec& spec);

// manifest.jsonl, scores.tsv and images/ under dir.
void write_fixture(const Fixture& fixture, const std::filesystem::path& dir);

// Binary PPM/PGM with an optional comment line (changes bytes, not pixels).
std::vector<std::uint8_t> encode_pnm(const Image& image, const std::string& comment = {});

} // namespace sidwatch
