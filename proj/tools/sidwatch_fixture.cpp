// Writes a seeded synthetic corpus (manifest, scores, images) for tests and demos.

#include "sidwatch/fixture.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Generate a seeded test corpus"};
    std::string profile = "tiny";
    std::uint64_t seed = 0;
    std::string out;
    bool all_basic = false;
    app.add_option("--profile", profile, "tiny or recovery")
        ->check(CLI::IsMember({"tiny", "recovery"}))
        ->capture_default_str();
    app.add_option("--seed", seed, "RNG seed (profile default when 0)");
    app.add_option("--out", out, "Output directory")->required();
    app.add_flag("--all-basic", all_basic, "Mark every synthetic image as basic");
    CLI11_PARSE(app, argc, argv);

    auto spec = profile == "tiny" ? sidwatch::tiny_fixture_spec() : sidwatch::recovery_fixture_spec();
    if (seed != 0) spec.seed = seed;
    if (all_basic) spec.all_basic = true;
    try {
        const auto fx = sidwatch::generate_fixture(spec);
        sidwatch::write_fixture(fx, out);
        std::cerr << "wrote " << fx.records.size() << " records to " << out << '\n';
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
