#include "sidwatch/errors.hpp"
#include "sidwatch/harness.hpp"
#include "sidwatch/version.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

namespace py = pybind11;
using namespace sidwatch;

namespace {

PerceptualHash to_hash(std::uint64_t bits) { return PerceptualHash{bits}; }

// uint8 array, HxW (gray) or HxWx3 (RGB).
std::uint64_t phash_array(py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast> pixels) {
    Image img;
    if (pixels.ndim() == 2) {
        img.channels = 1;
    } else if (pixels.ndim() == 3 && pixels.shape(2) == 3) {
        img.channels = 3;
    } else {
        throw py::value_error("expected an HxW or HxWx3 uint8 array");
    }
    img.height = static_cast<int>(pixels.shape(0));
    img.width = static_cast<int>(pixels.shape(1));
    img.pixels.assign(pixels.data(), pixels.data() + pixels.size());
    py::gil_scoped_release release;
    return compute_phash(img).bits;
}

LabeledScores labeled(std::vector<double> real, std::vector<double> synth) { return {std::move(real), std::move(synth)}; }

// q1: {id: (hash, score)}, others: {id: (hash, direct score)}.
// Returns {id: (value, provenance, contributor ids)} for every id of both maps.
py::dict resolve_scores(const std::map<std::string, std::pair<std::uint64_t, double>>& q1,
                        const std::map<std::string, std::pair<std::uint64_t, double>>& others,
                        double similarity_threshold) {
    HashTable features;
    ScoreTable direct;
    const DetectorId detector{"score", ""};
    QuartileAssignment qa;
    qa.subset = "q1";
    for (const auto& [id, hs] : q1) {
        features.emplace(id, to_hash(hs.first));
        direct.set(detector, id, hs.second);
        qa.ordered_ids.push_back(id);
        qa.quartile_of.emplace(id, Quartile::q1);
    }
    qa.boundaries = {q1.size(), q1.size(), q1.size()};
    std::vector<std::string> ids = qa.ordered_ids;
    for (const auto& [id, hs] : others) {
        if (q1.contains(id)) throw py::value_error("id '" + id + "' is in both maps");
        features.emplace(id, to_hash(hs.first));
        direct.set(detector, id, hs.second);
        ids.push_back(id);
    }
    const std::vector<DetectorId> detectors{detector};
    const std::vector<QuartileAssignment> quartiles{qa};
    const auto index = Q1Index::build(quartiles, std::make_unique<HashBackend>(std::move(features)), direct, detectors);
    const auto resolved = resolve_all(ids, detectors, direct, index, RasidConfig{similarity_threshold});
    py::dict out;
    for (const auto& r : resolved.ledger)
        out[py::str(r.image_id)] = py::make_tuple(r.value, std::string(to_string(r.provenance)), r.contributors);
    return out;
}

py::list manifest_summary(const std::string& path) {
    py::list rows;
    for (const auto& s : summarize(load_manifest(path))) {
        py::dict row;
        row["subset"] = s.subset;
        row["lifespan_days"] = s.lifespan_days;
        row["lifespan_months"] = s.lifespan_months;
        row["total_urls"] = s.total_urls;
        row["valid_urls"] = s.valid_urls;
        row["unique_images"] = s.unique_images;
        row["basic_images"] = s.basic_images;
        rows.append(row);
    }
    return rows;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "sidwatch core bindings";
    m.attr("__version__") = version;

    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<CoverageError>(m, "CoverageError", PyExc_LookupError);
    py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
    py::register_exception<ImageError>(m, "ImageError", PyExc_ValueError);

    m.def("phash", &phash_array, py::arg("pixels"), "64-bit perceptual hash of a uint8 image array.");
    m.def("phash_file", [](const std::string& path) { return compute_phash(load_image(path, path), path).bits; },
          py::arg("path"));
    m.def("hamming_similarity", [](std::uint64_t a, std::uint64_t b) { return hamming_similarity(to_hash(a), to_hash(b)); },
          py::arg("a"), py::arg("b"));

    py::class_<NearDupIndex>(m, "NearDupIndex")
        .def(py::init<>())
        .def("insert", [](NearDupIndex& ix, const std::string& id, std::uint64_t h) { ix.insert(id, to_hash(h)); },
             py::arg("id"), py::arg("hash"))
        .def(
            "query",
            [](const NearDupIndex& ix, std::uint64_t probe, double min_similarity) {
                std::vector<std::pair<std::string, double>> out;
                for (const auto& mt : ix.query(to_hash(probe), min_similarity)) out.emplace_back(mt.id, mt.similarity);
                return out;
            },
            py::arg("probe"), py::arg("min_similarity") = default_similarity_threshold)
        .def("__len__", &NearDupIndex::size)
        .def("__contains__", [](const NearDupIndex& ix, const std::string& id) { return ix.contains(id); });

    m.def("auc", [](std::vector<double> real, std::vector<double> synth) { return auc(labeled(real, synth)); },
          py::arg("real"), py::arg("synth"));
    m.def("eer_threshold",
          [](std::vector<double> real, std::vector<double> synth) { return eer_threshold(labeled(real, synth)); },
          py::arg("real"), py::arg("synth"));
    m.def("balanced_accuracy",
          [](std::vector<double> real, std::vector<double> synth, double t) {
              return balanced_accuracy(labeled(real, synth), t);
          },
          py::arg("real"), py::arg("synth"), py::arg("threshold"));
    m.def("relative_diff", &relative_diff, py::arg("before"), py::arg("after"));
    m.def("manifest_summary", &manifest_summary, py::arg("path"));
    m.def("resolve_scores", &resolve_scores, py::arg("q1"), py::arg("others"),
          py::arg("similarity_threshold") = default_similarity_threshold);
}
