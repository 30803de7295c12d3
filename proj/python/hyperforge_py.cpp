// hyperforge_py.cpp - Python bindings
#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "hyperforge/coarsening.hpp"
#include "hyperforge/datasets.hpp"
#include "hyperforge/export.hpp"
#include "hyperforge/flow.hpp"
#include "hyperforge/io.hpp"
#include "hyperforge/metrics.hpp"
#include "hyperforge/pipeline.hpp"

namespace py = pybind11;
using namespace hyperforge;

namespace {

struct Model {
    TrainConfig config;
    std::shared_ptr<Denoiser> denoiser;
    std::int64_t step = 0;
};

py::dict level_dict(const CoarseningLevel& level) {
    const BipartiteGraph& b = level.bipartite;
    std::vector<std::pair<Index, Index>> edges;
    for (const auto& e : b.edges()) edges.emplace_back(e.left, e.right);
    py::dict d;
    d["num_left"] = b.num_left();
    d["num_right"] = b.num_right();
    d["edges"] = edges;
    d["budgets"] = b.left_budgets();
    d["hypergraph"] = collapse_bipartite(b);
    return d;
}

}  // namespace

PYBIND11_MODULE(_hyperforge, m) {
    m.doc() = "hierarchical hypergraph generation";

    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            PyErr_SetString(PyExc_ValueError, (e.code() + ": " + e.what()).c_str());
        }
    });

    py::class_<Hypergraph>(m, "Hypergraph")
        .def(py::init<Index, std::vector<std::vector<Index>>, Matrix, Matrix>(), py::arg("num_nodes"),
             py::arg("hyperedges"), py::arg("node_features") = Matrix(), py::arg("hyperedge_features") = Matrix())
        .def_property_readonly("num_nodes", &Hypergraph::num_nodes)
        .def_property_readonly("num_hyperedges", &Hypergraph::num_hyperedges)
        .def_property_readonly("num_incidences", &Hypergraph::num_incidences)
        .def_property_readonly("hyperedges", &Hypergraph::hyperedges)
        .def_property_readonly("node_features", &Hypergraph::node_features)
        .def_property_readonly("hyperedge_features", &Hypergraph::hyperedge_features)
        .def("node_degrees", &Hypergraph::node_degrees)
        .def("hyperedge_sizes", &Hypergraph::hyperedge_sizes)
        .def("to_json", [](const Hypergraph& h) { return to_json_line(h); })
        .def_static("from_json", [](const std::string& line) { return parse_json_line(line).graph; })
        .def("__repr__", [](const Hypergraph& h) {
            return "Hypergraph(num_nodes=" + std::to_string(h.num_nodes()) +
                   ", num_hyperedges=" + std::to_string(h.num_hyperedges()) + ")";
        });

    m.def("gen_tree", [](Index n, std::uint64_t seed) { Rng rng(seed); return gen_tree(rng, n); }, py::arg("num_nodes") = 32,
          py::arg("seed") = 0);
    m.def("gen_sbm", [](std::uint64_t seed) { Rng rng(seed); return gen_sbm(rng); }, py::arg("seed") = 0);
    m.def("gen_ego", [](std::uint64_t seed) { Rng rng(seed); return gen_ego(rng); }, py::arg("seed") = 0);
    m.def("parse_off", &parse_off);
    m.def("parse_obj", &parse_obj);

    m.def("read_jsonl", &read_jsonl);
    m.def("write_jsonl", py::overload_cast<const std::filesystem::path&, const std::vector<Hypergraph>&>(&write_jsonl));
    m.def("to_dot", &to_dot, py::arg("graph"), py::arg("name") = "H");

    m.def(
        "coarsen",
        [](const Hypergraph& h, std::uint64_t seed) {
            Rng rng(seed);
            const CoarseningSequence seq = sample_coarsening_sequence(h, {}, rng);
            py::list out;
            for (const auto& level : seq.levels) out.append(level_dict(level));
            return out;
        },
        py::arg("graph"), py::arg("seed") = 0, "coarsening levels, finest first");

    m.def("simplex_project", &simplex_project);

    m.def("valid_tree", &valid_tree);
    m.def("valid_ego", &valid_ego);
    m.def("valid_sbm", &valid_sbm);
    m.def("wasserstein_1d", [](const std::vector<double>& a, const std::vector<double>& b) { return wasserstein_1d(a, b); });
    m.def("spectral_mmd", [](const std::vector<Hypergraph>& a, const std::vector<Hypergraph>& b) { return spectral_mmd(a, b); });
    m.def("degree_values", [](const std::vector<Hypergraph>& g) { return degree_values(g); });
    m.def(
        "evaluate",
        [](const std::vector<Hypergraph>& generated, const std::vector<Hypergraph>& reference, const std::string& kind) {
            return evaluate(generated, reference, parse_dataset_kind(kind)).to_json();
        },
        py::arg("generated"), py::arg("reference"), py::arg("kind"), "metric report as a JSON string");

    py::class_<Model>(m, "Model")
        .def_static(
            "load",
            [](const std::filesystem::path& path) {
                LoadedModel lm = load_model(path);
                return Model{lm.config, std::make_shared<Denoiser>(std::move(lm.model)), lm.step};
            },
            py::arg("path"))
        .def_readonly("step", &Model::step)
        .def_property_readonly("config", [](const Model& self) { return self.config.to_kv(); })
        .def("save", [](const Model& self, const std::filesystem::path& path) {
            save_model(path, self.config, *self.denoiser, self.step);
        })
        .def(
            "sample",
            [](const Model& self, Index num_nodes, Index count, std::uint64_t seed, Index threads) {
                return sample_many(*self.denoiser, num_nodes, count, SampleOptions::from(self.config), seed, threads);
            },
            py::arg("num_nodes"), py::arg("count") = 1, py::arg("seed") = 0, py::arg("threads") = 1,
            py::call_guard<py::gil_scoped_release>());

    m.def(
        "train",
        [](const std::map<std::string, std::string>& config, const std::vector<Hypergraph>& graphs,
           const std::vector<Hypergraph>& val) {
            Trainer trainer(TrainConfig::from_kv(config), graphs, val);
            {
                py::gil_scoped_release release;
                trainer.run();
            }
            Model out{trainer.config(), std::make_shared<Denoiser>(trainer.model()), trainer.steps_done()};
            return py::make_tuple(out, trainer.stats().losses);
        },
        py::arg("config"), py::arg("graphs"), py::arg("val") = std::vector<Hypergraph>{},
        "train from key = value settings; returns (model, per-step losses)");
}
