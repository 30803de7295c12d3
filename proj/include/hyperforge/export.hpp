// export.hpp - DOT/OBJ/JSONL writers and generated-graph directories
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hyperforge/hypergraph.hpp"
#include "hyperforge/io.hpp"

namespace hyperforge {

enum class ExportFormat { Dot, Obj, Jsonl };

// Throws Error("UnknownFormat").
ExportFormat parse_export_format(const std::string& name);

// Undirected incidence graph: nodes n<i>, hyperedges e<j> drawn as boxes.
std::string to_dot(const Hypergraph& h, const std::string& name = "H");

// Writes graph_<i>.dot / graph_<i>.obj, or a single graphs.jsonl, into dir.
// Returns the files written.
std::vector<std::filesystem::path> export_graphs(const std::vector<Hypergraph>& graphs, ExportFormat format,
                                                 const std::filesystem::path& dir);

// Graphs of a directory: test.jsonl when it holds a dataset (manifest.json),
// otherwise every *.jsonl file in name order. A file path is read directly.
std::vector<GraphRecord> load_record_dir(const std::filesystem::path& path);
std::vector<Hypergraph> load_graph_dir(const std::filesystem::path& path);

}  // namespace hyperforge
