// export.cpp - DOT/OBJ/JSONL writers and generated-graph directories
#include "hyperforge/export.hpp"

#include <algorithm>
#include <fstream>

#include "hyperforge/datasets.hpp"
#include "hyperforge/io.hpp"

namespace hyperforge {

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("IoError", "cannot write " + path.string());
    out << text;
    if (!out) throw Error("IoError", "write failed for " + path.string());
}

}  // namespace

ExportFormat parse_export_format(const std::string& name) {
    if (name == "dot") return ExportFormat::Dot;
    if (name == "obj") return ExportFormat::Obj;
    if (name == "jsonl") return ExportFormat::Jsonl;
    throw Error("UnknownFormat", "unknown export format '" + name + "' (expected dot, obj or jsonl)");
}

std::string to_dot(const Hypergraph& h, const std::string& name) {
    std::string out = "graph " + name + " {\n";
    for (Index i = 0; i < h.num_nodes(); ++i) out += "  n" + std::to_string(i) + " [shape=circle];\n";
    for (Index e = 0; e < h.num_hyperedges(); ++e) out += "  e" + std::to_string(e) + " [shape=box];\n";
    for (Index e = 0; e < h.num_hyperedges(); ++e)
        for (Index v : h.hyperedge(e)) out += "  n" + std::to_string(v) + " -- e" + std::to_string(e) + ";\n";
    out += "}\n";
    return out;
}

std::vector<std::filesystem::path> export_graphs(const std::vector<Hypergraph>& graphs, ExportFormat format,
                                                 const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> written;
    if (format == ExportFormat::Jsonl) {
        written.push_back(dir / "graphs.jsonl");
        write_jsonl(written.back(), graphs);
        return written;
    }
    // Validate everything before writing anything.
    std::vector<std::string> texts;
    for (std::size_t i = 0; i < graphs.size(); ++i)
        texts.push_back(format == ExportFormat::Dot ? to_dot(graphs[i], "H" + std::to_string(i)) : to_obj(graphs[i]));
    const std::string ext = format == ExportFormat::Dot ? ".dot" : ".obj";
    for (std::size_t i = 0; i < texts.size(); ++i) {
        written.push_back(dir / ("graph_" + std::to_string(i) + ext));
        write_text(written.back(), texts[i]);
    }
    return written;
}

std::vector<GraphRecord> load_record_dir(const std::filesystem::path& path) {
    namespace fs = std::filesystem;
    if (!fs::exists(path)) throw Error("IoError", path.string() + " does not exist");
    if (!fs::is_directory(path)) return read_jsonl_records(path);
    if (fs::exists(path / "manifest.json")) return read_jsonl_records(path / "test.jsonl");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(path))
        if (entry.is_regular_file() && entry.path().extension() == ".jsonl") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw Error("EmptyDataset", "no .jsonl files in " + path.string());
    std::vector<GraphRecord> out;
    for (const auto& f : files) {
        auto part = read_jsonl_records(f);
        out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
    }
    return out;
}

std::vector<Hypergraph> load_graph_dir(const std::filesystem::path& path) {
    std::vector<Hypergraph> out;
    for (auto& r : load_record_dir(path)) out.push_back(std::move(r.graph));
    return out;
}

}  // namespace hyperforge
