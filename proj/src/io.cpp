// io.cpp - JSONL records and checkpoint files
#include "hyperforge/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace hyperforge {

using nlohmann::json;

namespace {

json features_json(const Matrix& m) {
    if (m.cols() == 0) return nullptr;
    json rows = json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix features_from(const json& j, Index rows, const char* what) {
    if (j.is_null()) return Matrix(rows, 0);
    if (!j.is_array()) throw Error("MalformedRecord", std::string(what) + " must be an array or null");
    if (static_cast<Index>(j.size()) != rows) {
        throw Error("MalformedRecord", std::string(what) + " has " + std::to_string(j.size()) + " rows, expected " +
                                           std::to_string(rows));
    }
    if (rows == 0) return Matrix(0, 0);
    const auto cols = static_cast<Index>(j.front().size());
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        const json& row = j[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<Index>(row.size()) != cols)
            throw Error("MalformedRecord", std::string(what) + " rows must all have the same width");
        for (Index c = 0; c < cols; ++c) {
            const json& v = row[static_cast<std::size_t>(c)];
            if (!v.is_number()) throw Error("MalformedRecord", std::string(what) + " entries must be numbers");
            m(i, c) = v.get<double>();
            if (!std::isfinite(m(i, c))) throw Error("MalformedRecord", std::string(what) + " entries must be finite");
        }
    }
    return m;
}

}  // namespace

std::string to_json_line(const GraphRecord& record) {
    const Hypergraph& h = record.graph;
    json j;
    j["n"] = h.num_nodes();
    j["edges"] = h.hyperedges();
    j["node_feat"] = features_json(h.node_features());
    j["edge_feat"] = features_json(h.hyperedge_features());
    if (record.target_n) j["target_n"] = *record.target_n;
    if (!record.budgets.empty()) j["budgets"] = record.budgets;
    return j.dump();
}

std::string to_json_line(const Hypergraph& h) { return to_json_line(GraphRecord{h, std::nullopt, {}}); }

GraphRecord parse_json_line(const std::string& line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::parse_error& e) {
        throw Error("MalformedRecord", std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw Error("MalformedRecord", "record must be a JSON object");
    if (!j.contains("n") || !j["n"].is_number_integer()) throw Error("MalformedRecord", "missing integer field n");
    if (!j.contains("edges") || !j["edges"].is_array()) throw Error("MalformedRecord", "missing array field edges");
    const auto n = j["n"].get<Index>();
    std::vector<std::vector<Index>> edges;
    for (const auto& e : j["edges"]) {
        if (!e.is_array()) throw Error("MalformedRecord", "each hyperedge must be an array");
        std::vector<Index> nodes;
        for (const auto& v : e) {
            if (!v.is_number_integer()) throw Error("MalformedRecord", "hyperedge members must be integers");
            nodes.push_back(v.get<Index>());
        }
        edges.push_back(std::move(nodes));
    }
    const auto m = static_cast<Index>(edges.size());
    Matrix nf = features_from(j.value("node_feat", json(nullptr)), n, "node_feat");
    Matrix ef = features_from(j.value("edge_feat", json(nullptr)), m, "edge_feat");
    GraphRecord r{Hypergraph(n, std::move(edges), std::move(nf), std::move(ef)), std::nullopt, {}};
    if (j.contains("target_n") && !j["target_n"].is_null()) r.target_n = j["target_n"].get<Index>();
    if (j.contains("budgets") && !j["budgets"].is_null()) r.budgets = j["budgets"].get<std::vector<Budget>>();
    return r;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<GraphRecord>& records) {
    std::ofstream out(path);
    if (!out) throw Error("IoError", "cannot write " + path.string());
    for (const auto& r : records) out << to_json_line(r) << '\n';
    if (!out) throw Error("IoError", "write failed for " + path.string());
}

void write_jsonl(const std::filesystem::path& path, const std::vector<Hypergraph>& graphs) {
    std::vector<GraphRecord> records;
    records.reserve(graphs.size());
    for (const auto& g : graphs) records.push_back({g, std::nullopt, {}});
    write_jsonl(path, records);
}

std::vector<GraphRecord> read_jsonl_records(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("IoError", "cannot open " + path.string());
    std::vector<GraphRecord> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(parse_json_line(line));
        } catch (const Error& e) {
            throw Error(e.code(), path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

std::vector<Hypergraph> read_jsonl(const std::filesystem::path& path) {
    std::vector<Hypergraph> out;
    for (auto& r : read_jsonl_records(path)) out.push_back(std::move(r.graph));
    return out;
}

namespace {

constexpr char kMagic[8] = {'H', 'F', 'C', 'K', 'P', 'T', '0', '1'};

template <typename T>
T to_little(T v) {
    if constexpr (std::endian::native == std::endian::little) {
        return v;
    } else {
        unsigned char b[sizeof(T)];
        std::memcpy(b, &v, sizeof(T));
        std::reverse(b, b + sizeof(T));
        std::memcpy(&v, b, sizeof(T));
        return v;
    }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    json manifest;
    manifest["version"] = kCheckpointVersion;
    manifest["step"] = ckpt.step;
    manifest["config"] = ckpt.config;
    json tensors = json::array();
    for (const auto& [name, m] : ckpt.tensors)
        tensors.push_back({{"name", name}, {"shape", {m.rows(), m.cols()}}, {"dtype", "f64"}});
    manifest["tensors"] = std::move(tensors);
    const std::string text = manifest.dump();

    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw Error("IoError", "cannot write " + tmp.string());
        out.write(kMagic, sizeof(kMagic));
        const std::uint64_t len = to_little<std::uint64_t>(text.size());
        out.write(reinterpret_cast<const char*>(&len), sizeof(len));
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        for (const auto& [name, m] : ckpt.tensors) {
            for (Index i = 0; i < m.size(); ++i) {
                const double v = to_little(m.data()[i]);
                out.write(reinterpret_cast<const char*>(&v), sizeof(v));
            }
        }
        if (!out) throw Error("IoError", "write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("IoError", "cannot open " + path.string());
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw Error("BadCheckpoint", "not a checkpoint file");
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    len = to_little(len);
    if (!in || len > (1ull << 30)) throw Error("BadCheckpoint", "truncated manifest length");
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    if (!in) throw Error("BadCheckpoint", "truncated manifest");

    Checkpoint ckpt;
    try {
        const json manifest = json::parse(text);
        if (manifest.at("version").get<int>() != kCheckpointVersion)
            throw Error("BadCheckpoint", "unsupported checkpoint version");
        ckpt.step = manifest.at("step").get<std::int64_t>();
        ckpt.config = manifest.at("config").get<std::map<std::string, std::string>>();
        for (const auto& t : manifest.at("tensors")) {
            if (t.at("dtype").get<std::string>() != "f64") throw Error("BadCheckpoint", "unsupported dtype");
            const auto rows = t.at("shape").at(0).get<Index>();
            const auto cols = t.at("shape").at(1).get<Index>();
            ckpt.tensors.emplace_back(t.at("name").get<std::string>(), Matrix(rows, cols));
        }
    } catch (const json::exception& e) {
        throw Error("BadCheckpoint", std::string("malformed manifest: ") + e.what());
    }
    for (auto& [name, m] : ckpt.tensors) {
        for (Index i = 0; i < m.size(); ++i) {
            double v = 0.0;
            in.read(reinterpret_cast<char*>(&v), sizeof(v));
            m.data()[i] = to_little(v);
        }
        if (!in) throw Error("BadCheckpoint", "truncated data for tensor " + name);
    }
    in.peek();
    if (!in.eof()) throw Error("BadCheckpoint", "trailing bytes after tensor data");
    return ckpt;
}

Checkpoint snapshot(const ad::ParameterStore& params, std::map<std::string, std::string> config, std::int64_t step) {
    Checkpoint c;
    c.config = std::move(config);
    c.step = step;
    for (Index i = 0; i < params.size(); ++i) c.tensors.emplace_back(params.name(i), params.value(i));
    return c;
}

void restore(ad::ParameterStore& params, const Checkpoint& ckpt) {
    if (static_cast<Index>(ckpt.tensors.size()) != params.size()) {
        throw Error("CheckpointMismatch", "checkpoint has " + std::to_string(ckpt.tensors.size()) +
                                              " tensors, model has " + std::to_string(params.size()));
    }
    for (const auto& [name, m] : ckpt.tensors) {
        if (!params.contains(name)) throw Error("CheckpointMismatch", "model has no parameter " + name);
        Matrix& dst = params.value(params.find(name));
        if (dst.rows() != m.rows() || dst.cols() != m.cols())
            throw Error("CheckpointMismatch", "shape differs for parameter " + name);
    }
    for (const auto& [name, m] : ckpt.tensors) params.value(params.find(name)) = m;
}

}  // namespace hyperforge
