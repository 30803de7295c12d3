// io.hpp - hypergraph JSONL records and binary checkpoints
#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hyperforge/autodiff.hpp"
#include "hyperforge/hypergraph.hpp"

namespace hyperforge {

// One JSONL line: {"n", "edges", "node_feat", "edge_feat"} plus optional
// "target_n" (requested size of a sampled graph) and "budgets" (left budgets
// of a coarsened level).
struct GraphRecord {
    Hypergraph graph;
    std::optional<Index> target_n;
    std::vector<Budget> budgets;
};

std::string to_json_line(const GraphRecord& record);
std::string to_json_line(const Hypergraph& h);
// Throws Error("MalformedRecord") with the reason.
GraphRecord parse_json_line(const std::string& line);

void write_jsonl(const std::filesystem::path& path, const std::vector<GraphRecord>& records);
void write_jsonl(const std::filesystem::path& path, const std::vector<Hypergraph>& graphs);
// Blank lines are skipped; errors name the offending line.
std::vector<GraphRecord> read_jsonl_records(const std::filesystem::path& path);
std::vector<Hypergraph> read_jsonl(const std::filesystem::path& path);

// Checkpoint layout: 8-byte magic "HFCKPT01", little-endian uint64 manifest
// length, JSON manifest, then every tensor as little-endian float64 in
// manifest order (row-major).
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
    std::map<std::string, std::string> config;  // key=value echo of the run config
    std::int64_t step = 0;
    std::vector<std::pair<std::string, Matrix>> tensors;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
// Throws Error("BadCheckpoint") on truncated or malformed files.
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint snapshot(const ad::ParameterStore& params, std::map<std::string, std::string> config, std::int64_t step);
// Copies tensors into the store by name. Throws Error("CheckpointMismatch")
// when names or shapes differ.
void restore(ad::ParameterStore& params, const Checkpoint& ckpt);

}  // namespace hyperforge
