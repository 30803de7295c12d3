// datasets.hpp - synthetic generators, mesh readers and dataset directories
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hyperforge/hypergraph.hpp"

namespace hyperforge {

enum class DatasetKind { Sbm, Ego, Tree, MeshDir };

const char* dataset_kind_name(DatasetKind kind);
// Throws Error("UnknownKind").
DatasetKind parse_dataset_kind(const std::string& name);

struct DatasetSpec {
    DatasetKind kind = DatasetKind::Tree;
    Index train = 128;
    Index val = 32;
    Index test = 40;
    std::uint64_t seed = 0;
    Index tree_nodes = 32;           // tree generator size
    std::filesystem::path mesh_dir;  // source of OFF/OBJ files for MeshDir

    void validate() const;
};

struct Dataset {
    DatasetSpec spec;
    std::vector<Hypergraph> train, val, test;
};

// 32 nodes in two groups of 16; every 3-subset is a hyperedge with
// probability 0.05 inside a group and 0.001 across groups.
Hypergraph gen_sbm(Rng& rng);
// Base hypergraph on 150 to 200 nodes with 3000 hyperedges of 2 to 5 nodes;
// keeps the hyperedges through a random ego node, relabelled compactly.
Hypergraph gen_ego(Rng& rng);
// Uniform random labelled tree whose edges are grouped into connected
// groups of at most 5 nodes; each group becomes a hyperedge.
Hypergraph gen_tree(Rng& rng, Index num_nodes = 32);

// Triangle meshes: vertices become nodes with 3-D position features and
// faces become size-3 hyperedges (duplicates dropped).
Hypergraph load_mesh(const std::filesystem::path& path);
Hypergraph parse_off(const std::string& text);
Hypergraph parse_obj(const std::string& text);
// Positions from the node features (3 columns); every hyperedge of 3 nodes
// becomes a face. Throws Error("NotAMesh") otherwise.
std::string to_obj(const Hypergraph& h);

Dataset generate_dataset(const DatasetSpec& spec);
// Writes train.jsonl, val.jsonl, test.jsonl and manifest.json.
void write_dataset(const std::filesystem::path& dir, const Dataset& data);
Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace hyperforge
