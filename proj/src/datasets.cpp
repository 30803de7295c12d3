// datasets.cpp - SBM / ego / tree generators, OFF and OBJ meshes, dataset dirs
#include "hyperforge/datasets.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <queue>
#include <set>
#include <sstream>

#include "hyperforge/io.hpp"
#include "json.hpp"

namespace hyperforge {

const char* dataset_kind_name(DatasetKind kind) {
    switch (kind) {
        case DatasetKind::Sbm: return "sbm";
        case DatasetKind::Ego: return "ego";
        case DatasetKind::Tree: return "tree";
        case DatasetKind::MeshDir: return "mesh-dir";
    }
    return "unknown";
}

DatasetKind parse_dataset_kind(const std::string& name) {
    if (name == "sbm") return DatasetKind::Sbm;
    if (name == "ego") return DatasetKind::Ego;
    if (name == "tree") return DatasetKind::Tree;
    if (name == "mesh-dir" || name == "mesh") return DatasetKind::MeshDir;
    throw Error("UnknownKind", "unknown dataset kind '" + name + "'");
}

void DatasetSpec::validate() const {
    if (train < 0 || val < 0 || test < 0) throw Error("InvalidConfig", "split sizes must be >= 0");
    if (tree_nodes < 1) throw Error("InvalidConfig", "tree_nodes must be >= 1");
    if (kind == DatasetKind::MeshDir && mesh_dir.empty()) throw Error("InvalidConfig", "mesh-dir needs a source directory");
}

Hypergraph gen_sbm(Rng& rng) {
    constexpr Index n = 32;
    constexpr Index group = 16;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<std::vector<Index>> edges;
    for (Index a = 0; a < n; ++a)
        for (Index b = a + 1; b < n; ++b)
            for (Index c = b + 1; c < n; ++c) {
                const bool same = a / group == b / group && b / group == c / group;
                if (unit(rng) < (same ? 0.05 : 0.001)) edges.push_back({a, b, c});
            }
    return Hypergraph(n, std::move(edges));
}

Hypergraph gen_ego(Rng& rng) {
    std::uniform_int_distribution<Index> base_size(150, 200);
    std::uniform_int_distribution<Index> edge_size(2, 5);
    for (;;) {
        const Index n = base_size(rng);
        std::vector<Index> nodes(static_cast<std::size_t>(n));
        std::iota(nodes.begin(), nodes.end(), Index{0});
        std::vector<std::vector<Index>> base;
        base.reserve(3000);
        for (int e = 0; e < 3000; ++e) {
            const Index s = edge_size(rng);
            // Partial Fisher-Yates draw of s distinct nodes.
            for (Index i = 0; i < s; ++i) {
                std::uniform_int_distribution<Index> pick(i, n - 1);
                std::swap(nodes[static_cast<std::size_t>(i)], nodes[static_cast<std::size_t>(pick(rng))]);
            }
            std::vector<Index> edge(nodes.begin(), nodes.begin() + s);
            std::sort(edge.begin(), edge.end());
            base.push_back(std::move(edge));
        }
        std::uniform_int_distribution<Index> pick_ego(0, n - 1);
        const Index ego = pick_ego(rng);
        std::set<std::vector<Index>> kept;
        for (auto& e : base)
            if (std::binary_search(e.begin(), e.end(), ego)) kept.insert(e);
        if (kept.empty()) continue;
        std::map<Index, Index> relabel;
        for (const auto& e : kept)
            for (Index v : e) relabel.emplace(v, 0);
        Index next = 0;
        for (auto& [old, fresh] : relabel) fresh = next++;
        std::vector<std::vector<Index>> edges;
        for (const auto& e : kept) {
            std::vector<Index> mapped;
            for (Index v : e) mapped.push_back(relabel[v]);
            edges.push_back(std::move(mapped));
        }
        return Hypergraph(next, std::move(edges));
    }
}

Hypergraph gen_tree(Rng& rng, Index n) {
    if (n < 1) throw Error("InvalidArgument", "tree needs at least one node");
    if (n == 1) return Hypergraph(1, {});
    // Pruefer decoding gives a uniformly random labelled tree.
    std::vector<std::pair<Index, Index>> tree;
    if (n == 2) {
        tree.push_back({0, 1});
    } else {
        std::uniform_int_distribution<Index> label(0, n - 1);
        std::vector<Index> code(static_cast<std::size_t>(n - 2));
        std::vector<Index> degree(static_cast<std::size_t>(n), 1);
        for (auto& c : code) {
            c = label(rng);
            ++degree[static_cast<std::size_t>(c)];
        }
        std::priority_queue<Index, std::vector<Index>, std::greater<>> leaves;
        for (Index v = 0; v < n; ++v)
            if (degree[static_cast<std::size_t>(v)] == 1) leaves.push(v);
        for (Index c : code) {
            const Index leaf = leaves.top();
            leaves.pop();
            tree.push_back({leaf, c});
            if (--degree[static_cast<std::size_t>(c)] == 1) leaves.push(c);
        }
        const Index a = leaves.top();
        leaves.pop();
        tree.push_back({a, leaves.top()});
    }

    // Tree edges in breadth-first order from node 0.
    std::vector<std::vector<std::pair<Index, std::size_t>>> adj(static_cast<std::size_t>(n));
    for (std::size_t e = 0; e < tree.size(); ++e) {
        adj[static_cast<std::size_t>(tree[e].first)].push_back({tree[e].second, e});
        adj[static_cast<std::size_t>(tree[e].second)].push_back({tree[e].first, e});
    }
    std::vector<std::size_t> order;
    std::vector<std::size_t> rank(tree.size());
    std::vector<bool> seen(static_cast<std::size_t>(n), false);
    std::queue<Index> q;
    q.push(0);
    seen[0] = true;
    while (!q.empty()) {
        const Index u = q.front();
        q.pop();
        for (const auto& [v, e] : adj[static_cast<std::size_t>(u)]) {
            if (seen[static_cast<std::size_t>(v)]) continue;
            seen[static_cast<std::size_t>(v)] = true;
            rank[e] = order.size();
            order.push_back(e);
            q.push(v);
        }
    }

    std::uniform_int_distribution<Index> group_size(2, 5);
    std::vector<bool> used(tree.size(), false);
    std::vector<std::vector<Index>> hyperedges;
    for (std::size_t start : order) {
        if (used[start]) continue;
        used[start] = true;
        const Index target = group_size(rng);
        std::vector<Index> members{tree[start].first, tree[start].second};
        while (static_cast<Index>(members.size()) < target) {
            // Earliest unused tree edge touching the group.
            std::size_t best = tree.size();
            for (Index v : members)
                for (const auto& [w, e] : adj[static_cast<std::size_t>(v)])
                    if (!used[e] && (best == tree.size() || rank[e] < rank[best])) best = e;
            if (best == tree.size()) break;
            used[best] = true;
            for (Index v : {tree[best].first, tree[best].second})
                if (std::find(members.begin(), members.end(), v) == members.end()) members.push_back(v);
        }
        std::sort(members.begin(), members.end());
        hyperedges.push_back(std::move(members));
    }
    return Hypergraph(n, std::move(hyperedges));
}

namespace {

Hypergraph mesh_from(std::vector<std::array<double, 3>> vertices, std::vector<std::vector<Index>> faces) {
    const auto n = static_cast<Index>(vertices.size());
    std::set<std::vector<Index>> unique;
    std::vector<std::vector<Index>> edges;
    for (std::size_t f = 0; f < faces.size(); ++f) {
        auto face = faces[f];
        if (face.size() != 3)
            throw Error("MalformedMesh", "face " + std::to_string(f) + " has " + std::to_string(face.size()) +
                                             " vertices; only triangles are supported");
        for (Index v : face)
            if (v < 0 || v >= n) throw Error("MalformedMesh", "face " + std::to_string(f) + " references a missing vertex");
        std::sort(face.begin(), face.end());
        if (std::adjacent_find(face.begin(), face.end()) != face.end())
            throw Error("MalformedMesh", "face " + std::to_string(f) + " repeats a vertex");
        if (unique.insert(face).second) edges.push_back(std::move(face));
    }
    Matrix pos(n, 3);
    for (Index i = 0; i < n; ++i)
        for (Index c = 0; c < 3; ++c) pos(i, c) = vertices[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
    return Hypergraph(n, std::move(edges), std::move(pos));
}

// Whitespace-separated tokens with '#' comments removed.
std::vector<std::string> tokens_of(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream in(line.substr(0, line.find('#')));
    std::string t;
    while (in >> t) out.push_back(t);
    return out;
}

double number(const std::string& s, const char* what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw Error("MalformedMesh", std::string("bad ") + what + " '" + s + "'");
    }
}

Index integer(const std::string& s, const char* what) {
    try {
        std::size_t used = 0;
        const long long v = std::stoll(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return static_cast<Index>(v);
    } catch (const std::exception&) {
        throw Error("MalformedMesh", std::string("bad ") + what + " '" + s + "'");
    }
}

}  // namespace

Hypergraph parse_off(const std::string& text) {
    std::istringstream in(text);
    std::vector<std::vector<std::string>> lines;
    std::string line;
    while (std::getline(in, line)) {
        auto t = tokens_of(line);
        if (!t.empty()) lines.push_back(std::move(t));
    }
    if (lines.empty()) throw Error("MalformedMesh", "empty OFF file");
    std::size_t at = 0;
    std::vector<std::string> header = lines[0];
    if (header[0].rfind("OFF", 0) != 0) throw Error("MalformedMesh", "missing OFF header");
    // The counts may share the header line ("OFF 4 4 6").
    header.erase(header.begin());
    if (header.empty()) {
        if (lines.size() < 2) throw Error("MalformedMesh", "missing OFF counts");
        header = lines[++at];
    }
    if (header.size() < 2) throw Error("MalformedMesh", "OFF counts need vertex and face numbers");
    const Index nv = integer(header[0], "vertex count");
    const Index nf = integer(header[1], "face count");
    if (nv < 0 || nf < 0) throw Error("MalformedMesh", "negative OFF counts");
    ++at;
    if (lines.size() < at + static_cast<std::size_t>(nv + nf)) throw Error("MalformedMesh", "OFF file is truncated");
    std::vector<std::array<double, 3>> verts;
    for (Index i = 0; i < nv; ++i, ++at) {
        const auto& t = lines[at];
        if (t.size() < 3) throw Error("MalformedMesh", "vertex " + std::to_string(i) + " needs 3 coordinates");
        verts.push_back({number(t[0], "coordinate"), number(t[1], "coordinate"), number(t[2], "coordinate")});
    }
    std::vector<std::vector<Index>> faces;
    for (Index f = 0; f < nf; ++f, ++at) {
        const auto& t = lines[at];
        const Index k = integer(t[0], "face size");
        if (k < 0 || static_cast<Index>(t.size()) < k + 1) throw Error("MalformedMesh", "face " + std::to_string(f) + " is truncated");
        std::vector<Index> face;
        for (Index j = 1; j <= k; ++j) face.push_back(integer(t[static_cast<std::size_t>(j)], "vertex index"));
        faces.push_back(std::move(face));
    }
    return mesh_from(std::move(verts), std::move(faces));
}

Hypergraph parse_obj(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::vector<std::array<double, 3>> verts;
    std::vector<std::vector<Index>> faces;
    while (std::getline(in, line)) {
        const auto t = tokens_of(line);
        if (t.empty()) continue;
        if (t[0] == "v") {
            if (t.size() < 4) throw Error("MalformedMesh", "vertex needs 3 coordinates");
            verts.push_back({number(t[1], "coordinate"), number(t[2], "coordinate"), number(t[3], "coordinate")});
        } else if (t[0] == "f") {
            std::vector<Index> face;
            for (std::size_t j = 1; j < t.size(); ++j) {
                // "i", "i/t", "i/t/n" or "i//n"; negative indices count from the end.
                const Index idx = integer(t[j].substr(0, t[j].find('/')), "vertex index");
                if (idx == 0) throw Error("MalformedMesh", "OBJ vertex indices start at 1");
                face.push_back(idx > 0 ? idx - 1 : static_cast<Index>(verts.size()) + idx);
            }
            faces.push_back(std::move(face));
        }
    }
    return mesh_from(std::move(verts), std::move(faces));
}

Hypergraph load_mesh(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("IoError", "cannot open " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    try {
        if (ext == ".off") return parse_off(buf.str());
        if (ext == ".obj") return parse_obj(buf.str());
    } catch (const Error& e) {
        throw Error(e.code(), path.string() + ": " + e.what());
    }
    throw Error("MalformedMesh", "unsupported mesh extension '" + ext + "'");
}

std::string to_obj(const Hypergraph& h) {
    if (h.node_feature_dim() != 3) throw Error("NotAMesh", "OBJ export needs 3-D node positions");
    std::ostringstream out;
    out.precision(17);
    for (Index i = 0; i < h.num_nodes(); ++i)
        out << "v " << h.node_features()(i, 0) << ' ' << h.node_features()(i, 1) << ' ' << h.node_features()(i, 2) << '\n';
    for (const auto& e : h.hyperedges()) {
        if (e.size() != 3) throw Error("NotAMesh", "OBJ export needs hyperedges of exactly 3 nodes");
        out << "f " << e[0] + 1 << ' ' << e[1] + 1 << ' ' << e[2] + 1 << '\n';
    }
    return out.str();
}

Dataset generate_dataset(const DatasetSpec& spec) {
    spec.validate();
    Dataset d;
    d.spec = spec;
    Rng rng(spec.seed);
    std::vector<Hypergraph> all;
    const Index total = spec.train + spec.val + spec.test;
    if (spec.kind == DatasetKind::MeshDir) {
        std::vector<std::filesystem::path> files;
        for (const auto& entry : std::filesystem::directory_iterator(spec.mesh_dir)) {
            auto ext = entry.path().extension().string();
            std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
            if (ext == ".off" || ext == ".obj") files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        std::shuffle(files.begin(), files.end(), rng);
        if (static_cast<Index>(files.size()) < total) {
            throw Error("InvalidConfig", "mesh directory holds " + std::to_string(files.size()) + " meshes, splits need " +
                                             std::to_string(total));
        }
        for (Index i = 0; i < total; ++i) all.push_back(load_mesh(files[static_cast<std::size_t>(i)]));
    } else {
        for (Index i = 0; i < total; ++i) {
            switch (spec.kind) {
                case DatasetKind::Sbm: all.push_back(gen_sbm(rng)); break;
                case DatasetKind::Ego: all.push_back(gen_ego(rng)); break;
                case DatasetKind::Tree: all.push_back(gen_tree(rng, spec.tree_nodes)); break;
                case DatasetKind::MeshDir: break;
            }
        }
    }
    auto take = [&](Index begin, Index count) {
        return std::vector<Hypergraph>(all.begin() + begin, all.begin() + begin + count);
    };
    d.train = take(0, spec.train);
    d.val = take(spec.train, spec.val);
    d.test = take(spec.train + spec.val, spec.test);
    return d;
}

void write_dataset(const std::filesystem::path& dir, const Dataset& data) {
    std::filesystem::create_directories(dir);
    write_jsonl(dir / "train.jsonl", data.train);
    write_jsonl(dir / "val.jsonl", data.val);
    write_jsonl(dir / "test.jsonl", data.test);
    nlohmann::json m;
    m["kind"] = dataset_kind_name(data.spec.kind);
    m["seed"] = data.spec.seed;
    m["splits"] = {{"train", data.train.size()}, {"val", data.val.size()}, {"test", data.test.size()}};
    if (data.spec.kind == DatasetKind::Tree) m["tree_nodes"] = data.spec.tree_nodes;
    if (data.spec.kind == DatasetKind::MeshDir) m["mesh_dir"] = data.spec.mesh_dir.string();
    std::ofstream out(dir / "manifest.json");
    if (!out) throw Error("IoError", "cannot write " + (dir / "manifest.json").string());
    out << m.dump(2) << '\n';
}

Dataset read_dataset(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw Error("DatasetMissing", "no manifest.json in " + dir.string());
    Dataset d;
    try {
        const auto m = nlohmann::json::parse(in);
        d.spec.kind = parse_dataset_kind(m.at("kind").get<std::string>());
        d.spec.seed = m.at("seed").get<std::uint64_t>();
        d.spec.tree_nodes = m.value("tree_nodes", Index{32});
    } catch (const nlohmann::json::exception& e) {
        throw Error("DatasetMissing", std::string("malformed manifest: ") + e.what());
    }
    d.train = read_jsonl(dir / "train.jsonl");
    d.val = read_jsonl(dir / "val.jsonl");
    d.test = read_jsonl(dir / "test.jsonl");
    d.spec.train = static_cast<Index>(d.train.size());
    d.spec.val = static_cast<Index>(d.val.size());
    d.spec.test = static_cast<Index>(d.test.size());
    return d;
}

}  // namespace hyperforge
