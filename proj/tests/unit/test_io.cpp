#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "hyperforge/io.hpp"
#include "test_support.hpp"

using namespace hyperforge;

namespace {

std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("hyperforge_test_io_" + name);
}

bool same_hypergraph(const Hypergraph& a, const Hypergraph& b) {
    return a.num_nodes() == b.num_nodes() && a.hyperedges() == b.hyperedges() &&
           a.node_features() == b.node_features() && a.hyperedge_features() == b.hyperedge_features();
}

}  // namespace

TEST_CASE("json lines round-trip exactly") {
    Rng rng(1);
    std::vector<Hypergraph> graphs;
    for (int i = 0; i < 20; ++i) graphs.push_back(testing::random_hypergraph(rng, 7, 5, 4, i % 3, i % 2));
    graphs.push_back(Hypergraph(3, {}));
    const auto path = temp_path("roundtrip.jsonl");
    write_jsonl(path, graphs);
    const auto back = read_jsonl(path);
    REQUIRE(back.size() == graphs.size());
    for (std::size_t i = 0; i < graphs.size(); ++i) CHECK(same_hypergraph(graphs[i], back[i]));
    std::filesystem::remove(path);
}

TEST_CASE("record layout") {
    const Hypergraph h(3, {{0, 1}, {1, 2}});
    CHECK(to_json_line(h) == R"({"edge_feat":null,"edges":[[0,1],[1,2]],"n":3,"node_feat":null})");
    GraphRecord r{h, 3, {1, 2, 1}};
    const auto back = parse_json_line(to_json_line(r));
    CHECK(back.target_n == 3);
    CHECK(back.budgets == std::vector<Budget>{1, 2, 1});
}

TEST_CASE("malformed records are rejected") {
    for (const char* bad : {"[1,2]", R"({"edges":[]})", R"({"n":2,"edges":[[0,2]]})", R"({"n":2,"edges":[[]]})",
                            R"({"n":2,"edges":[[0,1]],"node_feat":[[1.0]]})", R"({"n":2,"edges":[["a"]]})", "{"}) {
        CAPTURE(bad);
        CHECK_THROWS_AS(parse_json_line(bad), Error);
    }
    const auto path = temp_path("bad.jsonl");
    {
        std::ofstream out(path);
        out << R"({"n":1,"edges":[[0]]})" << "\n\n" << "oops\n";
    }
    try {
        read_jsonl(path);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find(":3:") != std::string::npos);
    }
    std::filesystem::remove(path);
}

TEST_CASE("checkpoint round-trip and layout") {
    Rng rng(2);
    ad::ParameterStore store;
    store.add("a.w", testing::random_hypergraph(rng, 3, 1, 2, 2).node_features());
    store.add("b", Matrix::Constant(1, 4, -0.125));
    const auto path = temp_path("model.ckpt");
    save_checkpoint(path, snapshot(store, {{"hidden_dim", "64"}}, 17));

    std::ifstream raw(path, std::ios::binary);
    char magic[8];
    raw.read(magic, 8);
    CHECK(std::string(magic, 8) == "HFCKPT01");

    const Checkpoint c = load_checkpoint(path);
    CHECK(c.step == 17);
    CHECK(c.config.at("hidden_dim") == "64");
    ad::ParameterStore other;
    other.add("a.w", Matrix::Zero(3, 2));
    other.add("b", Matrix::Zero(1, 4));
    restore(other, c);
    CHECK(other.value(0) == store.value(0));
    CHECK(other.value(1) == store.value(1));

    ad::ParameterStore wrong;
    wrong.add("a.w", Matrix::Zero(2, 2));
    wrong.add("b", Matrix::Zero(1, 4));
    CHECK_THROWS_AS(restore(wrong, c), Error);

    const auto size = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, size - 3);
    CHECK_THROWS_AS(load_checkpoint(path), Error);
    std::filesystem::remove(path);
}
