// hyperforge.cpp - command-line front end
//
// Every subcommand prints a one-line JSON summary on stdout. Failures print
// {"error": CODE, "message": TEXT} on stderr and exit non-zero.
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "hyperforge/coarsening.hpp"
#include "hyperforge/datasets.hpp"
#include "hyperforge/export.hpp"
#include "hyperforge/io.hpp"
#include "hyperforge/metrics.hpp"
#include "hyperforge/pipeline.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace hyperforge;
using nlohmann::json;

namespace {

void print(const json& j) { std::cout << j.dump() << std::endl; }

int fail(const std::string& code, const std::string& message, int status) {
    std::cerr << json{{"error", code}, {"message", message}}.dump() << std::endl;
    return status;
}

struct GenDataArgs {
    std::string kind;
    fs::path out;
    std::uint64_t seed = 0;
    DatasetSpec spec;
};

void run_gen_data(GenDataArgs& a) {
    a.spec.kind = parse_dataset_kind(a.kind);
    a.spec.seed = a.seed;
    const Dataset data = generate_dataset(a.spec);
    write_dataset(a.out, data);
    print({{"out", a.out.string()},
           {"kind", dataset_kind_name(a.spec.kind)},
           {"train", data.train.size()},
           {"val", data.val.size()},
           {"test", data.test.size()}});
}

struct TrainArgs {
    fs::path config;
    std::optional<Index> max_steps;
    std::optional<fs::path> out;
    Index progress_every = 100;
};

void run_train(const TrainArgs& a) {
    TrainConfig cfg = TrainConfig::load(a.config);
    if (a.max_steps) cfg.max_steps = *a.max_steps;
    if (a.out) cfg.out_dir = *a.out;
    if (cfg.out_dir.empty()) cfg.out_dir = a.config.parent_path() / "run";

    Dataset data;
    if (!cfg.data_dir.empty() && fs::exists(cfg.data_dir / "manifest.json")) {
        data = read_dataset(cfg.data_dir);
    } else {
        data = generate_dataset(cfg.dataset);
        if (!cfg.data_dir.empty()) write_dataset(cfg.data_dir, data);
    }
    const auto start = std::chrono::steady_clock::now();
    Trainer trainer(cfg, data.train, data.val);
    trainer.run([&](Index step, double loss) {
        if (a.progress_every > 0 && step % a.progress_every == 0)
            std::cerr << "step " << step << " loss " << loss << " running " << trainer.stats().running.back()
                      << std::endl;
    });
    const auto& st = trainer.stats();
    json out{{"steps", trainer.steps_done()},
             {"model", (cfg.out_dir / "model.hfck").string()},
             {"loss_log", (cfg.out_dir / "loss.csv").string()},
             {"seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()}};
    if (!st.running.empty()) {
        out["initial_running_loss"] = st.running[static_cast<std::size_t>(
            std::min<Index>(cfg.log_window, static_cast<Index>(st.running.size())) - 1)];
        out["final_running_loss"] = st.running.back();
    }
    if (st.best_val) out["best_val_loss"] = *st.best_val;
    print(out);
}

struct SampleArgs {
    fs::path ckpt;
    Index n_nodes = 0;
    Index count = 1;
    fs::path out;
    std::uint64_t seed = 0;
    Index threads = 1;
    std::optional<Index> steps;
};

void run_sample(const SampleArgs& a) {
    if (a.n_nodes < 1) throw Error("OutOfRange", "--n-nodes must be >= 1");
    const LoadedModel m = load_model(a.ckpt);
    SampleOptions opts = SampleOptions::from(m.config);
    if (a.steps) opts.steps = *a.steps;
    const auto graphs = sample_many(m.model, a.n_nodes, a.count, opts, a.seed, a.threads);
    std::vector<GraphRecord> records;
    Index isolated = 0;
    for (const auto& g : graphs) {
        records.push_back({g, a.n_nodes, {}});
        for (Index d : g.node_degrees())
            if (d == 0) {
                ++isolated;
                break;
            }
    }
    fs::create_directories(a.out);
    const fs::path file = a.out / "samples.jsonl";
    write_jsonl(file, records);
    print({{"file", file.string()}, {"count", graphs.size()}, {"n_nodes", a.n_nodes}, {"with_isolated_nodes", isolated}});
}

struct EvalArgs {
    fs::path gen, ref;
    std::string kind;
    std::optional<fs::path> out;
};

void run_eval(const EvalArgs& a) {
    const DatasetKind kind = parse_dataset_kind(a.kind);
    const auto records = load_record_dir(a.gen);
    const auto reference = load_graph_dir(a.ref);
    std::vector<Hypergraph> generated;
    std::vector<Index> targets;
    bool all_targets = true;
    for (const auto& r : records) {
        generated.push_back(r.graph);
        if (r.target_n) targets.push_back(*r.target_n);
        else all_targets = false;
    }
    if (!all_targets) targets.clear();
    const MetricReport report = evaluate(generated, reference, kind, targets);
    const std::string text = report.to_json();
    if (a.out) {
        std::ofstream f(*a.out);
        if (!f) throw Error("IoError", "cannot write " + a.out->string());
        f << text << "\n";
    }
    std::cout << text << std::endl;
}

struct ExportArgs {
    fs::path in;
    std::string format;
    std::optional<fs::path> out;
};

void run_export(const ExportArgs& a) {
    const ExportFormat format = parse_export_format(a.format);
    const auto graphs = load_graph_dir(a.in);
    const fs::path base = fs::is_directory(a.in) ? a.in : a.in.parent_path();
    const fs::path dir = a.out ? *a.out : base / ("export_" + a.format);
    const auto files = export_graphs(graphs, format, dir);
    print({{"dir", dir.string()}, {"graphs", graphs.size()}, {"files", files.size()}});
}

struct DemoArgs {
    fs::path in;
    std::optional<fs::path> out;
    Index index = 0;
    std::uint64_t seed = 0;
};

void run_coarsen_demo(const DemoArgs& a) {
    const auto graphs = read_jsonl(a.in);
    if (a.index < 0 || a.index >= static_cast<Index>(graphs.size()))
        throw Error("OutOfRange", "--index " + std::to_string(a.index) + " but the file holds " +
                                      std::to_string(graphs.size()) + " graphs");
    Rng rng(a.seed);
    const CoarseningSequence seq = sample_coarsening_sequence(graphs[static_cast<std::size_t>(a.index)], {}, rng);
    const fs::path dir = a.out ? *a.out : a.in.parent_path() / (a.in.stem().string() + "_levels");
    fs::create_directories(dir);
    json levels = json::array();
    for (Index l = 0; l < seq.num_levels(); ++l) {
        const BipartiteGraph& b = seq.level(l).bipartite;
        const Hypergraph h = collapse_bipartite(b);
        const std::string stem = "level_" + std::to_string(l);
        write_jsonl(dir / (stem + ".jsonl"), std::vector<GraphRecord>{{h, std::nullopt, b.left_budgets()}});
        std::ofstream(dir / (stem + ".dot")) << to_dot(h, "level" + std::to_string(l));
        levels.push_back({{"level", l}, {"nodes", h.num_nodes()}, {"hyperedges", h.num_hyperedges()}});
    }
    print({{"dir", dir.string()}, {"levels", levels}});
}

}  // namespace

int main(int argc, char** argv) {
    hyperforge::retain_heap_memory();
    CLI::App app{"hyperforge: hierarchical hypergraph generation"};
    app.require_subcommand(1);

    GenDataArgs gen;
    auto* g = app.add_subcommand("gen-data", "generate a synthetic dataset directory");
    g->add_option("--kind", gen.kind, "sbm, ego, tree or mesh")->required();
    g->add_option("--out", gen.out, "output directory")->required();
    g->add_option("--seed", gen.seed);
    g->add_option("--train", gen.spec.train);
    g->add_option("--val", gen.spec.val);
    g->add_option("--test", gen.spec.test);
    g->add_option("--tree-nodes", gen.spec.tree_nodes);
    g->add_option("--mesh-dir", gen.spec.mesh_dir, "OFF/OBJ source directory for --kind mesh");

    TrainArgs train;
    auto* t = app.add_subcommand("train", "train a denoiser from a key = value config file");
    t->add_option("--config", train.config)->required()->check(CLI::ExistingFile);
    t->add_option("--max-steps", train.max_steps);
    t->add_option("--out", train.out, "run directory (overrides train.out_dir)");
    t->add_option("--progress-every", train.progress_every, "stderr progress cadence; 0 disables");

    SampleArgs sample;
    auto* s = app.add_subcommand("sample", "sample hypergraphs of a fixed size");
    s->add_option("--ckpt", sample.ckpt)->required()->check(CLI::ExistingFile);
    s->add_option("--n-nodes", sample.n_nodes)->required();
    s->add_option("--count", sample.count);
    s->add_option("--out", sample.out)->required();
    s->add_option("--seed", sample.seed);
    s->add_option("--threads", sample.threads);
    s->add_option("--steps", sample.steps, "flow integration steps");

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "compare generated graphs with a reference set");
    e->add_option("--gen", ev.gen)->required();
    e->add_option("--ref", ev.ref)->required();
    e->add_option("--kind", ev.kind)->required();
    e->add_option("--out", ev.out, "also write the report here");

    ExportArgs ex;
    auto* x = app.add_subcommand("export", "write graphs as DOT, OBJ or JSONL");
    x->add_option("--in", ex.in)->required();
    x->add_option("--format", ex.format)->required();
    x->add_option("--out", ex.out);

    DemoArgs demo;
    auto* d = app.add_subcommand("coarsen-demo", "write every coarsening level as JSONL and DOT");
    d->add_option("--in", demo.in)->required()->check(CLI::ExistingFile);
    d->add_option("--out", demo.out);
    d->add_option("--index", demo.index, "graph to coarsen");
    d->add_option("--seed", demo.seed);

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& ok) {
        return app.exit(ok);
    } catch (const CLI::ParseError& err) {
        return fail("UsageError", err.what(), 2);
    }

    try {
        if (*g) run_gen_data(gen);
        else if (*t) run_train(train);
        else if (*s) run_sample(sample);
        else if (*e) run_eval(ev);
        else if (*x) run_export(ex);
        else if (*d) run_coarsen_demo(demo);
    } catch (const Error& err) {
        return fail(err.code(), err.what(), 1);
    } catch (const std::exception& err) {
        return fail("Internal", err.what(), 1);
    }
    return 0;
}
