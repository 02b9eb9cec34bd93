// rmpi command-line entry point: train, eval, schema-pretrain, benchgen and
// dump-subgraph. Exit codes: 0 success, 1 usage error, 2 data error.

#include "rmpi/evalbench.hpp"
#include "rmpi/io_util.hpp"
#include "rmpi/kgstore.hpp"
#include "rmpi/rmpnet.hpp"
#include "rmpi/schema.hpp"
#include "rmpi/subgraph.hpp"
#include "rmpi/trainlab.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace rmpi;

namespace {

// Thrown for flag combinations CLI11 cannot check on its own.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string utc_now() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream out;
    out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return out.str();
}

// Every option of the subcommand with its value as given or its default.
json resolved_flags(const CLI::App& app) {
    json flags = json::object();
    for (const CLI::Option* opt : app.get_options()) {
        const std::string name = opt->get_single_name();
        if (name == "help") continue;
        if (opt->count() > 0) {
            const auto& results = opt->results();
            if (results.size() == 1)
                flags[name] = results.front();
            else
                flags[name] = results;
        } else {
            flags[name] = opt->get_default_str();
        }
    }
    return flags;
}

class RunManifest {
public:
    RunManifest(std::string command, const CLI::App& app, std::uint64_t seed)
        : command_(std::move(command)), flags_(resolved_flags(app)), seed_(seed), started_(utc_now()) {}

    void input(const fs::path& file) {
        if (fs::is_regular_file(file)) inputs_[file.string()] = io::git_blob_digest(file);
    }
    void input_dir(const fs::path& dir, std::initializer_list<const char*> names) {
        for (const char* name : names) input(dir / name);
    }
    void output(const fs::path& path) { outputs_.push_back(path.string()); }

    void write(const fs::path& dir) const {
        json j;
        j["command"] = command_;
        j["flags"] = flags_;
        j["seed"] = seed_;
        j["started_at"] = started_;
        j["finished_at"] = utc_now();
        j["inputs"] = inputs_;
        j["outputs"] = outputs_;
        fs::create_directories(dir);
        std::ofstream(dir / "run_manifest.json") << j.dump(2) << '\n';
    }

private:
    std::string command_;
    json flags_;
    std::uint64_t seed_;
    std::string started_;
    json inputs_ = json::object();
    std::vector<std::string> outputs_;
};

constexpr std::initializer_list<const char*> kBenchmarkFiles = {"train.txt", "valid.txt",
                                                                "test_graph.txt", "test.txt"};

struct ModelFlags {
    std::string variant = "base";
    std::string fusion = "sum";
    std::string init = "random";
    ModelConfig config;

    void add(CLI::App& app) {
        app.add_option("--hop", config.hop, "Subgraph radius K")->capture_default_str();
        app.add_option("--layers", config.layers, "Message-passing layers")->capture_default_str();
        app.add_option("--dim", config.dim, "Relation feature width")->capture_default_str();
        app.add_option("--dropout", config.dropout, "Edge dropout rate")->capture_default_str();
        app.add_option("--variant", variant, "Model variant")
            ->check(CLI::IsMember({"base", "ne", "ta", "ne-ta"}))
            ->capture_default_str();
        app.add_option("--fusion", fusion, "Fusion of the disclosing branch")
            ->check(CLI::IsMember({"sum", "conc"}))
            ->capture_default_str();
        app.add_option("--init", init, "Initial relation features")
            ->check(CLI::IsMember({"random", "schema"}))
            ->capture_default_str();
        app.add_option("--schema-hidden", config.schema_hidden, "Hidden width of the schema projection")
            ->capture_default_str();
    }

    ModelConfig resolve() const {
        ModelConfig c = config;
        c.ne = variant == "ne" || variant == "ne-ta";
        c.ta = variant == "ta" || variant == "ne-ta";
        c.fusion = parse_fusion_mode(fusion);
        c.init = parse_init_mode(init);
        return c;
    }
};

std::optional<SchemaVectors> load_schema_for(InitMode init, const std::string& dir) {
    if (init != InitMode::kSchema) return std::nullopt;
    if (dir.empty()) throw UsageError("--init schema requires --schema-vectors");
    return load_schema_vectors(dir);
}

// ---- train

struct TrainFlags {
    std::string data;
    std::string out = "ckpt";
    std::string schema_vectors;
    ModelFlags model;
    TrainConfig train;
    int runs = 1;
};

int run_train(const CLI::App& app, const TrainFlags& f) {
    Benchmark bench = load_benchmark(f.data);
    TrainConfig base = f.train;
    base.model = f.model.resolve();
    auto schema = load_schema_for(base.model.init, f.schema_vectors);
    if (schema) base.model.schema_dim = schema->dim;
    if (const char* cache = std::getenv("RMPI_CACHE_DIR"); cache && *cache) base.cache_dir = fs::path(cache);

    RunManifest manifest("train", app, base.seed);
    manifest.input_dir(f.data, kBenchmarkFiles);
    if (schema) manifest.input_dir(f.schema_vectors, {"schema_vectors.tsv", "schema_vectors.bin"});

    double auc_sum = 0.0;
    std::size_t auc_count = 0;
    for (int run = 0; run < f.runs; ++run) {
        TrainConfig config = base;
        config.seed = base.seed + static_cast<std::uint64_t>(run);
        const fs::path out = f.runs == 1 ? fs::path(f.out) : fs::path(f.out) / ("run-" + std::to_string(run));
        config.on_epoch = [&](const EpochStats& s) {
            std::cerr << "run " << run << " epoch " << s.epoch << " loss " << s.mean_loss
                      << " valid_auc_pr " << s.valid_auc_pr << " (" << std::lround(s.seconds * 10) / 10.0
                      << "s)\n";
        };
        TrainResult result = train(bench, config, schema ? &*schema : nullptr);
        save_checkpoint(result.best, out);
        std::ofstream history(out / "history.tsv");
        history << "epoch\tmean_loss\tvalid_auc_pr\tseconds\n";
        for (const auto& s : result.history)
            history << s.epoch << '\t' << s.mean_loss << '\t' << s.valid_auc_pr << '\t' << s.seconds << '\n';
        manifest.output(out / "manifest.json");
        manifest.output(out / "params.bin");
        manifest.output(out / "history.tsv");
        if (std::isfinite(result.best.best_valid_auc_pr)) {
            auc_sum += result.best.best_valid_auc_pr;
            ++auc_count;
        }
        std::cout << out.string() << "\tbest_epoch=" << result.best.best_epoch
                  << "\tvalid_auc_pr=" << result.best.best_valid_auc_pr << '\n';
    }
    if (f.runs > 1 && auc_count > 0)
        std::cout << "mean_valid_auc_pr\t" << auc_sum / static_cast<double>(auc_count) << '\n';
    manifest.write(f.out);
    return 0;
}

// ---- eval

struct EvalFlags {
    std::string ckpt;
    std::string data;
    std::string out;
    std::string schema_vectors;
    std::string task = "both";
    std::string side = "both";
    std::size_t neg = 49;
    std::vector<std::size_t> hits{1, 5, 10};
    std::uint64_t seed = 0;
    std::size_t workers = 1;
};

std::vector<fs::path> checkpoint_dirs(const fs::path& root) {
    if (fs::is_regular_file(root / "manifest.json")) return {root};
    std::vector<fs::path> runs;
    if (fs::is_directory(root))
        for (const auto& entry : fs::directory_iterator(root))
            if (entry.is_directory() && entry.path().filename().string().starts_with("run-") &&
                fs::is_regular_file(entry.path() / "manifest.json"))
                runs.push_back(entry.path());
    std::sort(runs.begin(), runs.end());
    if (runs.empty()) throw DataError("no checkpoint found in " + root.string());
    return runs;
}

int run_eval(const CLI::App& app, const EvalFlags& f) {
    Benchmark bench = load_benchmark(f.data);
    if (bench.test_targets.empty()) throw DataError("no test targets in " + f.data);
    const auto ckpts = checkpoint_dirs(f.ckpt);
    const fs::path out = f.out.empty() ? fs::path(f.ckpt) : fs::path(f.out);

    RunManifest manifest("eval", app, f.seed);
    manifest.input_dir(f.data, kBenchmarkFiles);

    std::vector<CorruptSide> sides;
    if (f.side != "tail") sides.push_back(CorruptSide::kHead);
    if (f.side != "head") sides.push_back(CorruptSide::kTail);

    std::vector<std::pair<std::string, double>> mean;
    auto accumulate = [&](const std::string& name, double value) {
        auto it = std::find_if(mean.begin(), mean.end(), [&](const auto& m) { return m.first == name; });
        if (it == mean.end())
            mean.emplace_back(name, value);
        else
            it->second += value;
    };

    for (const auto& dir : ckpts) {
        manifest.input_dir(dir, {"manifest.json", "params.bin"});
        Checkpoint ckpt = load_checkpoint(dir);
        RmpiModel model = restore_model(ckpt);
        auto schema = load_schema_for(ckpt.config.init, f.schema_vectors);
        model.bind(bench.vocab, schema ? &*schema : nullptr);
        const auto scorer = model_scorer(model, bench.test_graph);

        std::vector<std::pair<std::string, double>> metrics;
        if (f.task != "rank") {
            auto result = classify(scorer, bench.test_graph, bench.test_targets, f.seed, {}, f.workers);
            metrics.emplace_back("auc_pr", result.auc_pr);
        }
        if (f.task != "classify") {
            auto result = evaluate_ranking(scorer, bench.test_graph, bench.test_targets, sides, f.neg,
                                           f.hits, f.seed, f.workers);
            metrics.emplace_back("mrr", result.mrr);
            for (const auto& [n, value] : result.hits) metrics.emplace_back("hits@" + std::to_string(n), value);
            metrics.emplace_back("min_candidates", static_cast<double>(result.min_candidates));
        }
        metrics.emplace_back("targets", static_cast<double>(bench.test_targets.size()));
        const fs::path report_dir = ckpts.size() == 1 ? out : out / dir.filename();
        write_report(report_dir, "eval", metrics);
        manifest.output(report_dir / "eval.tsv");
        manifest.output(report_dir / "eval.json");
        for (const auto& [name, value] : metrics) {
            std::cout << (ckpts.size() == 1 ? "" : dir.filename().string() + "\t") << name << '\t'
                      << value << '\n';
            accumulate(name, value);
        }
    }
    if (ckpts.size() > 1) {
        for (auto& [name, value] : mean) value /= static_cast<double>(ckpts.size());
        write_report(out, "eval_mean", mean);
        manifest.output(out / "eval_mean.tsv");
        manifest.output(out / "eval_mean.json");
        for (const auto& [name, value] : mean) std::cout << "mean\t" << name << '\t' << value << '\n';
    }
    manifest.write(out);
    return 0;
}

// ---- schema-pretrain

struct SchemaFlags {
    std::string schema;
    std::string relations_from;
    std::string out = "schema_vectors";
    TransEConfig transe;
};

int run_schema_pretrain(const CLI::App& app, const SchemaFlags& f) {
    SchemaGraph graph = load_schema(f.schema);
    RunManifest manifest("schema-pretrain", app, f.transe.seed);
    manifest.input(f.schema);

    std::vector<std::string> relations;
    if (!f.relations_from.empty()) {
        Benchmark bench = load_benchmark(f.relations_from);
        relations = bench.vocab.relation_names();
        manifest.input_dir(f.relations_from, kBenchmarkFiles);
    } else {
        for (std::uint32_t node : graph.relation_nodes()) relations.push_back(graph.nodes[node]);
    }
    SchemaEmbedding embedding = pretrain(graph, f.transe);
    SchemaVectors vectors = export_relation_vectors(graph, embedding, relations);
    save_schema_vectors(vectors, f.out);

    std::ofstream loss(fs::path(f.out) / "loss.tsv");
    loss << "epoch\tmean_loss\n";
    for (std::size_t e = 0; e < embedding.epoch_loss.size(); ++e) loss << e + 1 << '\t' << embedding.epoch_loss[e] << '\n';
    for (const char* name : {"schema_vectors.tsv", "schema_vectors.bin", "loss.tsv"})
        manifest.output(fs::path(f.out) / name);
    std::cout << "nodes\t" << graph.nodes.size() << "\ntriples\t" << graph.edges.size()
              << "\nrelations\t" << vectors.vectors.size() << "\nfinal_loss\t"
              << (embedding.epoch_loss.empty() ? 0.0 : embedding.epoch_loss.back()) << '\n';
    manifest.write(f.out);
    return 0;
}

// ---- benchgen

struct BenchgenFlags {
    std::string train_from;
    std::string test_from;
    std::string out;
};

void print_stats(const char* label, const GraphStats& s) {
    std::cout << label << "\trelations=" << s.relations << "\tunseen=" << s.unseen_relations
              << "\tentities=" << s.entities << "\tgraph_triples=" << s.graph_triples
              << "\ttargets=" << s.target_triples << '\n';
}

int run_benchgen(const CLI::App& app, const BenchgenFlags& f) {
    RunManifest manifest("benchgen", app, 0);
    manifest.input_dir(f.train_from, {"train.txt", "valid.txt"});
    manifest.input_dir(f.test_from, {"test_graph.txt", "test.txt"});
    RecombinedBench bench = recombine(f.train_from, f.test_from, f.out);
    print_stats("train", bench.train_stats);
    print_stats("te_semi", bench.semi_stats);
    print_stats("te_fully", bench.fully_stats);
    manifest.output(fs::path(f.out) / "semi");
    manifest.output(fs::path(f.out) / "fully");
    manifest.output(fs::path(f.out) / "stats.json");
    manifest.write(f.out);
    return 0;
}

// ---- dump-subgraph

struct DumpFlags {
    std::string data;
    std::string graph = "train";
    std::string head, relation, tail;
    std::string kind = "enclosing";
    std::uint32_t hop = 2;
    std::uint32_t layers = 2;
    std::string out;
};

int run_dump(const CLI::App& app, const DumpFlags& f) {
    Benchmark bench = load_benchmark(f.data);
    const KnowledgeGraph& graph = f.graph == "train" ? bench.train : bench.test_graph;
    const Triple target{bench.vocab.entity_id(f.head), bench.vocab.relation_id(f.relation),
                        bench.vocab.entity_id(f.tail)};
    EntitySubgraph sub = f.kind == "enclosing" ? extract_enclosing(graph, target, f.hop)
                                               : extract_disclosing(graph, target, f.hop);
    RelationViewGraph rvg = to_relation_view(sub);

    std::ostringstream text;
    text << "# target\t" << f.head << '\t' << f.relation << '\t' << f.tail << "\n# kind\t" << f.kind
         << "\n# entities\t" << sub.entities.size() << '\n';
    write_relation_view(text, rvg, &bench.vocab);
    if (f.kind == "enclosing") {
        PrunedNeighborhood pruned = prune_to_target(rvg, f.layers);
        text << "# schedule\n";
        for (std::size_t k = 0; k < pruned.update_sets.size(); ++k) {
            text << "layer " << k + 1 << "\tupdates " << pruned.update_sets[k].size() << "\tedges "
                 << pruned.layer_edges[k].size() << '\n';
        }
    }
    if (f.out.empty()) {
        std::cout << text.str();
    } else {
        const fs::path out(f.out);
        if (out.has_parent_path()) fs::create_directories(out.parent_path());
        std::ofstream(out) << text.str();
        RunManifest manifest("dump-subgraph", app, 0);
        manifest.input_dir(f.data, kBenchmarkFiles);
        manifest.output(out);
        manifest.write(out.has_parent_path() ? out.parent_path() : fs::path("."));
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Relational message passing for inductive knowledge graph completion"};
    app.require_subcommand(1);

    TrainFlags train_flags;
    auto* train_cmd = app.add_subcommand("train", "Train a model on a benchmark directory");
    train_cmd->add_option("--data", train_flags.data, "Benchmark directory")->required();
    train_flags.model.add(*train_cmd);
    train_cmd->add_option("--lr", train_flags.train.lr, "Adam learning rate")->capture_default_str();
    train_cmd->add_option("--batch", train_flags.train.batch, "Positives per batch")->capture_default_str();
    train_cmd->add_option("--margin", train_flags.train.margin, "Ranking-loss margin")->capture_default_str();
    train_cmd->add_option("--epochs", train_flags.train.epochs, "Maximum epochs")->capture_default_str();
    train_cmd->add_option("--patience", train_flags.train.patience, "Early-stopping patience (0 = off)")
        ->capture_default_str();
    train_cmd->add_option("--negatives", train_flags.train.negatives, "Negatives per positive")->capture_default_str();
    train_cmd->add_option("--valid-limit", train_flags.train.valid_limit, "Validation targets used (0 = all)")
        ->capture_default_str();
    train_cmd->add_flag("!--keep-collisions", train_flags.train.sampling.avoid_known,
                        "Accept negatives that are known triples");
    train_cmd->add_option("--seed", train_flags.train.seed, "Random seed")->capture_default_str();
    train_cmd->add_option("--workers", train_flags.train.workers, "Sample-construction threads")->capture_default_str();
    train_cmd->add_option("--runs", train_flags.runs, "Repeat with seeds seed, seed+1, ...")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    train_cmd->add_option("--schema-vectors", train_flags.schema_vectors, "Schema vector directory");
    train_cmd->add_option("--out", train_flags.out, "Checkpoint directory")->capture_default_str();

    EvalFlags eval_flags;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on the testing graph");
    eval_cmd->add_option("--ckpt", eval_flags.ckpt, "Checkpoint directory (or a directory of run-*)")->required();
    eval_cmd->add_option("--data", eval_flags.data, "Benchmark directory")->required();
    eval_cmd->add_option("--task", eval_flags.task, "Evaluation protocol")
        ->check(CLI::IsMember({"classify", "rank", "both"}))
        ->capture_default_str();
    eval_cmd->add_option("--neg", eval_flags.neg, "Ranking candidates per query")->capture_default_str();
    eval_cmd->add_option("--hits", eval_flags.hits, "Hits@n cutoffs")->capture_default_str();
    eval_cmd->add_option("--side", eval_flags.side, "Corrupted side in ranking")
        ->check(CLI::IsMember({"head", "tail", "both"}))
        ->capture_default_str();
    eval_cmd->add_option("--seed", eval_flags.seed, "Sampling seed")->capture_default_str();
    eval_cmd->add_option("--workers", eval_flags.workers, "Scoring threads")->capture_default_str();
    eval_cmd->add_option("--schema-vectors", eval_flags.schema_vectors, "Schema vector directory");
    eval_cmd->add_option("--out", eval_flags.out, "Report directory (default: the checkpoint)");

    SchemaFlags schema_flags;
    auto* schema_cmd = app.add_subcommand("schema-pretrain", "Embed an RDFS schema graph with TransE");
    schema_cmd->add_option("--schema", schema_flags.schema, "Schema triples (TSV)")->required();
    schema_cmd->add_option("--relations-from", schema_flags.relations_from,
                           "Export vectors for this benchmark's relations");
    schema_cmd->add_option("--dim", schema_flags.transe.dim, "Embedding width")->capture_default_str();
    schema_cmd->add_option("--epochs", schema_flags.transe.epochs, "Epochs")->capture_default_str();
    schema_cmd->add_option("--lr", schema_flags.transe.lr, "SGD learning rate")->capture_default_str();
    schema_cmd->add_option("--margin", schema_flags.transe.margin, "Hinge margin")->capture_default_str();
    schema_cmd->add_option("--seed", schema_flags.transe.seed, "Random seed")->capture_default_str();
    schema_cmd->add_option("--out", schema_flags.out, "Output directory")->capture_default_str();

    BenchgenFlags bench_flags;
    auto* bench_cmd = app.add_subcommand("benchgen", "Recombine two benchmark versions");
    bench_cmd->add_option("--train-from", bench_flags.train_from, "Source of the training graph")
        ->required();
    bench_cmd->add_option("--test-from", bench_flags.test_from, "Source of the testing graph")
        ->required();
    bench_cmd->add_option("--out", bench_flags.out, "Output directory")->required();

    DumpFlags dump_flags;
    auto* dump_cmd = app.add_subcommand("dump-subgraph", "Print the relation view around one triple");
    dump_cmd->add_option("--data", dump_flags.data, "Benchmark directory")->required();
    dump_cmd->add_option("--graph", dump_flags.graph, "Graph to extract from")
        ->check(CLI::IsMember({"train", "test"}))
        ->capture_default_str();
    dump_cmd->add_option("--head", dump_flags.head, "Head entity")->required();
    dump_cmd->add_option("--relation", dump_flags.relation, "Relation")->required();
    dump_cmd->add_option("--tail", dump_flags.tail, "Tail entity")->required();
    dump_cmd->add_option("--kind", dump_flags.kind, "Subgraph kind")
        ->check(CLI::IsMember({"enclosing", "disclosing"}))
        ->capture_default_str();
    dump_cmd->add_option("--hop", dump_flags.hop, "Subgraph radius K")->capture_default_str();
    dump_cmd->add_option("--layers", dump_flags.layers, "Schedule depth")->capture_default_str();
    dump_cmd->add_option("--out", dump_flags.out, "Output file (default: stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (*train_cmd) return run_train(*train_cmd, train_flags);
        if (*eval_cmd) return run_eval(*eval_cmd, eval_flags);
        if (*schema_cmd) return run_schema_pretrain(*schema_cmd, schema_flags);
        if (*bench_cmd) return run_benchgen(*bench_cmd, bench_flags);
        if (*dump_cmd) return run_dump(*dump_cmd, dump_flags);
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 2;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 1;
}
