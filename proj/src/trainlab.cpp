#include "rmpi/trainlab.hpp"

#include "rmpi/evalbench.hpp"
#include "rmpi/io_util.hpp"
#include "rmpi/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace rmpi {

namespace {

std::uint64_t mix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                          std::uint64_t c = 0) {
    return mix(mix(mix(seed ^ mix(a)) ^ b) ^ c);
}

void put_u32(std::ostream& out, std::uint32_t v) {
    const char bytes[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                           static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
    out.write(bytes, 4);
}

std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw DataError("truncated subgraph cache");
    return std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) |
           (std::uint32_t{b[3]} << 24);
}

void put_triple(std::ostream& out, const Triple& t) {
    put_u32(out, t.head);
    put_u32(out, t.relation);
    put_u32(out, t.tail);
}

Triple get_triple(std::istream& in) {
    Triple t;
    t.head = get_u32(in);
    t.relation = get_u32(in);
    t.tail = get_u32(in);
    return t;
}

constexpr std::string_view kCacheMagic = "RMPISG01";

}  // namespace

void TrainConfig::validate() const {
    model.validate();
    if (!(margin > 0.0)) throw std::invalid_argument("margin must be positive");
    if (batch < 1) throw std::invalid_argument("batch size must be at least 1");
    if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
    if (epochs < 0) throw std::invalid_argument("epochs must be non-negative");
    if (patience < 0) throw std::invalid_argument("patience must be non-negative");
    if (negatives < 1) throw std::invalid_argument("need at least one negative per positive");
}

double margin_loss(std::span<const double> pos_scores, std::span<const double> neg_scores,
                   double margin) {
    if (pos_scores.size() != neg_scores.size())
        throw std::invalid_argument("margin_loss: score lists differ in length");
    double total = 0.0;
    for (std::size_t i = 0; i < pos_scores.size(); ++i)
        total += std::max(0.0, neg_scores[i] - pos_scores[i] + margin);
    return total;
}

num::Var margin_loss(num::Tape& tape, std::span<const num::Var> pos_scores,
                     std::span<const num::Var> neg_scores, double margin) {
    if (pos_scores.size() != neg_scores.size())
        throw std::invalid_argument("margin_loss: score lists differ in length");
    if (pos_scores.empty()) return tape.constant({0.0});
    const num::Var gamma = tape.constant({margin});
    std::vector<num::Var> terms;
    terms.reserve(pos_scores.size());
    for (std::size_t i = 0; i < pos_scores.size(); ++i) {
        num::Var diff = tape.add(neg_scores[i], tape.scale(pos_scores[i], -1.0));
        terms.push_back(tape.relu(tape.add(diff, gamma)));
    }
    return tape.sum(terms);
}

SubgraphCache::SubgraphCache(const KnowledgeGraph& graph, const ModelConfig& config,
                             std::size_t budget, std::optional<std::filesystem::path> dir)
    : graph_(graph), config_(config), budget_(budget) {
    if (!dir) return;
    std::ostringstream key;
    for (const auto& t : graph.triples()) put_triple(key, t);
    key << "|hop=" << config.hop << "|suppress=" << config.suppress_basic_types;
    file_ = *dir / ("subgraphs-" + io::sha256_hex(key.str()).substr(0, 16) + ".bin");

    std::ifstream in(*file_, std::ios::binary);
    if (!in) return;
    std::string magic(kCacheMagic.size(), '\0');
    in.read(magic.data(), static_cast<std::streamsize>(magic.size()));
    if (magic != kCacheMagic) throw DataError("not a subgraph cache: " + file_->string());
    const std::uint32_t count = get_u32(in);
    for (std::uint32_t i = 0; i < count; ++i) {
        const Triple key_triple = get_triple(in);
        std::vector<Triple> nodes(get_u32(in));
        for (auto& n : nodes) n = get_triple(in);
        std::vector<TypedEdge> edges(get_u32(in));
        for (auto& e : edges) {
            e.src = get_u32(in);
            const std::uint32_t type = get_u32(in);
            if (type >= kNumEdgeTypes) throw DataError("bad edge type in " + file_->string());
            e.type = static_cast<EdgeType>(type);
            e.dst = get_u32(in);
        }
        const std::uint32_t target = get_u32(in);
        if (entries_.size() < budget_)
            entries_.emplace(key_triple,
                             complete(key_triple, RelationViewGraph(std::move(nodes), std::move(edges), target)));
    }
}

std::shared_ptr<const SampleGraph> SubgraphCache::complete(const Triple& target,
                                                           RelationViewGraph rvg) const {
    auto sample = std::make_shared<SampleGraph>();
    sample->target = target;
    sample->enclosing = std::move(rvg);
    sample->pruned = prune_to_target(sample->enclosing, config_.layers);
    if (config_.ne) sample->disclosing = disclosing_neighborhood(graph_, target);
    return sample;
}

std::shared_ptr<const SampleGraph> SubgraphCache::get(const Triple& target) {
    {
        std::lock_guard lock(mutex_);
        if (auto it = entries_.find(target); it != entries_.end()) return it->second;
    }
    auto sample = std::make_shared<const SampleGraph>(build_sample(graph_, target, config_));
    std::lock_guard lock(mutex_);
    if (entries_.size() < budget_) entries_.emplace(target, sample);
    return sample;
}

std::size_t SubgraphCache::size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

void SubgraphCache::persist() const {
    if (!file_) return;
    std::lock_guard lock(mutex_);
    std::filesystem::create_directories(file_->parent_path());
    // Sorted so the file does not depend on hash-map iteration order.
    std::vector<const std::pair<const Triple, std::shared_ptr<const SampleGraph>>*> sorted;
    for (const auto& entry : entries_) sorted.push_back(&entry);
    std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->first < b->first; });

    const auto tmp = std::filesystem::path(file_->string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary);
        out.write(kCacheMagic.data(), static_cast<std::streamsize>(kCacheMagic.size()));
        put_u32(out, static_cast<std::uint32_t>(sorted.size()));
        for (const auto* entry : sorted) {
            const RelationViewGraph& rvg = entry->second->enclosing;
            put_triple(out, entry->first);
            put_u32(out, static_cast<std::uint32_t>(rvg.num_nodes()));
            for (const auto& n : rvg.nodes()) put_triple(out, n);
            put_u32(out, static_cast<std::uint32_t>(rvg.edges().size()));
            for (const auto& e : rvg.edges()) {
                put_u32(out, e.src);
                put_u32(out, static_cast<std::uint32_t>(e.type));
                put_u32(out, e.dst);
            }
            put_u32(out, rvg.target());
        }
        if (!out) throw DataError("cannot write subgraph cache " + tmp.string());
    }
    std::filesystem::rename(tmp, *file_);
}

std::string vocabulary_digest(const std::vector<std::string>& seen_relations) {
    std::string joined;
    for (const auto& name : seen_relations) {
        joined += name;
        joined += '\n';
    }
    return io::sha256_hex(joined);
}

Checkpoint make_checkpoint(const RmpiModel& model) {
    Checkpoint c;
    c.config = model.config();
    c.seen_relations = model.seen_relations();
    c.vocabulary_digest = vocabulary_digest(c.seen_relations);
    c.unseen_seed = model.unseen_seed();
    c.params = model.params();
    return c;
}

RmpiModel restore_model(const Checkpoint& checkpoint) {
    return RmpiModel(checkpoint.config, checkpoint.seen_relations, checkpoint.unseen_seed,
                     checkpoint.params);
}

nlohmann::json model_config_to_json(const ModelConfig& config) {
    return {{"hop", config.hop},
            {"layers", config.layers},
            {"dim", config.dim},
            {"dropout", config.dropout},
            {"leaky_slope", config.leaky_slope},
            {"ne", config.ne},
            {"ta", config.ta},
            {"fusion", std::string(to_string(config.fusion))},
            {"init", std::string(to_string(config.init))},
            {"schema_hidden", config.schema_hidden},
            {"schema_dim", config.schema_dim},
            {"suppress_basic_types", config.suppress_basic_types}};
}

ModelConfig model_config_from_json(const nlohmann::json& json) {
    ModelConfig c;
    c.hop = json.at("hop").get<std::uint32_t>();
    c.layers = json.at("layers").get<std::uint32_t>();
    c.dim = json.at("dim").get<std::size_t>();
    c.dropout = json.at("dropout").get<double>();
    c.leaky_slope = json.at("leaky_slope").get<double>();
    c.ne = json.at("ne").get<bool>();
    c.ta = json.at("ta").get<bool>();
    c.fusion = parse_fusion_mode(json.at("fusion").get<std::string>());
    c.init = parse_init_mode(json.at("init").get<std::string>());
    c.schema_hidden = json.at("schema_hidden").get<std::size_t>();
    c.schema_dim = json.at("schema_dim").get<std::size_t>();
    c.suppress_basic_types = json.at("suppress_basic_types").get<bool>();
    c.validate();
    return c;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::ordered_json manifest;
    manifest["format_version"] = checkpoint.format_version;
    manifest["config"] = model_config_to_json(checkpoint.config);
    manifest["vocabulary_digest"] = checkpoint.vocabulary_digest;
    manifest["seen_relations"] = checkpoint.seen_relations;
    manifest["unseen_seed"] = checkpoint.unseen_seed;
    manifest["best_epoch"] = checkpoint.best_epoch;
    manifest["best_valid_auc_pr"] = std::isfinite(checkpoint.best_valid_auc_pr)
                                        ? nlohmann::ordered_json(checkpoint.best_valid_auc_pr)
                                        : nlohmann::ordered_json(nullptr);
    auto& blocks = manifest["params"] = nlohmann::ordered_json::array();

    std::ofstream bin(dir / "params.bin", std::ios::binary);
    for (std::uint32_t i = 0; i < checkpoint.params.size(); ++i) {
        const num::ParamId id{i};
        const num::Matrix& m = checkpoint.params.value(id);
        blocks.push_back({{"name", checkpoint.params.name(id)}, {"rows", m.rows()}, {"cols", m.cols()}});
        io::write_f32_le(bin, m.data());
    }
    if (!bin) throw DataError("cannot write " + (dir / "params.bin").string());
    std::ofstream(dir / "manifest.json", std::ios::binary) << manifest.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(io::read_file(dir / "manifest.json"));
    } catch (const nlohmann::json::exception& e) {
        throw DataError("bad checkpoint manifest in " + dir.string() + ": " + e.what());
    }
    Checkpoint c;
    try {
        c.format_version = manifest.at("format_version").get<int>();
        if (c.format_version != Checkpoint::kFormatVersion)
            throw DataError("unsupported checkpoint format version " + std::to_string(c.format_version));
        c.config = model_config_from_json(manifest.at("config"));
        c.vocabulary_digest = manifest.at("vocabulary_digest").get<std::string>();
        c.seen_relations = manifest.at("seen_relations").get<std::vector<std::string>>();
        c.unseen_seed = manifest.at("unseen_seed").get<std::uint64_t>();
        c.best_epoch = manifest.value("best_epoch", 0);
        const auto& auc = manifest.at("best_valid_auc_pr");
        c.best_valid_auc_pr = auc.is_null() ? std::numeric_limits<double>::quiet_NaN() : auc.get<double>();
        if (vocabulary_digest(c.seen_relations) != c.vocabulary_digest)
            throw DataError("checkpoint vocabulary digest mismatch in " + dir.string());

        std::ifstream bin(dir / "params.bin", std::ios::binary);
        if (!bin) throw DataError("missing " + (dir / "params.bin").string());
        for (const auto& block : manifest.at("params")) {
            const auto rows = block.at("rows").get<std::size_t>();
            const auto cols = block.at("cols").get<std::size_t>();
            c.params.add(block.at("name").get<std::string>(),
                         num::Matrix(rows, cols, io::read_f32_le(bin, rows * cols)));
        }
        if (bin.peek() != std::char_traits<char>::eof())
            throw DataError("trailing bytes in " + (dir / "params.bin").string());
    } catch (const nlohmann::json::exception& e) {
        throw DataError("bad checkpoint manifest in " + dir.string() + ": " + e.what());
    } catch (const std::invalid_argument& e) {
        throw DataError("bad checkpoint in " + dir.string() + ": " + e.what());
    }
    return c;
}

TrainResult train(const Benchmark& benchmark, const TrainConfig& config,
                  const SchemaVectors* schema) {
    config.validate();
    if (config.model.init == InitMode::kSchema && schema == nullptr)
        throw DataError("SCHEMA initialization requires schema vectors");
    const KnowledgeGraph& graph = benchmark.train;
    if (graph.size() == 0) throw DataError("empty training graph");

    std::vector<std::string> seen;
    for (RelationId r : benchmark.vocab.seen_relations()) seen.push_back(benchmark.vocab.relation_name(r));
    RmpiModel model(config.model, seen, config.seed);
    model.bind(benchmark.vocab, schema);

    TrainResult result;
    result.best = make_checkpoint(model);
    result.best.best_valid_auc_pr = std::numeric_limits<double>::quiet_NaN();
    if (config.epochs == 0) return result;

    SubgraphCache cache(graph, config.model, config.cache_budget, config.cache_dir);
    TripleList valid = benchmark.valid;
    if (config.valid_limit > 0 && valid.size() > config.valid_limit) valid.resize(config.valid_limit);

    num::AdamState adam;
    const num::AdamConfig adam_config{.lr = config.lr};
    std::mt19937_64 order_rng(derive_seed(config.seed, 1));
    std::mt19937_64 negative_rng(derive_seed(config.seed, 2));
    std::vector<std::size_t> order(graph.size());
    std::iota(order.begin(), order.end(), 0);

    double best_auc = -1.0;
    int since_best = 0;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto start = std::chrono::steady_clock::now();
        std::shuffle(order.begin(), order.end(), order_rng);
        double epoch_loss = 0.0;

        for (std::size_t begin = 0, batch_index = 0; begin < order.size();
             begin += config.batch, ++batch_index) {
            const std::size_t end = std::min(order.size(), begin + config.batch);
            // Pairs in (positive, negative) order; negatives drawn sequentially
            // so the stream is independent of the worker count.
            std::vector<Triple> positives, negatives;
            for (std::size_t i = begin; i < end; ++i) {
                const Triple& pos = graph.triples()[order[i]];
                for (std::size_t n = 0; n < config.negatives; ++n) {
                    positives.push_back(pos);
                    negatives.push_back(sample_negative(pos, graph, negative_rng, config.sampling));
                }
            }
            std::vector<std::shared_ptr<const SampleGraph>> pos_samples(positives.size());
            std::vector<std::shared_ptr<const SampleGraph>> neg_samples(negatives.size());
            parallel_for(positives.size() * 2, config.workers, [&](std::size_t i) {
                const std::size_t pair = i / 2;
                if (i % 2 == 0)
                    pos_samples[pair] = cache.get(positives[pair]);
                else
                    neg_samples[pair] = std::make_shared<const SampleGraph>(
                        build_sample(graph, negatives[pair], config.model));
            });

            model.params().zero_grad();
            num::Tape tape(model.params());
            std::vector<num::Var> pos_scores, neg_scores;
            for (std::size_t p = 0; p < positives.size(); ++p) {
                EdgeDropout pos_drop(config.model.dropout,
                                     derive_seed(config.seed, epoch, batch_index, 2 * p + 3));
                EdgeDropout neg_drop(config.model.dropout,
                                     derive_seed(config.seed, epoch, batch_index, 2 * p + 4));
                pos_scores.push_back(model.forward(tape, *pos_samples[p], &pos_drop));
                neg_scores.push_back(model.forward(tape, *neg_samples[p], &neg_drop));
            }
            const num::Var loss = margin_loss(tape, pos_scores, neg_scores, config.margin);
            epoch_loss += tape.scalar(loss);
            tape.backward(loss);
            num::adam_step(model.params(), adam, adam_config);
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.mean_loss = epoch_loss / static_cast<double>(order.size() * config.negatives);
        stats.valid_auc_pr = std::numeric_limits<double>::quiet_NaN();
        bool improved = false;
        if (!valid.empty()) {
            const auto scorer = model_scorer(model, graph);
            stats.valid_auc_pr = classify(scorer, graph, valid, derive_seed(config.seed, 3),
                                          config.sampling, config.workers)
                                     .auc_pr;
            improved = stats.valid_auc_pr > best_auc;
        } else {
            improved = true;
        }
        stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        result.history.push_back(stats);
        if (config.on_epoch) config.on_epoch(stats);

        if (improved) {
            if (!valid.empty()) best_auc = stats.valid_auc_pr;
            result.best = make_checkpoint(model);
            result.best.best_epoch = epoch;
            result.best.best_valid_auc_pr = stats.valid_auc_pr;
            since_best = 0;
        } else if (config.patience > 0 && ++since_best >= config.patience) {
            break;
        }
    }
    cache.persist();
    return result;
}

}  // namespace rmpi
