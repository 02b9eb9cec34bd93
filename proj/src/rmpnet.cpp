#include "rmpi/rmpnet.hpp"

#include <cmath>
#include <stdexcept>

namespace rmpi {

using num::Matrix;
using num::Tape;
using num::Var;

namespace {

std::uint64_t fnv1a(std::string_view text) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

double xavier_bound(std::size_t fan_a, std::size_t fan_b) {
    return std::sqrt(6.0 / static_cast<double>(fan_a + fan_b));
}

Matrix xavier(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-xavier_bound(rows, cols), xavier_bound(rows, cols));
    Matrix m(rows, cols);
    for (double& v : m.data()) v = dist(rng);
    return m;
}

}  // namespace

std::string_view to_string(FusionMode mode) { return mode == FusionMode::kSum ? "sum" : "conc"; }
std::string_view to_string(InitMode mode) { return mode == InitMode::kRandom ? "random" : "schema"; }

FusionMode parse_fusion_mode(std::string_view text) {
    if (text == "sum") return FusionMode::kSum;
    if (text == "conc" || text == "concat") return FusionMode::kConcat;
    throw std::invalid_argument("unknown fusion mode '" + std::string(text) + "'");
}

InitMode parse_init_mode(std::string_view text) {
    if (text == "random") return InitMode::kRandom;
    if (text == "schema") return InitMode::kSchema;
    throw std::invalid_argument("unknown init mode '" + std::string(text) + "'");
}

void ModelConfig::validate() const {
    if (hop < 1) throw std::invalid_argument("hop must be >= 1");
    if (layers < 1) throw std::invalid_argument("layers must be >= 1");
    if (dim < 1) throw std::invalid_argument("dim must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must be in [0, 1)");
    if (init == InitMode::kSchema && (schema_hidden < 1 || schema_dim < 1))
        throw std::invalid_argument("schema dimensions must be positive");
}

SampleGraph build_sample(const KnowledgeGraph& graph, const Triple& target,
                         const ModelConfig& config) {
    SampleGraph s;
    s.target = target;
    RelationViewOptions options;
    options.suppress_basic_types = config.suppress_basic_types;
    s.enclosing = to_relation_view(extract_enclosing(graph, target, config.hop), options);
    s.pruned = prune_to_target(s.enclosing, config.layers);
    if (config.ne) s.disclosing = disclosing_neighborhood(graph, target);
    return s;
}

EdgeDropout::EdgeDropout(double rate, std::uint64_t seed)
    : rate_(rate), rng_(seed), drop_(rate) {
    if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout rate must be in [0, 1)");
}

bool EdgeDropout::keep() { return rate_ == 0.0 || !drop_(rng_); }

std::string edge_weight_name(std::uint32_t layer, EdgeType type) {
    return "layer" + std::to_string(layer) + "." + std::string(edge_type_name(type));
}

RmpiModel::RmpiModel(ModelConfig config, std::vector<std::string> seen_relations,
                     std::uint64_t seed)
    : config_(config), seen_relations_(std::move(seen_relations)), unseen_seed_(seed ^ 0x5EEDULL) {
    config_.validate();
    for (std::size_t i = 0; i < seen_relations_.size(); ++i) seen_rows_.emplace(seen_relations_[i], i);
    init_params(seed);
    resolve_param_ids();
}

RmpiModel::RmpiModel(ModelConfig config, std::vector<std::string> seen_relations,
                     std::uint64_t unseen_seed, num::ParamStore params)
    : config_(config),
      seen_relations_(std::move(seen_relations)),
      unseen_seed_(unseen_seed),
      params_(std::move(params)) {
    config_.validate();
    for (std::size_t i = 0; i < seen_relations_.size(); ++i) seen_rows_.emplace(seen_relations_[i], i);
    resolve_param_ids();
}

void RmpiModel::init_params(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const std::size_t d = config_.dim;
    if (config_.init == InitMode::kRandom) {
        if (seen_relations_.empty()) throw std::invalid_argument("no seen relations to embed");
        params_.add("relation_embedding", xavier(seen_relations_.size(), d, rng));
    }
    for (std::uint32_t k = 1; k <= config_.layers; ++k)
        for (std::size_t e = 0; e < kNumEdgeTypes; ++e)
            params_.add(edge_weight_name(k, static_cast<EdgeType>(e)), xavier(d, d, rng));
    if (config_.ne) {
        params_.add("disclosing", xavier(d, d, rng));
        if (config_.fusion == FusionMode::kConcat) params_.add("fusion", xavier(d, 2 * d, rng));
    }
    params_.add("scorer", xavier(1, d, rng));
    if (config_.init == InitMode::kSchema) {
        params_.add("schema_out", xavier(d, config_.schema_hidden, rng));
        params_.add("schema_in", xavier(config_.schema_hidden, config_.schema_dim, rng));
    }
}

void RmpiModel::resolve_param_ids() {
    const std::size_t d = config_.dim;
    auto get = [&](const std::string& name, std::size_t rows, std::size_t cols) {
        num::ParamId id = params_.find(name);
        const Matrix& m = params_.value(id);
        if (m.rows() != rows || m.cols() != cols)
            throw std::invalid_argument("parameter " + name + " has unexpected shape");
        return id;
    };
    if (config_.init == InitMode::kRandom)
        embedding_ = get("relation_embedding", seen_relations_.size(), d);
    edge_weights_.clear();
    for (std::uint32_t k = 1; k <= config_.layers; ++k)
        for (std::size_t e = 0; e < kNumEdgeTypes; ++e)
            edge_weights_.push_back(get(edge_weight_name(k, static_cast<EdgeType>(e)), d, d));
    if (config_.ne) {
        disclosing_ = get("disclosing", d, d);
        if (config_.fusion == FusionMode::kConcat) fusion_ = get("fusion", d, 2 * d);
    }
    scorer_ = get("scorer", 1, d);
    if (config_.init == InitMode::kSchema) {
        schema_out_ = get("schema_out", d, config_.schema_hidden);
        schema_in_ = get("schema_in", config_.schema_hidden, config_.schema_dim);
    }
}

num::ParamId RmpiModel::edge_weight(std::uint32_t layer, EdgeType type) const {
    if (layer < 1 || layer > config_.layers) throw std::out_of_range("layer out of range");
    return edge_weights_.at((layer - 1) * kNumEdgeTypes + static_cast<std::size_t>(type));
}

std::vector<double> RmpiModel::unseen_vector(const std::string& name) const {
    std::mt19937_64 rng(unseen_seed_ ^ fnv1a(name));
    const double b = xavier_bound(std::max<std::size_t>(seen_relations_.size(), 1), config_.dim);
    std::uniform_real_distribution<double> dist(-b, b);
    std::vector<double> v(config_.dim);
    for (double& x : v) x = dist(rng);
    return v;
}

void RmpiModel::bind(const Vocabulary& vocab, const SchemaVectors* schema) {
    if (config_.init == InitMode::kSchema && !schema)
        throw DataError("schema vectors are required in schema init mode");
    if (schema && config_.init == InitMode::kSchema && schema->dim != config_.schema_dim)
        throw DataError("schema vector dimension does not match the model");
    binding_.clear();
    binding_.resize(vocab.num_relations());
    for (RelationId r = 0; r < vocab.num_relations(); ++r) {
        RelationSource& src = binding_[r];
        src.name = vocab.relation_name(r);
        if (config_.init == InitMode::kSchema) {
            if (const auto* v = schema->find(src.name))
                src.vector = *v;
            else
                src.missing_schema = true;
        } else if (auto it = seen_rows_.find(src.name); it != seen_rows_.end()) {
            src.row = static_cast<std::int64_t>(it->second);
        } else {
            src.vector = unseen_vector(src.name);
        }
    }
}

Var RmpiModel::initial_feature(Tape& tape, RelationId relation, FeatureCache& cache) const {
    if (auto it = cache.find(relation); it != cache.end()) return it->second;
    if (relation >= binding_.size())
        throw std::logic_error("relation " + std::to_string(relation) + " is not bound");
    const RelationSource& src = binding_[relation];
    Var h;
    if (config_.init == InitMode::kSchema) {
        if (src.missing_schema) throw DataError("no schema vector for relation '" + src.name + "'");
        Var onto = tape.constant(src.vector);
        h = tape.matvec(tape.param(*schema_out_), tape.matvec(tape.param(*schema_in_), onto));
    } else if (src.row >= 0) {
        h = tape.param_row(*embedding_, static_cast<std::size_t>(src.row));
    } else {
        h = tape.constant(src.vector);
    }
    cache.emplace(relation, h);
    return h;
}

NodeFeatures RmpiModel::initial_features(Tape& tape, const RelationViewGraph& rvg,
                                         FeatureCache& cache) const {
    NodeFeatures out(rvg.num_nodes());
    for (std::uint32_t i = 0; i < rvg.num_nodes(); ++i) out[i] = initial_feature(tape, rvg.label(i), cache);
    return out;
}

Var RmpiModel::aggregate_into(Tape& tape, std::span<const TypedEdge> edges,
                              const NodeFeatures& previous, std::uint32_t layer, bool attention,
                              Var target_feature, EdgeDropout* dropout,
                              std::unordered_map<std::uint32_t, Var>& score_memo,
                              AttentionTrace* trace) const {
    std::array<std::vector<std::uint32_t>, kNumEdgeTypes> groups;
    for (const auto& e : edges) {
        if (dropout && !dropout->keep()) continue;
        if (e.src >= previous.size() || !previous[e.src].valid())
            throw std::logic_error("missing feature for neighbor node " + std::to_string(e.src) +
                                   " at layer " + std::to_string(layer));
        groups[static_cast<std::size_t>(e.type)].push_back(e.src);
    }

    std::vector<Var> messages;
    for (std::size_t type = 0; type < kNumEdgeTypes; ++type) {
        const auto& srcs = groups[type];
        if (srcs.empty()) continue;
        std::vector<Var> feats;
        feats.reserve(srcs.size());
        for (std::uint32_t s : srcs) feats.push_back(previous[s]);

        Var agg;
        if (attention) {
            std::vector<Var> scores;
            scores.reserve(srcs.size());
            for (std::uint32_t s : srcs) {
                auto it = score_memo.find(s);
                if (it == score_memo.end())
                    it = score_memo
                             .emplace(s, tape.leaky_relu(tape.dot(target_feature, previous[s]),
                                                         config_.leaky_slope))
                             .first;
                scores.push_back(it->second);
            }
            Var alpha = tape.softmax(tape.concat(scores));
            if (trace) trace->groups.push_back(tape.value(alpha));
            agg = tape.weighted_sum(feats, alpha);
        } else {
            agg = feats.size() == 1 ? feats[0] : tape.sum(feats);
        }
        if (dropout && dropout->rate() > 0.0) agg = tape.scale(agg, dropout->scale());
        messages.push_back(tape.matvec(tape.param(edge_weight(layer, static_cast<EdgeType>(type))), agg));
    }
    if (messages.empty()) return Var{};
    return tape.relu(messages.size() == 1 ? messages[0] : tape.sum(messages));
}

namespace {

// Consecutive runs of edges sharing a destination.
template <typename Fn>
void for_each_destination(const std::vector<TypedEdge>& edges, Fn&& fn) {
    std::size_t begin = 0;
    while (begin < edges.size()) {
        std::size_t end = begin + 1;
        while (end < edges.size() && edges[end].dst == edges[begin].dst) ++end;
        fn(edges[begin].dst, std::span<const TypedEdge>(edges.data() + begin, end - begin));
        begin = end;
    }
}

}  // namespace

NodeFeatures RmpiModel::message_layer(Tape& tape, const PrunedNeighborhood& pruned,
                                      const NodeFeatures& previous, std::uint32_t layer,
                                      EdgeDropout* dropout, AttentionTrace* trace) const {
    if (layer < 1 || layer >= pruned.depth || layer > pruned.update_sets.size())
        throw std::out_of_range("message_layer: layer outside the schedule");
    const auto& update = pruned.update_sets[layer - 1];
    const auto& edges = pruned.layer_edges[layer - 1];
    if (pruned.target >= previous.size() || !previous[pruned.target].valid())
        throw std::logic_error("missing target feature");
    const Var target_feature = previous[pruned.target];

    std::unordered_map<std::uint32_t, std::span<const TypedEdge>> incoming;
    for_each_destination(edges, [&](std::uint32_t dst, std::span<const TypedEdge> run) {
        if (!incoming.emplace(dst, run).second)
            throw std::logic_error("layer edges are not grouped by destination");
    });

    std::unordered_map<std::uint32_t, Var> score_memo;
    NodeFeatures next(previous.size());
    for (std::uint32_t node : update) {
        if (node >= previous.size() || !previous[node].valid())
            throw std::logic_error("missing feature for updated node " + std::to_string(node));
        auto it = incoming.find(node);
        Var agg;
        if (it != incoming.end())
            agg = aggregate_into(tape, it->second, previous, layer, config_.ta, target_feature,
                                 dropout, score_memo, trace);
        next[node] = agg.valid() ? tape.add(agg, previous[node]) : previous[node];
    }
    return next;
}

Var RmpiModel::final_layer(Tape& tape, const PrunedNeighborhood& pruned,
                           const NodeFeatures& previous, EdgeDropout* dropout) const {
    if (pruned.depth < 1 || pruned.layer_edges.size() != pruned.depth)
        throw std::logic_error("final_layer: malformed schedule");
    if (pruned.target >= previous.size() || !previous[pruned.target].valid())
        throw std::logic_error("missing target feature");
    std::vector<TypedEdge> into_target;
    for (const auto& e : pruned.layer_edges.back())
        if (e.dst == pruned.target) into_target.push_back(e);
    std::unordered_map<std::uint32_t, Var> unused;
    Var agg = aggregate_into(tape, into_target, previous, pruned.depth, false, Var{}, dropout,
                             unused, nullptr);
    return agg.valid() ? tape.add(agg, previous[pruned.target]) : previous[pruned.target];
}

Var RmpiModel::disclosing_aggregate(Tape& tape, const DisclosingNeighborhood& neighborhood,
                                    RelationId target_relation, FeatureCache& cache,
                                    AttentionTrace* trace) const {
    if (!disclosing_) throw std::logic_error("disclosing branch is disabled");
    if (neighborhood.labels.empty()) return tape.zeros(config_.dim);
    Var w = tape.param(*disclosing_);
    Var target = tape.matvec(w, initial_feature(tape, target_relation, cache));
    std::unordered_map<RelationId, std::pair<Var, Var>> projected;  // label -> (W h, score)
    std::vector<Var> feats;
    std::vector<Var> scores;
    for (RelationId label : neighborhood.labels) {
        auto it = projected.find(label);
        if (it == projected.end()) {
            Var z = tape.matvec(w, initial_feature(tape, label, cache));
            Var s = tape.leaky_relu(tape.dot(target, z), config_.leaky_slope);
            it = projected.emplace(label, std::make_pair(z, s)).first;
        }
        feats.push_back(it->second.first);
        scores.push_back(it->second.second);
    }
    Var alpha = tape.softmax(tape.concat(scores));
    if (trace) trace->groups.push_back(tape.value(alpha));
    return tape.relu(tape.weighted_sum(feats, alpha));
}

Var RmpiModel::score(Tape& tape, Var target_repr, std::optional<Var> disclosing) const {
    if (config_.ne != disclosing.has_value())
        throw std::logic_error("disclosing vector must be provided iff NE is enabled");
    Var fused = target_repr;
    if (disclosing) {
        if (config_.fusion == FusionMode::kSum) {
            fused = tape.add(target_repr, *disclosing);
        } else {
            std::array<Var, 2> parts{target_repr, *disclosing};
            fused = tape.matvec(tape.param(*fusion_), tape.concat(parts));
        }
    }
    return tape.element(tape.matvec(tape.param(scorer_), fused), 0);
}

Var RmpiModel::represent(Tape& tape, const RelationViewGraph& rvg,
                         const PrunedNeighborhood& schedule, FeatureCache& cache,
                         EdgeDropout* dropout, AttentionTrace* trace) const {
    if (schedule.depth != config_.layers)
        throw std::logic_error("schedule depth does not match the model");
    NodeFeatures h = initial_features(tape, rvg, cache);
    for (std::uint32_t k = 1; k < config_.layers; ++k)
        h = message_layer(tape, schedule, h, k, dropout, trace);
    return final_layer(tape, schedule, h, dropout);
}

Var RmpiModel::forward(Tape& tape, const SampleGraph& sample, EdgeDropout* dropout,
                       AttentionTrace* trace) const {
    FeatureCache cache;
    Var repr = represent(tape, sample.enclosing, sample.pruned, cache, dropout, trace);
    std::optional<Var> hd;
    if (config_.ne)
        hd = disclosing_aggregate(tape, sample.disclosing, sample.target.relation, cache, trace);
    return score(tape, repr, hd);
}

double RmpiModel::score_sample(const SampleGraph& sample) const {
    Tape tape(params_);
    return tape.scalar(forward(tape, sample));
}

}  // namespace rmpi
