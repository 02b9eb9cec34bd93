#pragma once
// Relational message-passing network: initial relation features, layered
// typed-edge aggregation with optional target-aware attention, the
// disclosing-neighborhood branch, fusion and the linear triple scorer.

#include "rmpi/kgstore.hpp"
#include "rmpi/numkit.hpp"
#include "rmpi/schema.hpp"
#include "rmpi/subgraph.hpp"

#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

namespace rmpi {

enum class FusionMode { kSum, kConcat };
enum class InitMode { kRandom, kSchema };

std::string_view to_string(FusionMode mode);
std::string_view to_string(InitMode mode);
FusionMode parse_fusion_mode(std::string_view text);
InitMode parse_init_mode(std::string_view text);

struct ModelConfig {
    std::uint32_t hop = 2;     // subgraph radius
    std::uint32_t layers = 2;  // message-passing depth
    std::size_t dim = 32;
    double dropout = 0.5;
    double leaky_slope = 0.2;
    bool ne = false;  // disclosing-neighborhood branch
    bool ta = false;  // target-aware attention
    FusionMode fusion = FusionMode::kSum;
    InitMode init = InitMode::kRandom;
    std::size_t schema_hidden = 128;
    std::size_t schema_dim = 300;
    bool suppress_basic_types = true;

    void validate() const;  // throws std::invalid_argument
};

// Everything the model reads for one target triple.
struct SampleGraph {
    Triple target;
    RelationViewGraph enclosing;
    PrunedNeighborhood pruned;
    DisclosingNeighborhood disclosing;  // filled only when NE is on
};

SampleGraph build_sample(const KnowledgeGraph& graph, const Triple& target,
                         const ModelConfig& config);

// Independent keep/drop draws for edges, with inverted scaling of kept
// messages by 1 / (1 - rate).
class EdgeDropout {
public:
    EdgeDropout(double rate, std::uint64_t seed);
    bool keep();
    double scale() const { return 1.0 / (1.0 - rate_); }
    double rate() const { return rate_; }

private:
    double rate_;
    std::mt19937_64 rng_;
    std::bernoulli_distribution drop_;
};

// Attention weights per (aggregating node, edge type) group, in the order
// the groups were evaluated.
struct AttentionTrace {
    std::vector<std::vector<double>> groups;
};

using NodeFeatures = std::vector<num::Var>;  // invalid Var = not computed
using FeatureCache = std::unordered_map<RelationId, num::Var>;

class RmpiModel {
public:
    // Fresh parameters drawn from `seed`. `seen_relations` are the names
    // that get rows in the embedding table (RANDOM init).
    RmpiModel(ModelConfig config, std::vector<std::string> seen_relations, std::uint64_t seed);
    // Restores a model from stored parameters.
    RmpiModel(ModelConfig config, std::vector<std::string> seen_relations,
              std::uint64_t unseen_seed, num::ParamStore params);

    const ModelConfig& config() const { return config_; }
    num::ParamStore& params() { return params_; }
    const num::ParamStore& params() const { return params_; }
    const std::vector<std::string>& seen_relations() const { return seen_relations_; }
    std::uint64_t unseen_seed() const { return unseen_seed_; }

    // Resolves the initial-feature source of every relation id of `vocab`:
    // a trained embedding row, a seeded fresh draw for unseen relations,
    // or a schema vector.
    void bind(const Vocabulary& vocab, const SchemaVectors* schema = nullptr);
    bool bound() const { return !binding_.empty(); }

    num::Var initial_feature(num::Tape& tape, RelationId relation, FeatureCache& cache) const;
    NodeFeatures initial_features(num::Tape& tape, const RelationViewGraph& rvg,
                                  FeatureCache& cache) const;

    // Layer k (1-based, k < depth) over the pruned schedule.
    NodeFeatures message_layer(num::Tape& tape, const PrunedNeighborhood& pruned,
                               const NodeFeatures& previous, std::uint32_t layer,
                               EdgeDropout* dropout = nullptr,
                               AttentionTrace* trace = nullptr) const;
    // Last layer: equal aggregation into the target only.
    num::Var final_layer(num::Tape& tape, const PrunedNeighborhood& pruned,
                         const NodeFeatures& previous, EdgeDropout* dropout = nullptr) const;
    num::Var disclosing_aggregate(num::Tape& tape, const DisclosingNeighborhood& neighborhood,
                                  RelationId target_relation, FeatureCache& cache,
                                  AttentionTrace* trace = nullptr) const;
    num::Var score(num::Tape& tape, num::Var target_repr,
                   std::optional<num::Var> disclosing) const;

    // Target representation after all layers.
    num::Var represent(num::Tape& tape, const RelationViewGraph& rvg,
                       const PrunedNeighborhood& schedule, FeatureCache& cache,
                       EdgeDropout* dropout = nullptr, AttentionTrace* trace = nullptr) const;
    num::Var forward(num::Tape& tape, const SampleGraph& sample, EdgeDropout* dropout = nullptr,
                     AttentionTrace* trace = nullptr) const;
    double score_sample(const SampleGraph& sample) const;

    num::ParamId edge_weight(std::uint32_t layer, EdgeType type) const;

private:
    struct RelationSource {
        std::int64_t row = -1;                    // embedding row, RANDOM + seen
        std::vector<double> vector;               // fresh draw or schema vector
        bool missing_schema = false;
        std::string name;
    };

    void init_params(std::uint64_t seed);
    void resolve_param_ids();
    std::vector<double> unseen_vector(const std::string& name) const;
    num::Var aggregate_into(num::Tape& tape, std::span<const TypedEdge> edges,
                            const NodeFeatures& previous, std::uint32_t layer, bool attention,
                            num::Var target_feature, EdgeDropout* dropout,
                            std::unordered_map<std::uint32_t, num::Var>& score_memo,
                            AttentionTrace* trace) const;

    ModelConfig config_;
    std::vector<std::string> seen_relations_;
    std::unordered_map<std::string, std::size_t> seen_rows_;
    std::uint64_t unseen_seed_ = 0;
    num::ParamStore params_;
    std::vector<RelationSource> binding_;

    std::optional<num::ParamId> embedding_;
    std::vector<num::ParamId> edge_weights_;  // layer-major, kNumEdgeTypes per layer
    std::optional<num::ParamId> disclosing_;
    std::optional<num::ParamId> fusion_;
    num::ParamId scorer_;
    std::optional<num::ParamId> schema_out_;  // W_1: dim x hidden
    std::optional<num::ParamId> schema_in_;   // W_2: hidden x schema_dim
};

// Parameter names used by the model and the checkpoint format.
std::string edge_weight_name(std::uint32_t layer, EdgeType type);

}  // namespace rmpi
