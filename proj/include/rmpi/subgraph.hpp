#pragma once
// Subgraph extraction around a target triple and the relation-view
// (line-graph) transform used for relational message passing.

#include "rmpi/kgstore.hpp"

#include <array>
#include <iosfwd>
#include <optional>
#include <string_view>
#include <vector>

namespace rmpi {

enum class SubgraphKind { kEnclosing, kDisclosing };

// Marks the injected target edge in TripleInstance::source.
inline constexpr std::uint32_t kInjectedTarget = 0xFFFFFFFFu;

struct TripleInstance {
    Triple triple;
    std::uint32_t source = kInjectedTarget;  // index into the parent graph
};

// Instance 0 is always the injected target edge.
struct EntitySubgraph {
    std::vector<EntityId> entities;  // ascending
    std::vector<TripleInstance> instances;
    Triple target;
    SubgraphKind kind = SubgraphKind::kEnclosing;

    static constexpr std::uint32_t kTargetInstance = 0;
};

enum class EdgeType : std::uint8_t { kHH = 0, kHT, kTH, kTT, kPara, kLoop };
inline constexpr std::size_t kNumEdgeTypes = 6;

std::string_view edge_type_name(EdgeType type);
std::optional<EdgeType> parse_edge_type(std::string_view name);

struct TypedEdge {
    std::uint32_t src;
    EdgeType type;
    std::uint32_t dst;

    friend bool operator==(const TypedEdge&, const TypedEdge&) = default;
    friend auto operator<=>(const TypedEdge&, const TypedEdge&) = default;
};

struct RelationViewOptions {
    // PARA suppresses H-H/T-T and LOOP suppresses T-H/H-T on the same
    // ordered pair. Off emits every matching pattern.
    bool suppress_basic_types = true;
};

// Edge types n1 -> n2 for two triple instances (h1,t1) and (h2,t2).
// Empty when they share no entity.
std::vector<EdgeType> classify_pair(const Triple& n1, const Triple& n2,
                                    const RelationViewOptions& options = {});

class RelationViewGraph {
public:
    RelationViewGraph() = default;
    RelationViewGraph(std::vector<Triple> nodes, std::vector<TypedEdge> edges,
                      std::uint32_t target);

    std::size_t num_nodes() const { return nodes_.size(); }
    const std::vector<Triple>& nodes() const { return nodes_; }
    RelationId label(std::uint32_t node) const { return nodes_.at(node).relation; }
    std::uint32_t target() const { return target_; }

    // Sorted by (src, type, dst).
    const std::vector<TypedEdge>& edges() const { return edges_; }
    // Edges whose dst is the given node, sorted by (src, type).
    const std::vector<TypedEdge>& incoming(std::uint32_t node) const { return incoming_.at(node); }

private:
    std::vector<Triple> nodes_;
    std::vector<TypedEdge> edges_;
    std::vector<std::vector<TypedEdge>> incoming_;
    std::uint32_t target_ = 0;
};

// Message-passing schedule rooted at the target node.
//
// frontiers[k] is N^k (N^0 = {target}); frontiers may overlap since
// reciprocal edges lead back toward the root. For layer k (1-based),
// update_sets[k-1] holds N^{<=K-k} and layer_edges[k-1] every edge whose
// destination lies in that set.
struct PrunedNeighborhood {
    std::uint32_t target = 0;
    std::uint32_t depth = 0;
    std::vector<std::vector<std::uint32_t>> frontiers;
    std::vector<std::vector<std::uint32_t>> update_sets;
    std::vector<std::vector<TypedEdge>> layer_edges;
};

struct DisclosingNeighborhood {
    std::vector<std::uint32_t> nodes;
    std::vector<RelationId> labels;
};

EntitySubgraph extract_enclosing(const KnowledgeGraph& graph, const Triple& target,
                                 std::uint32_t k);
EntitySubgraph extract_disclosing(const KnowledgeGraph& graph, const Triple& target,
                                  std::uint32_t k);

RelationViewGraph to_relation_view(const EntitySubgraph& sub,
                                   const RelationViewOptions& options = {});

PrunedNeighborhood prune_to_target(const RelationViewGraph& rvg, std::uint32_t depth);

// Reference schedule that updates every node at every layer over all
// edges. Produces the same target representation as prune_to_target.
PrunedNeighborhood full_schedule(const RelationViewGraph& rvg, std::uint32_t depth);

DisclosingNeighborhood disclosing_one_hop(const RelationViewGraph& rvg);

// Same neighbor multiset as disclosing_one_hop over the full disclosing
// relation view, without materializing it: only triples touching the
// target's endpoints can share an entity with the target. Node indexes
// refer to the instance list of that reduced subgraph.
DisclosingNeighborhood disclosing_neighborhood(const KnowledgeGraph& graph, const Triple& target);

// Text dump: "# nodes" table (idx, relation, head, tail) followed by
// "# edges" lines src<TAB>type<TAB>dst.
void write_relation_view(std::ostream& out, const RelationViewGraph& rvg,
                         const Vocabulary* vocab = nullptr);

}  // namespace rmpi
