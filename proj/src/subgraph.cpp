#include "rmpi/subgraph.hpp"

#include <algorithm>
#include <deque>
#include <ostream>
#include <unordered_set>

namespace rmpi {

namespace {

constexpr std::array<std::string_view, kNumEdgeTypes> kEdgeTypeNames = {
    "H-H", "H-T", "T-H", "T-T", "PARA", "LOOP"};

void check_entity(const KnowledgeGraph& graph, EntityId e) {
    if (e >= graph.id_space()) throw DataError("unknown entity id " + std::to_string(e));
}

// Triples of the graph with both endpoints in `members`, excluding exact
// copies of the target (the target is injected separately).
std::vector<TripleInstance> induced_instances(const KnowledgeGraph& graph,
                                              const std::vector<EntityId>& members,
                                              const std::unordered_set<EntityId>& member_set,
                                              const Triple& target) {
    std::vector<TripleInstance> out;
    for (EntityId e : members)
        for (const auto& a : graph.out_edges(e)) {
            if (!member_set.contains(a.neighbor)) continue;
            const Triple& t = graph.triples()[a.triple_index];
            if (t == target) continue;
            out.push_back({t, a.triple_index});
        }
    std::sort(out.begin(), out.end(),
              [](const TripleInstance& a, const TripleInstance& b) { return a.source < b.source; });
    return out;
}

// Undirected BFS over instance list, capped at `limit` hops.
std::unordered_map<EntityId, std::uint32_t> local_distances(
    const std::vector<TripleInstance>& instances, EntityId center, std::uint32_t limit) {
    std::unordered_map<EntityId, std::vector<EntityId>> adj;
    for (const auto& inst : instances) {
        adj[inst.triple.head].push_back(inst.triple.tail);
        adj[inst.triple.tail].push_back(inst.triple.head);
    }
    std::unordered_map<EntityId, std::uint32_t> dist{{center, 0}};
    std::deque<EntityId> queue{center};
    while (!queue.empty()) {
        EntityId e = queue.front();
        queue.pop_front();
        std::uint32_t d = dist[e];
        if (d == limit) continue;
        auto it = adj.find(e);
        if (it == adj.end()) continue;
        for (EntityId n : it->second)
            if (dist.emplace(n, d + 1).second) queue.push_back(n);
    }
    return dist;
}

EntitySubgraph assemble(std::vector<EntityId> members, std::vector<TripleInstance> instances,
                        const Triple& target, SubgraphKind kind) {
    EntitySubgraph sub;
    sub.entities = std::move(members);
    std::sort(sub.entities.begin(), sub.entities.end());
    sub.target = target;
    sub.kind = kind;
    sub.instances.reserve(instances.size() + 1);
    sub.instances.push_back({target, kInjectedTarget});
    sub.instances.insert(sub.instances.end(), instances.begin(), instances.end());
    return sub;
}

}  // namespace

std::string_view edge_type_name(EdgeType type) {
    return kEdgeTypeNames.at(static_cast<std::size_t>(type));
}

std::optional<EdgeType> parse_edge_type(std::string_view name) {
    for (std::size_t i = 0; i < kEdgeTypeNames.size(); ++i)
        if (kEdgeTypeNames[i] == name) return static_cast<EdgeType>(i);
    return std::nullopt;
}

std::vector<EdgeType> classify_pair(const Triple& n1, const Triple& n2,
                                    const RelationViewOptions& options) {
    const bool hh = n1.head == n2.head;
    const bool tt = n1.tail == n2.tail;
    const bool th = n1.tail == n2.head;
    const bool ht = n1.head == n2.tail;
    const bool para = hh && tt;
    const bool loop = th && ht;
    const bool hide_para = options.suppress_basic_types && para;
    const bool hide_loop = options.suppress_basic_types && loop;

    std::vector<EdgeType> types;
    if (hh && !hide_para) types.push_back(EdgeType::kHH);
    if (ht && !hide_loop) types.push_back(EdgeType::kHT);
    if (th && !hide_loop) types.push_back(EdgeType::kTH);
    if (tt && !hide_para) types.push_back(EdgeType::kTT);
    if (para) types.push_back(EdgeType::kPara);
    if (loop) types.push_back(EdgeType::kLoop);
    return types;
}

RelationViewGraph::RelationViewGraph(std::vector<Triple> nodes, std::vector<TypedEdge> edges,
                                     std::uint32_t target)
    : nodes_(std::move(nodes)), edges_(std::move(edges)), target_(target) {
    if (target_ >= nodes_.size()) throw std::invalid_argument("target node out of range");
    std::sort(edges_.begin(), edges_.end());
    incoming_.resize(nodes_.size());
    for (const auto& e : edges_) {
        if (e.src >= nodes_.size() || e.dst >= nodes_.size() || e.src == e.dst)
            throw std::invalid_argument("invalid relation-view edge");
        incoming_[e.dst].push_back(e);
    }
}

EntitySubgraph extract_enclosing(const KnowledgeGraph& graph, const Triple& target,
                                 std::uint32_t k) {
    check_entity(graph, target.head);
    check_entity(graph, target.tail);
    const EntityId u = target.head;
    const EntityId v = target.tail;

    auto du = khop_neighbors(graph, u, k);
    auto dv = khop_neighbors(graph, v, k);
    std::unordered_set<EntityId> members;
    for (const auto& [e, d] : du)
        if (dv.contains(e)) members.insert(e);
    members.insert(u);
    members.insert(v);

    // Drop entities that, inside the induced subgraph, are isolated or
    // farther than k from either endpoint; repeat until stable.
    std::vector<TripleInstance> instances;
    for (;;) {
        std::vector<EntityId> list(members.begin(), members.end());
        std::sort(list.begin(), list.end());
        instances = induced_instances(graph, list, members, target);
        auto lu = local_distances(instances, u, k);
        auto lv = local_distances(instances, v, k);
        std::unordered_set<EntityId> kept;
        for (EntityId e : list)
            if (e == u || e == v || (lu.contains(e) && lv.contains(e))) kept.insert(e);
        if (kept.size() == members.size()) break;
        members = std::move(kept);
    }
    return assemble({members.begin(), members.end()}, std::move(instances), target,
                    SubgraphKind::kEnclosing);
}

EntitySubgraph extract_disclosing(const KnowledgeGraph& graph, const Triple& target,
                                  std::uint32_t k) {
    check_entity(graph, target.head);
    check_entity(graph, target.tail);
    std::unordered_set<EntityId> members;
    for (const auto& [e, d] : khop_neighbors(graph, target.head, k)) members.insert(e);
    for (const auto& [e, d] : khop_neighbors(graph, target.tail, k)) members.insert(e);
    std::vector<EntityId> list(members.begin(), members.end());
    std::sort(list.begin(), list.end());
    auto instances = induced_instances(graph, list, members, target);
    return assemble(std::move(list), std::move(instances), target, SubgraphKind::kDisclosing);
}

RelationViewGraph to_relation_view(const EntitySubgraph& sub, const RelationViewOptions& options) {
    if (sub.instances.empty()) throw std::invalid_argument("subgraph without target instance");
    const auto n = static_cast<std::uint32_t>(sub.instances.size());
    std::vector<Triple> nodes;
    nodes.reserve(n);
    for (const auto& inst : sub.instances) nodes.push_back(inst.triple);

    std::unordered_map<EntityId, std::vector<std::uint32_t>> incident;
    for (std::uint32_t i = 0; i < n; ++i) {
        incident[nodes[i].head].push_back(i);
        if (nodes[i].tail != nodes[i].head) incident[nodes[i].tail].push_back(i);
    }

    std::vector<TypedEdge> edges;
    std::vector<std::uint32_t> stamp(n, n);
    for (std::uint32_t dst = 0; dst < n; ++dst) {
        stamp[dst] = dst;
        for (EntityId shared : {nodes[dst].head, nodes[dst].tail})
            for (std::uint32_t src : incident[shared]) {
                if (stamp[src] == dst) continue;
                stamp[src] = dst;
                for (EdgeType type : classify_pair(nodes[src], nodes[dst], options))
                    edges.push_back({src, type, dst});
            }
    }
    return RelationViewGraph(std::move(nodes), std::move(edges),
                             EntitySubgraph::kTargetInstance);
}

PrunedNeighborhood prune_to_target(const RelationViewGraph& rvg, std::uint32_t depth) {
    PrunedNeighborhood p;
    p.target = rvg.target();
    p.depth = depth;
    p.frontiers.push_back({rvg.target()});
    for (std::uint32_t k = 1; k <= depth; ++k) {
        std::vector<std::uint32_t> next;
        for (std::uint32_t node : p.frontiers.back())
            for (const auto& e : rvg.incoming(node)) next.push_back(e.src);
        std::sort(next.begin(), next.end());
        next.erase(std::unique(next.begin(), next.end()), next.end());
        p.frontiers.push_back(std::move(next));
    }

    for (std::uint32_t k = 1; k <= depth; ++k) {
        std::vector<std::uint32_t> update;
        for (std::uint32_t j = 0; j <= depth - k; ++j)
            update.insert(update.end(), p.frontiers[j].begin(), p.frontiers[j].end());
        std::sort(update.begin(), update.end());
        update.erase(std::unique(update.begin(), update.end()), update.end());
        std::vector<TypedEdge> edges;
        for (std::uint32_t node : update)
            edges.insert(edges.end(), rvg.incoming(node).begin(), rvg.incoming(node).end());
        p.update_sets.push_back(std::move(update));
        p.layer_edges.push_back(std::move(edges));
    }
    return p;
}

PrunedNeighborhood full_schedule(const RelationViewGraph& rvg, std::uint32_t depth) {
    PrunedNeighborhood p;
    p.target = rvg.target();
    p.depth = depth;
    std::vector<std::uint32_t> all(rvg.num_nodes());
    for (std::uint32_t i = 0; i < all.size(); ++i) all[i] = i;
    p.frontiers.push_back({rvg.target()});
    for (std::uint32_t k = 1; k <= depth; ++k) p.frontiers.push_back(all);
    for (std::uint32_t k = 1; k <= depth; ++k) {
        if (k < depth) {
            std::vector<TypedEdge> edges;
            for (std::uint32_t node : all)
                edges.insert(edges.end(), rvg.incoming(node).begin(), rvg.incoming(node).end());
            p.update_sets.push_back(all);
            p.layer_edges.push_back(std::move(edges));
        } else {
            p.update_sets.push_back({rvg.target()});
            p.layer_edges.push_back(rvg.incoming(rvg.target()));
        }
    }
    return p;
}

DisclosingNeighborhood disclosing_one_hop(const RelationViewGraph& rvg) {
    std::vector<std::uint32_t> nodes;
    for (const auto& e : rvg.incoming(rvg.target())) nodes.push_back(e.src);
    std::sort(nodes.begin(), nodes.end());
    nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
    DisclosingNeighborhood out;
    out.nodes = nodes;
    for (std::uint32_t n : nodes) out.labels.push_back(rvg.label(n));
    return out;
}

DisclosingNeighborhood disclosing_neighborhood(const KnowledgeGraph& graph, const Triple& target) {
    check_entity(graph, target.head);
    check_entity(graph, target.tail);
    std::vector<std::uint32_t> sources;
    for (EntityId e : {target.head, target.tail}) {
        for (const auto& a : graph.out_edges(e)) sources.push_back(a.triple_index);
        for (const auto& a : graph.in_edges(e)) sources.push_back(a.triple_index);
    }
    std::sort(sources.begin(), sources.end());
    sources.erase(std::unique(sources.begin(), sources.end()), sources.end());

    DisclosingNeighborhood out;
    std::uint32_t node = 1;  // instance 0 is the target
    for (std::uint32_t s : sources) {
        const Triple& t = graph.triples()[s];
        if (t == target) continue;
        out.nodes.push_back(node++);
        out.labels.push_back(t.relation);
    }
    return out;
}

void write_relation_view(std::ostream& out, const RelationViewGraph& rvg, const Vocabulary* vocab) {
    out << "# nodes\t" << rvg.num_nodes() << "\ttarget\t" << rvg.target() << '\n';
    for (std::uint32_t i = 0; i < rvg.num_nodes(); ++i) {
        const Triple& t = rvg.nodes()[i];
        out << i << '\t';
        if (vocab)
            out << vocab->relation_name(t.relation) << '\t' << vocab->entity_name(t.head) << '\t'
                << vocab->entity_name(t.tail);
        else
            out << t.relation << '\t' << t.head << '\t' << t.tail;
        out << '\n';
    }
    out << "# edges\t" << rvg.edges().size() << '\n';
    for (const auto& e : rvg.edges())
        out << e.src << '\t' << edge_type_name(e.type) << '\t' << e.dst << '\n';
}

}  // namespace rmpi
