#include "rmpi/kgstore.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <limits>

namespace rmpi {

EntityId Vocabulary::intern_entity(std::string_view name) {
    auto [it, inserted] = entity_ids_.try_emplace(std::string(name),
                                                  static_cast<EntityId>(entity_names_.size()));
    if (inserted) entity_names_.emplace_back(name);
    return it->second;
}

RelationId Vocabulary::intern_relation(std::string_view name) {
    auto [it, inserted] = relation_ids_.try_emplace(
        std::string(name), static_cast<RelationId>(relation_names_.size()));
    if (inserted) {
        relation_names_.emplace_back(name);
        seen_.push_back(false);
    }
    return it->second;
}

EntityId Vocabulary::entity_id(std::string_view name) const {
    auto it = entity_ids_.find(std::string(name));
    if (it == entity_ids_.end()) throw DataError("unknown entity '" + std::string(name) + "'");
    return it->second;
}

RelationId Vocabulary::relation_id(std::string_view name) const {
    auto it = relation_ids_.find(std::string(name));
    if (it == relation_ids_.end()) throw DataError("unknown relation '" + std::string(name) + "'");
    return it->second;
}

bool Vocabulary::has_entity(std::string_view name) const {
    return entity_ids_.contains(std::string(name));
}

bool Vocabulary::has_relation(std::string_view name) const {
    return relation_ids_.contains(std::string(name));
}

std::vector<RelationId> Vocabulary::seen_relations() const {
    std::vector<RelationId> out;
    for (RelationId r = 0; r < seen_.size(); ++r)
        if (seen_[r]) out.push_back(r);
    return out;
}

std::vector<RelationId> Vocabulary::unseen_relations() const {
    std::vector<RelationId> out;
    for (RelationId r = 0; r < seen_.size(); ++r)
        if (!seen_[r]) out.push_back(r);
    return out;
}

KnowledgeGraph::KnowledgeGraph(TripleList triples, std::size_t id_space)
    : triples_(std::move(triples)), out_(id_space), in_(id_space) {
    if (triples_.size() > std::numeric_limits<std::uint32_t>::max())
        throw DataError("graph too large");
    std::vector<bool> present(id_space, false);
    index_.reserve(triples_.size());
    for (std::uint32_t i = 0; i < triples_.size(); ++i) {
        const Triple& t = triples_[i];
        if (t.head >= id_space || t.tail >= id_space)
            throw DataError("triple references entity outside the id space");
        out_[t.head].push_back({t.relation, t.tail, i});
        in_[t.tail].push_back({t.relation, t.head, i});
        present[t.head] = true;
        present[t.tail] = true;
        index_.insert(t);
    }
    for (EntityId e = 0; e < id_space; ++e)
        if (present[e]) entities_.push_back(e);
}

bool KnowledgeGraph::has_entity(EntityId e) const {
    return std::binary_search(entities_.begin(), entities_.end(), e);
}

std::vector<RelationId> KnowledgeGraph::relations() const {
    std::vector<RelationId> rels;
    rels.reserve(triples_.size());
    for (const auto& t : triples_) rels.push_back(t.relation);
    std::sort(rels.begin(), rels.end());
    rels.erase(std::unique(rels.begin(), rels.end()), rels.end());
    return rels;
}

TripleList read_triples(const std::filesystem::path& file, Vocabulary& vocab) {
    std::ifstream in(file);
    if (!in) throw DataError("cannot open triple file " + file.string());
    TripleList triples;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::string_view view(line);
        auto first = view.find('\t');
        auto second = first == std::string_view::npos ? first : view.find('\t', first + 1);
        if (second == std::string_view::npos || view.find('\t', second + 1) != std::string_view::npos)
            throw DataError(file.string() + ":" + std::to_string(line_no) +
                            ": expected head<TAB>relation<TAB>tail");
        auto head = view.substr(0, first);
        auto rel = view.substr(first + 1, second - first - 1);
        auto tail = view.substr(second + 1);
        if (head.empty() || rel.empty() || tail.empty())
            throw DataError(file.string() + ":" + std::to_string(line_no) + ": empty field");
        Triple t;
        t.head = vocab.intern_entity(head);
        t.relation = vocab.intern_relation(rel);
        t.tail = vocab.intern_entity(tail);
        triples.push_back(t);
    }
    return triples;
}

void write_triples(const std::filesystem::path& file, const TripleList& triples,
                   const Vocabulary& vocab) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw DataError("cannot write " + file.string());
    for (const auto& t : triples)
        out << vocab.entity_name(t.head) << '\t' << vocab.relation_name(t.relation) << '\t'
            << vocab.entity_name(t.tail) << '\n';
    if (!out) throw DataError("write failed for " + file.string());
}

Benchmark load_benchmark(const std::filesystem::path& dir) {
    for (const char* name : {"train.txt", "valid.txt", "test_graph.txt", "test.txt"})
        if (!std::filesystem::is_regular_file(dir / name))
            throw DataError("missing benchmark file " + (dir / name).string());

    Benchmark bench;
    TripleList train = read_triples(dir / "train.txt", bench.vocab);
    if (train.empty()) throw DataError("empty training file " + (dir / "train.txt").string());
    for (const auto& t : train) bench.vocab.set_seen(t.relation, true);

    bench.valid = read_triples(dir / "valid.txt", bench.vocab);
    TripleList test_graph = read_triples(dir / "test_graph.txt", bench.vocab);
    bench.test_targets = read_triples(dir / "test.txt", bench.vocab);

    const std::size_t ids = bench.vocab.num_entities();
    bench.train = KnowledgeGraph(std::move(train), ids);
    bench.test_graph = KnowledgeGraph(std::move(test_graph), ids);
    return bench;
}

std::unordered_map<EntityId, std::uint32_t> khop_neighbors(const KnowledgeGraph& graph,
                                                           EntityId center, std::uint32_t k) {
    if (center >= graph.id_space()) throw DataError("unknown entity id " + std::to_string(center));
    std::unordered_map<EntityId, std::uint32_t> dist;
    dist.emplace(center, 0);
    std::deque<EntityId> queue{center};
    while (!queue.empty()) {
        EntityId e = queue.front();
        queue.pop_front();
        std::uint32_t d = dist[e];
        if (d == k) continue;
        auto visit = [&](const std::vector<AdjacencyEntry>& edges) {
            for (const auto& a : edges)
                if (dist.emplace(a.neighbor, d + 1).second) queue.push_back(a.neighbor);
        };
        visit(graph.out_edges(e));
        visit(graph.in_edges(e));
    }
    return dist;
}

}  // namespace rmpi
