#pragma once
// Knowledge-graph storage: integer-coded triples, vocabularies and
// adjacency indexes over a benchmark directory.
//
// Benchmark directory layout (tab-separated, one triple per line):
//   train.txt       training-graph triples
//   valid.txt       held-out validation targets (training graph)
//   test_graph.txt  testing-graph support triples
//   test.txt        testing targets

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace rmpi {

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;

// Raised for anything wrong with input data: missing files, malformed
// lines, unknown ids. The CLI maps it to exit code 2.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Triple {
    EntityId head = 0;
    RelationId relation = 0;
    EntityId tail = 0;

    friend bool operator==(const Triple&, const Triple&) = default;
    friend auto operator<=>(const Triple&, const Triple&) = default;
};

struct TripleHash {
    std::size_t operator()(const Triple& t) const noexcept {
        std::uint64_t h = (std::uint64_t{t.head} << 32) ^ t.tail;
        h ^= std::uint64_t{t.relation} * 0x9E3779B97F4A7C15ULL;
        h ^= h >> 29;
        return static_cast<std::size_t>(h * 0xBF58476D1CE4E5B9ULL);
    }
};

using TripleList = std::vector<Triple>;

class Vocabulary {
public:
    EntityId intern_entity(std::string_view name);
    RelationId intern_relation(std::string_view name);

    EntityId entity_id(std::string_view name) const;      // throws DataError
    RelationId relation_id(std::string_view name) const;  // throws DataError
    bool has_entity(std::string_view name) const;
    bool has_relation(std::string_view name) const;

    const std::string& entity_name(EntityId id) const { return entity_names_.at(id); }
    const std::string& relation_name(RelationId id) const { return relation_names_.at(id); }

    std::size_t num_entities() const { return entity_names_.size(); }
    std::size_t num_relations() const { return relation_names_.size(); }

    const std::vector<std::string>& entity_names() const { return entity_names_; }
    const std::vector<std::string>& relation_names() const { return relation_names_; }

    // Seen = occurs in the training graph.
    bool is_seen(RelationId id) const { return seen_.at(id); }
    void set_seen(RelationId id, bool seen) { seen_.at(id) = seen; }
    std::vector<RelationId> seen_relations() const;
    std::vector<RelationId> unseen_relations() const;

private:
    std::vector<std::string> entity_names_;
    std::vector<std::string> relation_names_;
    std::unordered_map<std::string, EntityId> entity_ids_;
    std::unordered_map<std::string, RelationId> relation_ids_;
    std::vector<bool> seen_;
};

struct AdjacencyEntry {
    RelationId relation;
    EntityId neighbor;
    std::uint32_t triple_index;
};

// Immutable after construction. Adjacency vectors are sized to the id
// space passed in (the shared vocabulary), so ids of entities belonging to
// other graphs simply have empty lists.
class KnowledgeGraph {
public:
    KnowledgeGraph() = default;
    KnowledgeGraph(TripleList triples, std::size_t id_space);

    const TripleList& triples() const { return triples_; }
    std::size_t size() const { return triples_.size(); }
    std::size_t id_space() const { return out_.size(); }

    const std::vector<AdjacencyEntry>& out_edges(EntityId e) const { return out_.at(e); }
    const std::vector<AdjacencyEntry>& in_edges(EntityId e) const { return in_.at(e); }

    // Entities that occur in at least one triple, ascending.
    const std::vector<EntityId>& entities() const { return entities_; }
    bool has_entity(EntityId e) const;
    bool contains(const Triple& t) const { return index_.contains(t); }

    // Relations that occur in at least one triple, ascending.
    std::vector<RelationId> relations() const;

private:
    TripleList triples_;
    std::vector<std::vector<AdjacencyEntry>> out_;
    std::vector<std::vector<AdjacencyEntry>> in_;
    std::vector<EntityId> entities_;
    std::unordered_set<Triple, TripleHash> index_;
};

struct Benchmark {
    Vocabulary vocab;
    KnowledgeGraph train;
    TripleList valid;
    KnowledgeGraph test_graph;
    TripleList test_targets;
};

Benchmark load_benchmark(const std::filesystem::path& dir);

// Reads one triple file, interning names into vocab.
TripleList read_triples(const std::filesystem::path& file, Vocabulary& vocab);
void write_triples(const std::filesystem::path& file, const TripleList& triples,
                   const Vocabulary& vocab);

// Shortest undirected hop distance from center to every entity within k hops
// (center included at distance 0).
std::unordered_map<EntityId, std::uint32_t> khop_neighbors(const KnowledgeGraph& graph,
                                                           EntityId center, std::uint32_t k);

}  // namespace rmpi
