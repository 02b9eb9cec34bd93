#pragma once
// Ontological schema graphs (RDFS vocabulary subset) and translational
// pretraining of their node vectors.

#include "rmpi/kgstore.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace rmpi {

enum class SchemaPredicate : std::uint8_t { kSubPropertyOf = 0, kDomain, kRange, kSubClassOf };
inline constexpr std::size_t kNumSchemaPredicates = 4;

std::string_view schema_predicate_name(SchemaPredicate p);
// Accepts "rdfs:X", the full rdf-schema IRI (optionally in <>), or bare "X".
std::optional<SchemaPredicate> parse_schema_predicate(std::string_view text);

struct SchemaEdge {
    std::uint32_t subject;
    SchemaPredicate predicate;
    std::uint32_t object;
};

struct SchemaGraph {
    std::vector<std::string> nodes;
    std::unordered_map<std::string, std::uint32_t> node_ids;
    std::vector<SchemaEdge> edges;

    std::uint32_t intern(std::string_view name);
    std::optional<std::uint32_t> find(std::string_view name) const;

    // Nodes used as properties: subjects of subPropertyOf/domain/range and
    // objects of subPropertyOf.
    std::vector<std::uint32_t> relation_nodes() const;
};

SchemaGraph load_schema(const std::filesystem::path& path);

struct TransEConfig {
    std::size_t dim = 300;
    int epochs = 500;
    double lr = 0.01;
    double margin = 1.0;
    std::uint64_t seed = 0;
};

struct SchemaEmbedding {
    std::size_t dim = 0;
    std::vector<std::vector<double>> node_vectors;
    std::array<std::vector<double>, kNumSchemaPredicates> predicate_vectors;
    std::vector<double> epoch_loss;  // mean hinge loss per epoch
};

// L1 translational energy ||v_s + v_p - v_o||_1.
double transe_energy(std::span<const double> s, std::span<const double> p,
                     std::span<const double> o);

SchemaEmbedding pretrain(const SchemaGraph& schema, const TransEConfig& config);

// Relation name -> semantic vector. Only relation vectors are exported.
struct SchemaVectors {
    std::size_t dim = 0;
    std::unordered_map<std::string, std::vector<double>> vectors;

    const std::vector<double>* find(std::string_view name) const;
};

// Every name in `relations` must be a schema node (throws DataError).
SchemaVectors export_relation_vectors(const SchemaGraph& schema, const SchemaEmbedding& embedding,
                                      const std::vector<std::string>& relations);

// Directory with schema_vectors.tsv (a "#dim<TAB>n" line, then
// name<TAB>byte offset) and schema_vectors.bin (row-major float32,
// little-endian).
void save_schema_vectors(const SchemaVectors& vectors, const std::filesystem::path& dir);
SchemaVectors load_schema_vectors(const std::filesystem::path& dir);

}  // namespace rmpi
