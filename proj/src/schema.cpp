#include "rmpi/schema.hpp"

#include "rmpi/io_util.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

namespace rmpi {

namespace {

constexpr std::array<std::string_view, kNumSchemaPredicates> kPredicateNames = {
    "subPropertyOf", "domain", "range", "subClassOf"};

constexpr std::string_view kRdfsPrefix = "rdfs:";
constexpr std::string_view kRdfsIri = "http://www.w3.org/2000/01/rdf-schema#";

void normalize(std::vector<double>& v) {
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm > 0.0)
        for (double& x : v) x /= norm;
}

std::vector<double> random_unit(std::size_t dim, std::mt19937_64& rng) {
    const double bound = 6.0 / std::sqrt(static_cast<double>(dim));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> v(dim);
    for (double& x : v) x = dist(rng);
    normalize(v);
    return v;
}

}  // namespace

std::string_view schema_predicate_name(SchemaPredicate p) {
    return kPredicateNames.at(static_cast<std::size_t>(p));
}

std::optional<SchemaPredicate> parse_schema_predicate(std::string_view text) {
    if (text.size() >= 2 && text.front() == '<' && text.back() == '>')
        text = text.substr(1, text.size() - 2);
    if (text.starts_with(kRdfsPrefix))
        text.remove_prefix(kRdfsPrefix.size());
    else if (text.starts_with(kRdfsIri))
        text.remove_prefix(kRdfsIri.size());
    for (std::size_t i = 0; i < kPredicateNames.size(); ++i)
        if (kPredicateNames[i] == text) return static_cast<SchemaPredicate>(i);
    return std::nullopt;
}

std::uint32_t SchemaGraph::intern(std::string_view name) {
    auto [it, inserted] =
        node_ids.try_emplace(std::string(name), static_cast<std::uint32_t>(nodes.size()));
    if (inserted) nodes.emplace_back(name);
    return it->second;
}

std::optional<std::uint32_t> SchemaGraph::find(std::string_view name) const {
    auto it = node_ids.find(std::string(name));
    if (it == node_ids.end()) return std::nullopt;
    return it->second;
}

std::vector<std::uint32_t> SchemaGraph::relation_nodes() const {
    std::vector<bool> is_rel(nodes.size(), false);
    for (const auto& e : edges) {
        if (e.predicate != SchemaPredicate::kSubClassOf) is_rel[e.subject] = true;
        if (e.predicate == SchemaPredicate::kSubPropertyOf) is_rel[e.object] = true;
    }
    std::vector<std::uint32_t> out;
    for (std::uint32_t i = 0; i < nodes.size(); ++i)
        if (is_rel[i]) out.push_back(i);
    return out;
}

SchemaGraph load_schema(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open schema file " + path.string());
    SchemaGraph graph;
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
            throw DataError(path.string() + ":" + std::to_string(line_no) +
                            ": expected subject<TAB>predicate<TAB>object");
        auto subject = view.substr(0, first);
        auto pred_text = view.substr(first + 1, second - first - 1);
        auto object = view.substr(second + 1);
        auto pred = parse_schema_predicate(pred_text);
        if (!pred)
            throw DataError(path.string() + ":" + std::to_string(line_no) +
                            ": unsupported schema predicate '" + std::string(pred_text) + "'");
        if (subject.empty() || object.empty())
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": empty field");
        SchemaEdge edge;
        edge.subject = graph.intern(subject);
        edge.predicate = *pred;
        edge.object = graph.intern(object);
        graph.edges.push_back(edge);
    }
    return graph;
}

double transe_energy(std::span<const double> s, std::span<const double> p,
                     std::span<const double> o) {
    if (s.size() != p.size() || s.size() != o.size())
        throw std::invalid_argument("transe_energy: dimension mismatch");
    double e = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) e += std::abs(s[i] + p[i] - o[i]);
    return e;
}

SchemaEmbedding pretrain(const SchemaGraph& schema, const TransEConfig& config) {
    if (schema.edges.empty()) throw DataError("cannot pretrain an empty schema graph");
    if (config.dim == 0) throw std::invalid_argument("pretrain: dim must be positive");

    std::mt19937_64 rng(config.seed);
    SchemaEmbedding emb;
    emb.dim = config.dim;
    for (std::size_t i = 0; i < schema.nodes.size(); ++i)
        emb.node_vectors.push_back(random_unit(config.dim, rng));
    for (auto& p : emb.predicate_vectors) p = random_unit(config.dim, rng);

    const auto num_nodes = static_cast<std::uint32_t>(schema.nodes.size());
    std::uniform_int_distribution<std::uint32_t> pick_node(0, num_nodes - 1);
    std::bernoulli_distribution coin(0.5);
    std::vector<std::size_t> order(schema.edges.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t dim = config.dim;

    // Subgradient of ||s + p - o||_1 w.r.t. s (and p); o gets the negation.
    auto apply = [&](std::vector<double>& s, std::vector<double>& p, std::vector<double>& o,
                     double direction) {
        for (std::size_t i = 0; i < dim; ++i) {
            const double r = s[i] + p[i] - o[i];
            const double g = r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
            const double step = direction * config.lr * g;
            s[i] -= step;
            p[i] -= step;
            o[i] += step;
        }
    };

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0.0;
        for (std::size_t idx : order) {
            const SchemaEdge& e = schema.edges[idx];
            std::uint32_t cs = e.subject;
            std::uint32_t co = e.object;
            const bool corrupt_subject = coin(rng);
            if (num_nodes > 1) {
                std::uint32_t& slot = corrupt_subject ? cs : co;
                const std::uint32_t original = slot;
                do slot = pick_node(rng);
                while (slot == original);
            }
            auto& p = emb.predicate_vectors[static_cast<std::size_t>(e.predicate)];
            const double pos = transe_energy(emb.node_vectors[e.subject], p, emb.node_vectors[e.object]);
            const double neg = transe_energy(emb.node_vectors[cs], p, emb.node_vectors[co]);
            const double loss = config.margin + pos - neg;
            if (loss <= 0.0) continue;
            total += loss;
            apply(emb.node_vectors[e.subject], p, emb.node_vectors[e.object], 1.0);
            apply(emb.node_vectors[cs], p, emb.node_vectors[co], -1.0);
        }
        for (auto& v : emb.node_vectors) normalize(v);
        emb.epoch_loss.push_back(total / static_cast<double>(schema.edges.size()));
    }
    return emb;
}

const std::vector<double>* SchemaVectors::find(std::string_view name) const {
    auto it = vectors.find(std::string(name));
    return it == vectors.end() ? nullptr : &it->second;
}

SchemaVectors export_relation_vectors(const SchemaGraph& schema, const SchemaEmbedding& embedding,
                                      const std::vector<std::string>& relations) {
    SchemaVectors out;
    out.dim = embedding.dim;
    for (const auto& name : relations) {
        auto id = schema.find(name);
        if (!id) throw DataError("relation '" + name + "' is not covered by the schema graph");
        out.vectors.emplace(name, embedding.node_vectors.at(*id));
    }
    return out;
}

void save_schema_vectors(const SchemaVectors& vectors, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::vector<std::string> names;
    for (const auto& [name, v] : vectors.vectors) names.push_back(name);
    std::sort(names.begin(), names.end());

    std::ofstream manifest(dir / "schema_vectors.tsv", std::ios::binary);
    std::ofstream bin(dir / "schema_vectors.bin", std::ios::binary);
    if (!manifest || !bin) throw DataError("cannot write schema vectors to " + dir.string());
    manifest << "#dim\t" << vectors.dim << '\n';
    std::size_t offset = 0;
    for (const auto& name : names) {
        const auto& v = vectors.vectors.at(name);
        if (v.size() != vectors.dim) throw std::invalid_argument("schema vector dimension mismatch");
        manifest << name << '\t' << offset << '\n';
        io::write_f32_le(bin, v);
        offset += v.size() * 4;
    }
}

SchemaVectors load_schema_vectors(const std::filesystem::path& dir) {
    std::ifstream manifest(dir / "schema_vectors.tsv");
    std::ifstream bin(dir / "schema_vectors.bin", std::ios::binary);
    if (!manifest || !bin) throw DataError("missing schema vectors in " + dir.string());
    SchemaVectors out;
    std::string line;
    if (!std::getline(manifest, line) || !line.starts_with("#dim\t"))
        throw DataError("schema_vectors.tsv: missing #dim header");
    out.dim = std::stoul(line.substr(5));
    std::vector<std::pair<std::string, std::size_t>> entries;
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos) throw DataError("schema_vectors.tsv: malformed line");
        entries.emplace_back(line.substr(0, tab), std::stoull(line.substr(tab + 1)));
    }
    for (const auto& [name, offset] : entries) {
        bin.seekg(static_cast<std::streamoff>(offset));
        out.vectors.emplace(name, io::read_f32_le(bin, out.dim));
    }
    return out;
}

}  // namespace rmpi
