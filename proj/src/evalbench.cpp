#include "rmpi/evalbench.hpp"

#include "rmpi/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>
#include <unordered_set>

namespace rmpi {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

}  // namespace

TripleScorer model_scorer(const RmpiModel& model, const KnowledgeGraph& graph) {
    return [&model, &graph](const Triple& t) {
        return model.score_sample(build_sample(graph, t, model.config()));
    };
}

double auc_pr(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("auc_pr: length mismatch");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::size_t positives = 0;
    double precision_sum = 0.0;
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        if (labels[order[rank]] != 1) continue;
        ++positives;
        precision_sum += static_cast<double>(positives) / static_cast<double>(rank + 1);
    }
    if (positives == 0) throw std::invalid_argument("auc_pr: no positive labels");
    return precision_sum / static_cast<double>(positives);
}

ClassificationResult classify(const TripleScorer& scorer, const KnowledgeGraph& graph,
                              const TripleList& targets, std::uint64_t seed,
                              const NegativeSamplingOptions& sampling, std::size_t workers) {
    if (targets.empty()) throw std::invalid_argument("classify: no targets");
    std::mt19937_64 rng(seed);
    ClassificationResult result;
    for (const auto& pos : targets) {
        result.triples.push_back(pos);
        result.labels.push_back(1);
        result.triples.push_back(sample_negative(pos, graph, rng, sampling));
        result.labels.push_back(0);
    }
    result.scores.assign(result.triples.size(), 0.0);
    parallel_for(result.triples.size(), workers,
                 [&](std::size_t i) { result.scores[i] = scorer(result.triples[i]); });
    result.auc_pr = auc_pr(result.scores, result.labels);
    return result;
}

std::size_t pessimistic_rank(double truth, std::span<const double> candidates) {
    std::size_t rank = 1;
    for (double s : candidates)
        if (s >= truth) ++rank;
    return rank;
}

RankOutcome rank_entities(const TripleScorer& scorer, const KnowledgeGraph& graph,
                          const Triple& query, CorruptSide side, std::size_t num_negatives,
                          std::mt19937_64& rng) {
    const EntityId truth = side == CorruptSide::kHead ? query.head : query.tail;
    std::vector<EntityId> pool;
    pool.reserve(graph.entities().size());
    for (EntityId e : graph.entities())
        if (e != truth) pool.push_back(e);

    std::vector<EntityId> chosen;
    if (pool.size() <= num_negatives) {
        chosen = pool;
    } else if (pool.size() < 4 * num_negatives) {
        std::shuffle(pool.begin(), pool.end(), rng);
        chosen.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(num_negatives));
    } else {
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        std::unordered_set<EntityId> taken;
        while (chosen.size() < num_negatives) {
            EntityId e = pool[pick(rng)];
            if (taken.insert(e).second) chosen.push_back(e);
        }
    }

    const double truth_score = scorer(query);
    std::vector<double> scores;
    scores.reserve(chosen.size());
    for (EntityId e : chosen) {
        Triple corrupted = query;
        (side == CorruptSide::kHead ? corrupted.head : corrupted.tail) = e;
        scores.push_back(scorer(corrupted));
    }
    return {pessimistic_rank(truth_score, scores), chosen.size()};
}

RankingResult summarize_ranks(std::vector<std::size_t> ranks, std::span<const std::size_t> hits_at) {
    if (ranks.empty()) throw std::invalid_argument("summarize_ranks: no ranks");
    RankingResult r;
    double rr = 0.0;
    for (std::size_t rank : ranks) {
        if (rank == 0) throw std::invalid_argument("ranks are 1-based");
        rr += 1.0 / static_cast<double>(rank);
    }
    r.mrr = rr / static_cast<double>(ranks.size());
    for (std::size_t n : hits_at) {
        auto hit = std::count_if(ranks.begin(), ranks.end(), [n](std::size_t x) { return x <= n; });
        r.hits[n] = static_cast<double>(hit) / static_cast<double>(ranks.size());
    }
    r.ranks = std::move(ranks);
    return r;
}

RankingResult evaluate_ranking(const TripleScorer& scorer, const KnowledgeGraph& graph,
                               const TripleList& queries, std::span<const CorruptSide> sides,
                               std::size_t num_negatives, std::span<const std::size_t> hits_at,
                               std::uint64_t seed, std::size_t workers) {
    if (sides.empty()) throw std::invalid_argument("evaluate_ranking: no sides");
    const std::size_t pairs = queries.size() * sides.size();
    std::vector<RankOutcome> outcomes(pairs);
    parallel_for(pairs, workers, [&](std::size_t p) {
        std::mt19937_64 rng(splitmix64(seed ^ splitmix64(p)));
        outcomes[p] = rank_entities(scorer, graph, queries[p / sides.size()],
                                    sides[p % sides.size()], num_negatives, rng);
    });
    std::vector<std::size_t> ranks;
    std::size_t min_candidates = num_negatives;
    for (const auto& o : outcomes) {
        ranks.push_back(o.rank);
        min_candidates = std::min(min_candidates, o.candidates);
    }
    RankingResult r = summarize_ranks(std::move(ranks), hits_at);
    r.min_candidates = min_candidates;
    return r;
}

GraphStats graph_stats(const TripleList& graph, const TripleList& targets, const Vocabulary& vocab) {
    std::set<RelationId> rels;
    std::set<EntityId> ents;
    for (const auto* list : {&graph, &targets})
        for (const auto& t : *list) {
            rels.insert(t.relation);
            ents.insert(t.head);
            ents.insert(t.tail);
        }
    GraphStats s;
    s.relations = rels.size();
    s.unseen_relations = static_cast<std::size_t>(
        std::count_if(rels.begin(), rels.end(), [&](RelationId r) { return !vocab.is_seen(r); }));
    s.entities = ents.size();
    s.graph_triples = graph.size();
    s.target_triples = targets.size();
    return s;
}

namespace {

nlohmann::json stats_json(const GraphStats& s) {
    return {{"relations", s.relations},
            {"unseen_relations", s.unseen_relations},
            {"entities", s.entities},
            {"graph_triples", s.graph_triples},
            {"target_triples", s.target_triples}};
}

void write_split(const std::filesystem::path& dir, const RecombinedBench& bench,
                 const TripleList& graph, const TripleList& targets,
                 const std::vector<RelationId>& unseen) {
    std::filesystem::create_directories(dir);
    write_triples(dir / "train.txt", bench.train, bench.vocab);
    write_triples(dir / "valid.txt", bench.valid, bench.vocab);
    write_triples(dir / "test_graph.txt", graph, bench.vocab);
    write_triples(dir / "test.txt", targets, bench.vocab);
    std::ofstream out(dir / "unseen_relations.txt", std::ios::binary);
    for (RelationId r : unseen) out << bench.vocab.relation_name(r) << '\n';
    if (!out) throw DataError("cannot write " + (dir / "unseen_relations.txt").string());
}

}  // namespace

RecombinedBench recombine(const std::filesystem::path& train_dir,
                          const std::filesystem::path& test_dir,
                          const std::filesystem::path& out_dir) {
    for (const auto& f : {train_dir / "train.txt", train_dir / "valid.txt",
                          test_dir / "test_graph.txt", test_dir / "test.txt"})
        if (!std::filesystem::is_regular_file(f)) throw DataError("missing benchmark file " + f.string());

    RecombinedBench bench;
    bench.train = read_triples(train_dir / "train.txt", bench.vocab);
    if (bench.train.empty()) throw DataError("empty training file in " + train_dir.string());
    for (const auto& t : bench.train) bench.vocab.set_seen(t.relation, true);
    bench.valid = read_triples(train_dir / "valid.txt", bench.vocab);
    const std::size_t train_entity_count = bench.vocab.num_entities();
    TripleList test_graph = read_triples(test_dir / "test_graph.txt", bench.vocab);
    TripleList test_targets = read_triples(test_dir / "test.txt", bench.vocab);

    // Entity ids below train_entity_count were interned from the training
    // graph files, so they are exactly the entities to keep out.
    auto clean = [&](const Triple& t) {
        return t.head >= train_entity_count && t.tail >= train_entity_count;
    };
    std::copy_if(test_graph.begin(), test_graph.end(), std::back_inserter(bench.semi_graph), clean);
    std::copy_if(test_targets.begin(), test_targets.end(), std::back_inserter(bench.semi_targets), clean);

    std::set<RelationId> unseen;
    for (const auto* list : {&bench.semi_graph, &bench.semi_targets})
        for (const auto& t : *list)
            if (!bench.vocab.is_seen(t.relation)) unseen.insert(t.relation);
    bench.unseen.assign(unseen.begin(), unseen.end());

    auto unseen_only = [&](const Triple& t) { return unseen.contains(t.relation); };
    std::copy_if(bench.semi_graph.begin(), bench.semi_graph.end(),
                 std::back_inserter(bench.fully_graph), unseen_only);
    std::copy_if(bench.semi_targets.begin(), bench.semi_targets.end(),
                 std::back_inserter(bench.fully_targets), unseen_only);

    bench.train_stats = graph_stats(bench.train, bench.valid, bench.vocab);
    bench.semi_stats = graph_stats(bench.semi_graph, bench.semi_targets, bench.vocab);
    bench.fully_stats = graph_stats(bench.fully_graph, bench.fully_targets, bench.vocab);

    if (bench.fully_graph.empty() && bench.fully_targets.empty())
        std::cerr << "warning: TE(fully) is empty for " << train_dir.string() << " + "
                  << test_dir.string() << '\n';

    write_split(out_dir / "semi", bench, bench.semi_graph, bench.semi_targets, bench.unseen);
    write_split(out_dir / "fully", bench, bench.fully_graph, bench.fully_targets, bench.unseen);

    nlohmann::json stats = {{"train", stats_json(bench.train_stats)},
                            {"te_semi", stats_json(bench.semi_stats)},
                            {"te_fully", stats_json(bench.fully_stats)},
                            {"train_from", train_dir.string()},
                            {"test_from", test_dir.string()}};
    std::ofstream(out_dir / "stats.json") << stats.dump(2) << '\n';
    return bench;
}

void write_report(const std::filesystem::path& dir, const std::string& stem,
                  const std::vector<std::pair<std::string, double>>& metrics) {
    std::filesystem::create_directories(dir);
    std::ofstream tsv(dir / (stem + ".tsv"), std::ios::binary);
    nlohmann::ordered_json json;
    for (const auto& [name, value] : metrics) {
        tsv << name << '\t' << value << '\n';
        json[name] = value;
    }
    std::ofstream(dir / (stem + ".json"), std::ios::binary) << json.dump(2) << '\n';
    if (!tsv) throw DataError("cannot write report in " + dir.string());
}

}  // namespace rmpi
