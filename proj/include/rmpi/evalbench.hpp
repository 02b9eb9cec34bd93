#pragma once
// Evaluation metrics and protocols, plus generation of fully inductive
// benchmarks by recombining a training graph with another version's
// testing graph.

#include "rmpi/kgstore.hpp"
#include "rmpi/negative_sampling.hpp"
#include "rmpi/rmpnet.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace rmpi {

// Must be safe to call concurrently when used with workers > 1.
using TripleScorer = std::function<double(const Triple&)>;

// Scores triples with the model over subgraphs of `graph`.
TripleScorer model_scorer(const RmpiModel& model, const KnowledgeGraph& graph);

// Average precision over descending scores; ties keep input order.
// Requires at least one positive label (throws std::invalid_argument).
double auc_pr(std::span<const double> scores, std::span<const int> labels);

struct ClassificationResult {
    double auc_pr = 0.0;
    std::vector<Triple> triples;
    std::vector<double> scores;
    std::vector<int> labels;
};

// Pairs every target with one sampled negative and scores both.
ClassificationResult classify(const TripleScorer& scorer, const KnowledgeGraph& graph,
                              const TripleList& targets, std::uint64_t seed,
                              const NegativeSamplingOptions& sampling = {},
                              std::size_t workers = 1);

enum class CorruptSide { kHead, kTail };

struct RankOutcome {
    std::size_t rank = 0;        // 1-based, ties counted against the truth
    std::size_t candidates = 0;  // negatives actually used
};

// Ranks the true triple against up to `num_negatives` distinct uniform
// corruptions of one side (the true entity excluded).
RankOutcome rank_entities(const TripleScorer& scorer, const KnowledgeGraph& graph,
                          const Triple& query, CorruptSide side, std::size_t num_negatives,
                          std::mt19937_64& rng);

// Pessimistic rank of `truth` among `candidates`.
std::size_t pessimistic_rank(double truth, std::span<const double> candidates);

struct RankingResult {
    std::vector<std::size_t> ranks;
    double mrr = 0.0;
    std::map<std::size_t, double> hits;
    std::size_t min_candidates = 0;
};

RankingResult summarize_ranks(std::vector<std::size_t> ranks, std::span<const std::size_t> hits_at);

RankingResult evaluate_ranking(const TripleScorer& scorer, const KnowledgeGraph& graph,
                               const TripleList& queries, std::span<const CorruptSide> sides,
                               std::size_t num_negatives, std::span<const std::size_t> hits_at,
                               std::uint64_t seed, std::size_t workers = 1);

struct GraphStats {
    std::size_t relations = 0;
    std::size_t unseen_relations = 0;
    std::size_t entities = 0;
    std::size_t graph_triples = 0;
    std::size_t target_triples = 0;
};

struct RecombinedBench {
    Vocabulary vocab;
    TripleList train;
    TripleList valid;
    TripleList semi_graph;
    TripleList semi_targets;
    TripleList fully_graph;
    TripleList fully_targets;
    std::vector<RelationId> unseen;  // relations of TE(semi) absent from training
    GraphStats train_stats;
    GraphStats semi_stats;
    GraphStats fully_stats;
};

// Writes <out>/semi and <out>/fully in the benchmark layout, each with an
// unseen_relations.txt, plus <out>/stats.json. An empty TE(fully) is still
// written (with a warning on stderr).
RecombinedBench recombine(const std::filesystem::path& train_dir,
                          const std::filesystem::path& test_dir,
                          const std::filesystem::path& out_dir);

GraphStats graph_stats(const TripleList& graph, const TripleList& targets,
                       const Vocabulary& vocab);

// metric<TAB>value lines and a flat JSON object.
void write_report(const std::filesystem::path& dir, const std::string& stem,
                  const std::vector<std::pair<std::string, double>>& metrics);

}  // namespace rmpi
