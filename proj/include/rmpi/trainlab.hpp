#pragma once
// Training loop: negative sampling, subgraph caching, margin ranking loss,
// Adam updates, validation-based model selection and checkpoints.

#include "rmpi/kgstore.hpp"
#include "rmpi/negative_sampling.hpp"
#include "rmpi/numkit.hpp"
#include "rmpi/rmpnet.hpp"
#include "rmpi/schema.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace rmpi {

struct EpochStats {
    int epoch = 0;  // 1-based
    double mean_loss = 0.0;       // per positive
    double valid_auc_pr = 0.0;    // NaN when there is no validation split
    double seconds = 0.0;
};

struct TrainConfig {
    ModelConfig model;
    double lr = 0.001;
    std::size_t batch = 16;
    double margin = 10.0;
    int epochs = 20;
    std::uint64_t seed = 0;
    int patience = 10;           // epochs without improvement; 0 disables
    std::size_t negatives = 1;   // per positive
    NegativeSamplingOptions sampling;
    std::size_t workers = 1;     // sample construction only
    std::size_t cache_budget = 200000;  // cached positive samples
    std::size_t valid_limit = 0;        // 0 = whole validation split
    std::optional<std::filesystem::path> cache_dir;
    std::function<void(const EpochStats&)> on_epoch;

    void validate() const;  // throws std::invalid_argument
};

double margin_loss(std::span<const double> pos_scores, std::span<const double> neg_scores,
                   double margin);
num::Var margin_loss(num::Tape& tape, std::span<const num::Var> pos_scores,
                     std::span<const num::Var> neg_scores, double margin);

// Samples of one graph keyed by target triple. Safe for concurrent get().
// With a directory, relation views are loaded from and persisted to a file
// named after the graph contents and the extraction settings.
class SubgraphCache {
public:
    SubgraphCache(const KnowledgeGraph& graph, const ModelConfig& config, std::size_t budget,
                  std::optional<std::filesystem::path> dir = std::nullopt);

    std::shared_ptr<const SampleGraph> get(const Triple& target);
    std::size_t size() const;
    void persist() const;

private:
    std::shared_ptr<const SampleGraph> complete(const Triple& target, RelationViewGraph rvg) const;

    const KnowledgeGraph& graph_;
    ModelConfig config_;
    std::size_t budget_;
    std::optional<std::filesystem::path> file_;
    mutable std::mutex mutex_;
    std::unordered_map<Triple, std::shared_ptr<const SampleGraph>, TripleHash> entries_;
};

struct Checkpoint {
    static constexpr int kFormatVersion = 1;

    int format_version = kFormatVersion;
    ModelConfig config;
    std::string vocabulary_digest;
    std::vector<std::string> seen_relations;
    std::uint64_t unseen_seed = 0;
    num::ParamStore params;
    int best_epoch = 0;
    double best_valid_auc_pr = 0.0;
};

// sha256 over the newline-joined seen relation names.
std::string vocabulary_digest(const std::vector<std::string>& seen_relations);

Checkpoint make_checkpoint(const RmpiModel& model);
RmpiModel restore_model(const Checkpoint& checkpoint);

// <dir>/manifest.json and <dir>/params.bin (float32 little-endian blocks in
// manifest order). Loading validates version, digest and block sizes.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& dir);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

nlohmann::json model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& json);

struct TrainResult {
    Checkpoint best;
    std::vector<EpochStats> history;
};

// Trains on benchmark.train, selecting the epoch with the best validation
// AUC-PR (the last epoch when there is no validation split). SCHEMA init
// requires `schema`.
TrainResult train(const Benchmark& benchmark, const TrainConfig& config,
                  const SchemaVectors* schema = nullptr);

}  // namespace rmpi
