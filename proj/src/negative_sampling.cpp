#include "rmpi/negative_sampling.hpp"

namespace rmpi {

Triple sample_negative(const Triple& positive, const KnowledgeGraph& graph, std::mt19937_64& rng,
                       const NegativeSamplingOptions& options) {
    const auto& entities = graph.entities();
    if (entities.empty()) throw DataError("cannot sample negatives from an empty graph");
    std::uniform_int_distribution<std::size_t> pick(0, entities.size() - 1);
    std::bernoulli_distribution coin(0.5);

    Triple candidate = positive;
    const int attempts = options.avoid_known ? options.retries + 1 : 1;
    for (int attempt = 0; attempt < attempts; ++attempt) {
        candidate = positive;
        if (coin(rng))
            candidate.head = entities[pick(rng)];
        else
            candidate.tail = entities[pick(rng)];
        if (!options.avoid_known) break;
        if (candidate != positive && !graph.contains(candidate)) break;
    }
    return candidate;
}

}  // namespace rmpi
