#pragma once

#include "rmpi/kgstore.hpp"

#include <random>

namespace rmpi {

struct NegativeSamplingOptions {
    // Resample when the corruption equals the positive or is a known triple
    // of the graph; after `retries` attempts the last draw is accepted.
    bool avoid_known = true;
    int retries = 5;
};

// Replaces head or tail (fair coin) with an entity drawn uniformly from the
// graph's entities.
Triple sample_negative(const Triple& positive, const KnowledgeGraph& graph, std::mt19937_64& rng,
                       const NegativeSamplingOptions& options = {});

}  // namespace rmpi
