#pragma once
// Shared fixtures for unit and acceptance tests: random graphs, a small
// rule-based benchmark on disk, and a plain-loop reference implementation
// of the model equations that shares no code with rmpnet.

#include "rmpi/kgstore.hpp"
#include "rmpi/rmpnet.hpp"
#include "rmpi/subgraph.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace testing {

using rmpi::EdgeType;
using rmpi::Triple;
using rmpi::TripleList;

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("rmpi-test-" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline TripleList random_triples(std::mt19937_64& rng, std::size_t entities, std::size_t relations,
                                 std::size_t count) {
    std::uniform_int_distribution<std::uint32_t> ent(0, static_cast<std::uint32_t>(entities - 1));
    std::uniform_int_distribution<std::uint32_t> rel(0, static_cast<std::uint32_t>(relations - 1));
    TripleList out;
    for (std::size_t i = 0; i < count; ++i) out.push_back({ent(rng), rel(rng), ent(rng)});
    return out;
}

// Edge types n1 -> n2 straight from the pattern definitions.
inline std::set<EdgeType> pair_types(const Triple& a, const Triple& b, bool suppress = true) {
    std::set<EdgeType> types;
    const bool para = a.head == b.head && a.tail == b.tail;
    const bool loop = a.head == b.tail && a.tail == b.head;
    if (para) types.insert(EdgeType::kPara);
    if (loop) types.insert(EdgeType::kLoop);
    if (a.head == b.head && !(suppress && para)) types.insert(EdgeType::kHH);
    if (a.tail == b.tail && !(suppress && para)) types.insert(EdgeType::kTT);
    if (a.tail == b.head && !(suppress && loop)) types.insert(EdgeType::kTH);
    if (a.head == b.tail && !(suppress && loop)) types.insert(EdgeType::kHT);
    return types;
}

inline std::vector<rmpi::TypedEdge> brute_force_edges(const std::vector<Triple>& nodes, bool suppress = true) {
    std::vector<rmpi::TypedEdge> edges;
    for (std::uint32_t i = 0; i < nodes.size(); ++i)
        for (std::uint32_t j = 0; j < nodes.size(); ++j) {
            if (i == j) continue;
            for (EdgeType t : pair_types(nodes[i], nodes[j], suppress)) edges.push_back({i, t, j});
        }
    std::sort(edges.begin(), edges.end());
    return edges;
}

// Toy benchmark with two compositional rules:
//   a(x,y) & b(y,z) -> c(x,z)      d(x,y) -> e(y,x)
// Training graph and testing graph use disjoint entity names.
inline std::vector<std::array<std::string, 3>> toy_rule_triples(std::mt19937_64& rng,
                                                                const std::string& prefix,
                                                                std::size_t entities,
                                                                std::size_t chains,
                                                                std::size_t pairs) {
    std::uniform_int_distribution<std::size_t> ent(0, entities - 1);
    std::set<std::array<std::string, 3>> seen;
    std::vector<std::array<std::string, 3>> out;
    auto add = [&](std::size_t h, const char* r, std::size_t t) {
        std::array<std::string, 3> tr{prefix + std::to_string(h), r, prefix + std::to_string(t)};
        if (seen.insert(tr).second) out.push_back(tr);
    };
    for (std::size_t i = 0; i < chains; ++i) {
        std::size_t x = ent(rng), y = ent(rng), z = ent(rng);
        if (x == y || y == z || x == z) continue;
        add(x, "a", y);
        add(y, "b", z);
        add(x, "c", z);
    }
    for (std::size_t i = 0; i < pairs; ++i) {
        std::size_t x = ent(rng), y = ent(rng);
        if (x == y) continue;
        add(x, "d", y);
        add(y, "e", x);
    }
    return out;
}

inline void write_lines(const std::filesystem::path& file,
                        const std::vector<std::array<std::string, 3>>& triples) {
    std::ofstream out(file);
    for (const auto& t : triples) out << t[0] << '\t' << t[1] << '\t' << t[2] << '\n';
}

// Writes a benchmark directory; the held-out targets use the rule-derived
// relations c and e.
inline std::filesystem::path write_toy_benchmark(const std::filesystem::path& dir, std::uint64_t seed,
                                                 std::size_t entities = 60, std::size_t chains = 70,
                                                 std::size_t pairs = 40) {
    std::filesystem::create_directories(dir);
    std::mt19937_64 rng(seed);
    auto split = [&](const std::string& prefix, std::size_t held_out,
                     std::vector<std::array<std::string, 3>>& graph,
                     std::vector<std::array<std::string, 3>>& targets) {
        auto all = toy_rule_triples(rng, prefix, entities, chains, pairs);
        std::shuffle(all.begin(), all.end(), rng);
        for (const auto& t : all) {
            if (targets.size() < held_out && (t[1] == "c" || t[1] == "e"))
                targets.push_back(t);
            else
                graph.push_back(t);
        }
    };
    std::vector<std::array<std::string, 3>> train, valid, test_graph, test;
    split("tr", 20, train, valid);
    split("te", 20, test_graph, test);
    write_lines(dir / "train.txt", train);
    write_lines(dir / "valid.txt", valid);
    write_lines(dir / "test_graph.txt", test_graph);
    write_lines(dir / "test.txt", test);
    return dir;
}

// ---- random model inputs

// Random benchmark-like graph and a sample whose enclosing view has between
// min_nodes and max_nodes nodes.
struct RandomSample {
    rmpi::KnowledgeGraph graph;
    rmpi::SampleGraph sample;
};

inline RandomSample random_sample(std::mt19937_64& rng, const rmpi::ModelConfig& config, std::size_t relations,
                                  std::size_t min_nodes, std::size_t max_nodes) {
    for (;;) {
        const std::size_t n = 3 + rng() % 6;
        rmpi::KnowledgeGraph g(random_triples(rng, n, relations, 2 + rng() % 14), n);
        const Triple target{static_cast<rmpi::EntityId>(rng() % n), static_cast<rmpi::RelationId>(rng() % relations),
                            static_cast<rmpi::EntityId>(rng() % n)};
        rmpi::SampleGraph s = rmpi::build_sample(g, target, config);
        if (s.enclosing.num_nodes() >= min_nodes && s.enclosing.num_nodes() <= max_nodes)
            return {std::move(g), std::move(s)};
    }
}

// base, NE (sum and concat), TA, NE+TA (sum and concat)
inline std::vector<rmpi::ModelConfig> all_variants(const rmpi::ModelConfig& base) {
    std::vector<rmpi::ModelConfig> out;
    for (bool ne : {false, true})
        for (bool ta : {false, true})
            for (rmpi::FusionMode f : {rmpi::FusionMode::kSum, rmpi::FusionMode::kConcat}) {
                if (!ne && f == rmpi::FusionMode::kConcat) continue;
                rmpi::ModelConfig c = base;
                c.ne = ne;
                c.ta = ta;
                c.fusion = f;
                out.push_back(c);
            }
    return out;
}

// ---- plain-loop model reference

using Vec = std::vector<double>;

inline const rmpi::num::Matrix& weight(const rmpi::RmpiModel& model, const std::string& name) {
    return model.params().value(model.params().find(name));
}

inline Vec mv(const rmpi::num::Matrix& m, const Vec& x) {
    Vec y(m.rows(), 0.0);
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) y[r] += m(r, c) * x[c];
    return y;
}

inline double dotp(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double lrelu(double x, double slope) { return x > 0 ? x : slope * x; }

inline Vec soft(const Vec& x) {
    double mx = *std::max_element(x.begin(), x.end());
    Vec e(x.size());
    double z = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) z += e[i] = std::exp(x[i] - mx);
    for (double& v : e) v /= z;
    return e;
}

// Target representation after `layers` rounds in which every node is
// updated over all of its incoming edges (last round: target only, plain
// sums). h0 holds one vector per relation-view node.
inline Vec reference_represent(const rmpi::RmpiModel& model, const rmpi::RelationViewGraph& rvg,
                               std::vector<Vec> h) {
    const auto& cfg = model.config();
    const std::size_t d = cfg.dim;
    const std::uint32_t t = rvg.target();
    for (std::uint32_t k = 1; k <= cfg.layers; ++k) {
        const bool last = k == cfg.layers;
        std::vector<Vec> next = h;
        for (std::uint32_t i = 0; i < rvg.num_nodes(); ++i) {
            if (last && i != t) continue;
            std::map<int, std::vector<std::uint32_t>> groups;
            for (const auto& e : rvg.edges())
                if (e.dst == i) groups[static_cast<int>(e.type)].push_back(e.src);
            if (groups.empty()) continue;
            Vec msg(d, 0.0);
            for (const auto& [type, srcs] : groups) {
                Vec alpha(srcs.size(), 1.0);
                if (cfg.ta && !last) {
                    Vec scores;
                    for (auto j : srcs) scores.push_back(lrelu(dotp(h[t], h[j]), cfg.leaky_slope));
                    alpha = soft(scores);
                }
                Vec agg(d, 0.0);
                for (std::size_t n = 0; n < srcs.size(); ++n)
                    for (std::size_t c = 0; c < d; ++c) agg[c] += alpha[n] * h[srcs[n]][c];
                Vec w = mv(weight(model, rmpi::edge_weight_name(k, static_cast<EdgeType>(type))), agg);
                for (std::size_t c = 0; c < d; ++c) msg[c] += w[c];
            }
            for (std::size_t c = 0; c < d; ++c) next[i][c] = std::max(0.0, msg[c]) + h[i][c];
        }
        h = std::move(next);
    }
    return h[t];
}

inline Vec reference_disclosing(const rmpi::RmpiModel& model, const Vec& target_h0,
                                const std::vector<Vec>& neighbor_h0) {
    const std::size_t d = model.config().dim;
    if (neighbor_h0.empty()) return Vec(d, 0.0);
    const auto& w = weight(model, "disclosing");
    const Vec zt = mv(w, target_h0);
    std::vector<Vec> z;
    Vec scores;
    for (const auto& h : neighbor_h0) {
        z.push_back(mv(w, h));
        scores.push_back(lrelu(dotp(zt, z.back()), model.config().leaky_slope));
    }
    const Vec alpha = soft(scores);
    Vec out(d, 0.0);
    for (std::size_t n = 0; n < z.size(); ++n)
        for (std::size_t c = 0; c < d; ++c) out[c] += alpha[n] * z[n][c];
    for (double& v : out) v = std::max(0.0, v);
    return out;
}

inline double reference_score(const rmpi::RmpiModel& model, const Vec& repr, const Vec* disclosing) {
    Vec fused = repr;
    if (disclosing) {
        if (model.config().fusion == rmpi::FusionMode::kSum) {
            for (std::size_t c = 0; c < fused.size(); ++c) fused[c] += (*disclosing)[c];
        } else {
            Vec cat = repr;
            cat.insert(cat.end(), disclosing->begin(), disclosing->end());
            fused = mv(weight(model, "fusion"), cat);
        }
    }
    return mv(weight(model, "scorer"), fused)[0];
}

// Initial vector of one relation as the model resolves it.
inline Vec initial_vector(const rmpi::RmpiModel& model, rmpi::RelationId relation) {
    rmpi::num::Tape tape(model.params());
    rmpi::FeatureCache cache;
    return tape.value(model.initial_feature(tape, relation, cache));
}

inline double reference_forward(const rmpi::RmpiModel& model, const rmpi::SampleGraph& sample) {
    std::vector<Vec> h0;
    for (std::uint32_t i = 0; i < sample.enclosing.num_nodes(); ++i)
        h0.push_back(initial_vector(model, sample.enclosing.label(i)));
    const Vec repr = reference_represent(model, sample.enclosing, h0);
    if (!model.config().ne) return reference_score(model, repr, nullptr);
    std::vector<Vec> neigh;
    for (auto label : sample.disclosing.labels) neigh.push_back(initial_vector(model, label));
    const Vec hd = reference_disclosing(model, initial_vector(model, sample.target.relation), neigh);
    return reference_score(model, repr, &hd);
}

// Vocabulary with relations r0..r{n-1}, all seen, and entities e0..e{m-1}.
inline rmpi::Vocabulary numbered_vocab(std::size_t relations, std::size_t entities) {
    rmpi::Vocabulary v;
    for (std::size_t e = 0; e < entities; ++e) v.intern_entity("e" + std::to_string(e));
    for (std::size_t r = 0; r < relations; ++r) {
        auto id = v.intern_relation("r" + std::to_string(r));
        v.set_seen(id, true);
    }
    return v;
}

inline std::vector<std::string> relation_names(std::size_t relations) {
    std::vector<std::string> names;
    for (std::size_t r = 0; r < relations; ++r) names.push_back("r" + std::to_string(r));
    return names;
}

// ---- finite differences

struct GradientReport {
    double worst_relative = 0.0;
    std::size_t checked = 0;
    std::string worst_param;
};

// Compares analytic gradients of loss(tape) against central differences
// for every entry of every parameter (at most `per_param` entries each,
// spread evenly). Relative error is |a - n| / max(|a|, |n|, floor).
template <typename LossFn>
GradientReport check_gradients(rmpi::num::ParamStore& params, LossFn&& loss, double step = 1e-5,
                               std::size_t per_param = 64, double floor = 1e-6) {
    params.zero_grad();
    {
        rmpi::num::Tape tape(params);
        tape.backward(loss(tape));
    }
    GradientReport report;
    auto evaluate = [&] {
        rmpi::num::Tape tape(static_cast<const rmpi::num::ParamStore&>(params));
        return tape.scalar(loss(tape));
    };
    for (std::uint32_t p = 0; p < params.size(); ++p) {
        const rmpi::num::ParamId id{p};
        auto& values = params.value(id).data();
        const auto& grads = params.grad(id).data();
        const std::size_t stride = std::max<std::size_t>(1, values.size() / per_param);
        for (std::size_t i = 0; i < values.size(); i += stride) {
            const double saved = values[i];
            values[i] = saved + step;
            const double up = evaluate();
            values[i] = saved - step;
            const double down = evaluate();
            values[i] = saved;
            const double numeric = (up - down) / (2 * step);
            const double analytic = grads[i];
            const double rel = std::abs(analytic - numeric) /
                               std::max({std::abs(analytic), std::abs(numeric), floor});
            ++report.checked;
            if (rel > report.worst_relative) {
                report.worst_relative = rel;
                report.worst_param = params.name(id) + "[" + std::to_string(i) + "]";
            }
        }
    }
    return report;
}

}  // namespace testing
