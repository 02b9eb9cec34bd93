#include "rmpi/kgstore.hpp"
#include "support.hpp"

#include <doctest.h>

#include <limits>

using namespace rmpi;

namespace {

KnowledgeGraph graph_of(const TripleList& triples, std::size_t entities) {
    return KnowledgeGraph(triples, entities);
}

// All-pairs undirected hop distances.
std::vector<std::vector<std::uint32_t>> floyd_warshall(const TripleList& triples, std::size_t n) {
    constexpr std::uint32_t inf = std::numeric_limits<std::uint32_t>::max() / 4;
    std::vector<std::vector<std::uint32_t>> d(n, std::vector<std::uint32_t>(n, inf));
    for (std::size_t i = 0; i < n; ++i) d[i][i] = 0;
    for (const auto& t : triples)
        if (t.head != t.tail) d[t.head][t.tail] = d[t.tail][t.head] = 1;
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) d[i][j] = std::min(d[i][j], d[i][k] + d[k][j]);
    return d;
}

}  // namespace

TEST_CASE("khop on a chain stops at K") {
    // A-B-C-D
    auto g = graph_of({{0, 0, 1}, {1, 0, 2}, {2, 0, 3}}, 4);
    auto n = khop_neighbors(g, 0, 2);
    CHECK(n.size() == 3);
    CHECK(n.at(0) == 0);
    CHECK(n.at(1) == 1);
    CHECK(n.at(2) == 2);
    CHECK_FALSE(n.contains(3));
}

TEST_CASE("khop of an isolated entity is itself") {
    auto g = graph_of({{0, 0, 1}}, 3);
    auto n = khop_neighbors(g, 2, 3);
    CHECK(n.size() == 1);
    CHECK(n.at(2) == 0);
}

TEST_CASE("khop treats edges as undirected") {
    // triangle with mixed directions
    auto g = graph_of({{0, 0, 1}, {2, 1, 0}, {1, 0, 2}}, 3);
    auto n = khop_neighbors(g, 0, 1);
    CHECK(n.size() == 3);
    CHECK(n.at(1) == 1);
    CHECK(n.at(2) == 1);
}

TEST_CASE("khop rejects ids outside the graph") {
    auto g = graph_of({{0, 0, 1}}, 2);
    CHECK_THROWS_AS(khop_neighbors(g, 5, 1), DataError);
}

TEST_CASE("khop agrees with Floyd-Warshall on random graphs") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng() % 29;
        const auto triples = testing::random_triples(rng, n, 3, 1 + rng() % 40);
        auto g = graph_of(triples, n);
        const auto d = floyd_warshall(triples, n);
        const std::uint32_t k = 1 + static_cast<std::uint32_t>(rng() % 4);
        const EntityId c = static_cast<EntityId>(rng() % n);
        auto got = khop_neighbors(g, c, k);
        for (EntityId e = 0; e < n; ++e) {
            if (d[c][e] <= k) {
                REQUIRE(got.contains(e));
                CHECK(got.at(e) == d[c][e]);
            } else {
                CHECK_FALSE(got.contains(e));
            }
        }
    }
}

TEST_CASE("benchmark loading interns one id space and flags seen relations") {
    auto dir = testing::scratch_dir("kg-load");
    testing::write_lines(dir / "train.txt", {{"a", "r1", "b"}, {"b", "r2", "c"}, {"a", "r1", "b"}});
    testing::write_lines(dir / "valid.txt", {{"a", "r2", "c"}});
    testing::write_lines(dir / "test_graph.txt", {{"x", "r3", "y"}, {"y", "r1", "z"}});
    testing::write_lines(dir / "test.txt", {{"x", "r3", "z"}});
    Benchmark b = load_benchmark(dir);

    CHECK(b.train.size() == 3);  // duplicates kept as instances
    CHECK(b.test_graph.size() == 2);
    CHECK(b.vocab.num_entities() == 6);
    CHECK(b.vocab.num_relations() == 3);
    CHECK(b.vocab.is_seen(b.vocab.relation_id("r1")));
    CHECK(b.vocab.is_seen(b.vocab.relation_id("r2")));
    CHECK_FALSE(b.vocab.is_seen(b.vocab.relation_id("r3")));
    CHECK(b.train.entities().size() == 3);
    CHECK(b.test_graph.entities().size() == 3);
    CHECK(b.train.contains({b.vocab.entity_id("a"), b.vocab.relation_id("r1"), b.vocab.entity_id("b")}));

    SUBCASE("seen and unseen partition the relations") {
        auto seen = b.vocab.seen_relations();
        auto unseen = b.vocab.unseen_relations();
        CHECK(seen.size() + unseen.size() == b.vocab.num_relations());
        for (auto r : seen) CHECK(std::find(unseen.begin(), unseen.end(), r) == unseen.end());
    }
}

TEST_CASE("testing graph identical to training graph has no unseen relations") {
    auto dir = testing::scratch_dir("kg-identity");
    testing::write_toy_benchmark(dir, 3);
    std::filesystem::copy_file(dir / "train.txt", dir / "test_graph.txt",
                               std::filesystem::copy_options::overwrite_existing);
    std::filesystem::copy_file(dir / "valid.txt", dir / "test.txt",
                               std::filesystem::copy_options::overwrite_existing);
    Benchmark b = load_benchmark(dir);
    CHECK(b.vocab.unseen_relations().empty());
}

TEST_CASE("triple files round-trip through write and read") {
    auto dir = testing::scratch_dir("kg-roundtrip");
    testing::write_toy_benchmark(dir, 5);
    Vocabulary v;
    TripleList original = read_triples(dir / "train.txt", v);
    write_triples(dir / "copy.txt", original, v);
    Vocabulary v2 = v;
    TripleList again = read_triples(dir / "copy.txt", v2);
    CHECK(again == original);
    CHECK(v2.num_entities() == v.num_entities());
}

TEST_CASE("malformed input is a data error with its location") {
    auto dir = testing::scratch_dir("kg-bad");
    Vocabulary v;
    {
        std::ofstream(dir / "bad.txt") << "a\tr\tb\n\na\tr\n";
    }
    try {
        read_triples(dir / "bad.txt", v);
        FAIL("expected a DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("bad.txt:3") != std::string::npos);
    }
    {
        std::ofstream(dir / "crlf.txt") << "a\tr\tb\r\n";
    }
    CHECK(read_triples(dir / "crlf.txt", v).size() == 1);
    CHECK(v.entity_id("b") == 1);
    CHECK_THROWS_AS(load_benchmark(dir / "missing"), DataError);
    CHECK_THROWS_AS(v.entity_id("nope"), DataError);
}

TEST_CASE("an empty training file is rejected") {
    auto dir = testing::scratch_dir("kg-empty");
    for (const char* f : {"train.txt", "valid.txt", "test_graph.txt", "test.txt"}) std::ofstream(dir / f);
    CHECK_THROWS_AS(load_benchmark(dir), DataError);
}
