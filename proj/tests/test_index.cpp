#include "doctest.h"

#include <cstdio>
#include <random>

#include "mmict/index.hpp"

using namespace mmict;

namespace {

EmbeddingTable random_table(int n, int dim, std::uint64_t seed) {
    EmbeddingTable t;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    for (int i = 0; i < n; ++i) {
        std::vector<double> v(dim);
        for (double& x : v) x = nd(rng);
        t.add("p" + std::to_string(i), std::move(v));
    }
    return t;
}

// full-sort oracle
std::vector<std::string> brute_force_topk(const EmbeddingTable& t, const std::vector<double>& q,
                                          int k) {
    std::vector<std::pair<std::string, double>> scored;
    for (size_t i = 0; i < t.size(); ++i) {
        double s = 0.0;
        for (int j = 0; j < t.dim; ++j) s += t.vectors[i][j] * q[j];
        scored.emplace_back(t.ids[i], s);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    std::vector<std::string> ids;
    for (int i = 0; i < k && i < static_cast<int>(scored.size()); ++i) ids.push_back(scored[i].first);
    return ids;
}

}  // namespace

TEST_CASE("empty dense index returns empty results") {
    auto idx = DenseIndex::build(EmbeddingTable{});
    CHECK(idx.search({1.0, 2.0}, 5).entries.empty());
}

TEST_CASE("search finds an exact stored row first") {
    EmbeddingTable t;
    t.add("a", {1.0, 0.0, 0.0});
    t.add("b", {0.0, 1.0, 0.0});
    t.add("c", {0.0, 0.0, 1.0});
    auto idx = DenseIndex::build(t);
    auto res = idx.search({0.0, 1.0, 0.0}, 2);
    REQUIRE(res.entries.size() == 2);
    CHECK(res.entries[0].first == "b");
    CHECK(res.entries[0].second == doctest::Approx(1.0));
}

TEST_CASE("dense search matches the full-sort oracle") {
    auto t = random_table(500, 16, 21);
    auto idx = DenseIndex::build(t);
    std::mt19937_64 rng(22);
    std::normal_distribution<double> nd;
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> q(16);
        for (double& x : q) x = nd(rng);
        auto res = idx.search(q, 10);
        auto oracle = brute_force_topk(t, q, 10);
        REQUIRE(res.entries.size() == oracle.size());
        for (size_t i = 0; i < oracle.size(); ++i) CHECK(res.entries[i].first == oracle[i]);
    }
}

TEST_CASE("ties in dense search break by passage id ascending") {
    EmbeddingTable t;
    t.add("z", {1.0, 0.0});
    t.add("a", {1.0, 0.0});
    t.add("m", {1.0, 0.0});
    auto idx = DenseIndex::build(t);
    auto res = idx.search({1.0, 0.0}, 3);
    CHECK(res.entries[0].first == "a");
    CHECK(res.entries[1].first == "m");
    CHECK(res.entries[2].first == "z");
}

TEST_CASE("K larger than the index returns everything, K=0 is an error") {
    auto t = random_table(5, 4, 30);
    auto idx = DenseIndex::build(t);
    CHECK(idx.search({1, 0, 0, 0}, 50).entries.size() == 5);
    CHECK_THROWS_WITH_AS(idx.search({1, 0, 0, 0}, 0), doctest::Contains("K must be positive"),
                         std::invalid_argument);
}

TEST_CASE("dense index persists and reloads with identical results") {
    auto t = random_table(50, 8, 40);
    auto idx = DenseIndex::build(t);
    std::string path = "test_dense.jsonl";
    idx.save(path);
    auto idx2 = DenseIndex::load(path);
    std::vector<double> q{1, -1, 0.5, 0, 2, -2, 0.25, 1};
    auto a = idx.search(q, 10);
    auto b = idx2.search(q, 10);
    REQUIRE(a.entries.size() == b.entries.size());
    for (size_t i = 0; i < a.entries.size(); ++i) {
        CHECK(a.entries[i].first == b.entries[i].first);
        CHECK(a.entries[i].second == b.entries[i].second);
    }
    std::remove(path.c_str());
}

TEST_CASE("bm25 hand example matches the formula") {
    std::vector<Passage> docs;
    docs.push_back({"doc1", "doc1", "a a b", 3, std::nullopt});
    docs.push_back({"doc2", "doc2", "b c", 2, std::nullopt});
    auto idx = Bm25Index::build(docs, 0.9, 0.4);
    auto res = idx.search("a", 10);
    REQUIRE(res.entries.size() == 1);
    CHECK(res.entries[0].first == "doc1");
    double expected = std::log((2.0 - 1.0 + 0.5) / (1.0 + 0.5) + 1.0) * (2.0 * 1.9) /
                      (2.0 + 0.9 * (1.0 - 0.4 + 0.4 * 3.0 / 2.5));
    CHECK(res.entries[0].second == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("query terms absent from the corpus contribute nothing") {
    std::vector<Passage> docs;
    docs.push_back({"doc1", "doc1", "red green blue", 3, std::nullopt});
    auto idx = Bm25Index::build(docs);
    CHECK(idx.search("purple", 10).entries.empty());
    auto res = idx.search("purple green", 10);
    REQUIRE(res.entries.size() == 1);
    CHECK(res.entries[0].second == doctest::Approx(idx.search("green", 10).entries[0].second));
}

TEST_CASE("identical documents receive identical bm25 scores") {
    std::vector<Passage> base;
    base.push_back({"p0", "p0", "apple banana apple", 3, std::nullopt});
    base.push_back({"p1", "p1", "banana cherry", 2, std::nullopt});
    base.push_back({"p2", "p2", "cherry apple date", 3, std::nullopt});
    auto doubled = base;
    for (const auto& p : base) {
        Passage copy = p;
        copy.passage_id = p.passage_id + "_dup";
        doubled.push_back(copy);
    }
    auto idx = Bm25Index::build(doubled);
    for (const auto& query : {"apple", "banana cherry", "date"}) {
        auto res = idx.search(query, 10);
        std::map<std::string, double> by_id(res.entries.begin(), res.entries.end());
        for (const auto& [pid, score] : by_id) {
            if (pid.size() > 4 && pid.substr(pid.size() - 4) == "_dup") continue;
            auto dup = by_id.find(pid + "_dup");
            REQUIRE(dup != by_id.end());
            CHECK(dup->second == score);
        }
    }
}

TEST_CASE("bm25 monotone in term frequency at fixed length") {
    std::vector<Passage> low, high;
    low.push_back({"d", "d", "x y y y", 4, std::nullopt});
    low.push_back({"e", "e", "z z z z", 4, std::nullopt});
    high.push_back({"d", "d", "x x y y", 4, std::nullopt});
    high.push_back({"e", "e", "z z z z", 4, std::nullopt});
    auto s1 = Bm25Index::build(low).search("x", 10);
    auto s2 = Bm25Index::build(high).search("x", 10);
    CHECK(s2.entries[0].second > s1.entries[0].second);
}

TEST_CASE("bm25 index persists and reloads") {
    std::vector<Passage> docs;
    docs.push_back({"p0", "p0", "alpha beta gamma", 3, std::nullopt});
    docs.push_back({"p1", "p1", "beta delta", 2, std::nullopt});
    auto idx = Bm25Index::build(docs);
    std::string path = "test_bm25.jsonl";
    idx.save(path);
    auto idx2 = Bm25Index::load(path);
    auto a = idx.search("beta gamma", 10);
    auto b = idx2.search("beta gamma", 10);
    REQUIRE(a.entries.size() == b.entries.size());
    for (size_t i = 0; i < a.entries.size(); ++i) {
        CHECK(a.entries[i].first == b.entries[i].first);
        CHECK(a.entries[i].second == doctest::Approx(b.entries[i].second).epsilon(1e-15));
    }
    std::remove(path.c_str());
}

TEST_CASE("znorm normalizes, is idempotent, and flags constants") {
    auto z = znorm({1.0, 3.0});
    CHECK(z[0] == doctest::Approx(-1.0));
    CHECK(z[1] == doctest::Approx(1.0));
    auto z2 = znorm(z);
    CHECK(z2[0] == doctest::Approx(z[0]).epsilon(1e-12));
    bool flag = false;
    auto c = znorm({5.0, 5.0, 5.0}, &flag);
    CHECK(flag);
    CHECK(c == std::vector<double>{0.0, 0.0, 0.0});
    CHECK_THROWS_AS(znorm({1.0}), std::invalid_argument);
}
