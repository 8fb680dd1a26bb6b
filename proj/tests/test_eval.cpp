#include "doctest.h"

#include <random>

#include "mmict/corpus.hpp"
#include "mmict/eval.hpp"

using namespace mmict;

TEST_CASE("normalize_answer applies all three rules") {
    CHECK(normalize_answer("The Beatles!") == "beatles");
    CHECK(normalize_answer("1969") == "1969");
    CHECK(normalize_answer("An  Officer—and a Gentleman") == "officer and gentleman");
}

TEST_CASE("normalize_answer is idempotent") {
    std::mt19937_64 rng(1);
    const std::string alphabet = "aAbB tT.,!-é123";
    for (int i = 0; i < 200; ++i) {
        std::string s;
        int len = int(rng() % 30);
        for (int j = 0; j < len; ++j) s.push_back(alphabet[rng() % alphabet.size()]);
        std::string once = normalize_answer(s);
        CHECK(normalize_answer(once) == once);
    }
}

TEST_CASE("passage relevance matches at token boundaries") {
    AnswerKey bromley{"q1", "Bromley", {}};
    CHECK(passage_relevance("returned to Parliament in the by-election in Bromley.", bromley));
    AnswerKey year{"q2", "1969", {}};
    CHECK(passage_relevance("operated as a cruise ship from 1969 to 2008", year));
    AnswerKey art{"q3", "art", {}};
    CHECK_FALSE(passage_relevance("this is partly true", art));
    CHECK(passage_relevance("modern art is here", art));
}

TEST_CASE("passage relevance honors aliases with a disable flag") {
    AnswerKey key{"q", "Queen Elizabeth 2", {"QE2"}};
    CHECK(passage_relevance("often referred to simply as QE2, is a floating hotel", key));
    CHECK_FALSE(passage_relevance("often referred to simply as QE2", key, false));
}

TEST_CASE("build_qrels derives relevance from answers") {
    std::vector<Passage> kb;
    kb.push_back({"p1", "d1", "Macmillan returned in the by-election in Bromley.", 0, std::nullopt});
    kb.push_back({"p2", "d2", "QE2 sailed from 1969 to 2008.", 0, std::nullopt});
    kb.push_back({"p3", "d3", "Nothing relevant here.", 0, std::nullopt});
    std::vector<AnswerKey> keys{{"q1", "Bromley", {}}, {"q2", "1969", {}}, {"q3", "zanzibar", {}}};
    auto qrels = build_qrels(kb, keys);
    CHECK(qrels.is_relevant("q1", "p1"));
    CHECK(qrels.is_relevant("q2", "p2"));
    CHECK(qrels.relevant.at("q3").empty());

    // alias-only match
    std::vector<AnswerKey> alias_keys{{"qa", "Queen Elizabeth 2", {"QE2"}}};
    auto q2 = build_qrels(kb, alias_keys);
    CHECK(q2.is_relevant("qa", "p2"));
}

namespace {
RankedRun make_run(std::vector<std::pair<std::string, std::vector<std::string>>> lists) {
    RankedRun run;
    for (auto& [qid, pids] : lists) {
        ScoredList l;
        l.question_id = qid;
        double score = double(pids.size());
        for (auto& pid : pids) l.entries.emplace_back(pid, score--);
        run[qid] = l;
    }
    return run;
}
}  // namespace

TEST_CASE("ranking metrics on simple fixtures") {
    Qrels qrels;
    qrels.relevant["q1"] = {"r"};
    auto run = make_run({{"q1", {"a", "b", "c", "r", "d"}}});
    CHECK(mrr_at_k(run, qrels, 100).mean == doctest::Approx(0.25));
    CHECK(mrr_at_k(run, qrels, 3).mean == 0.0);

    Qrels q3;
    q3.relevant["q"] = {"r1", "r2", "r3"};
    std::vector<std::string> ids;
    for (int i = 0; i < 20; ++i) ids.push_back("f" + std::to_string(i));
    ids[4] = "r1";
    ids[9] = "r2";
    ids[19] = "r3";
    auto run3 = make_run({{"q", ids}});
    CHECK(p_at_k(run3, q3, 20).mean == doctest::Approx(0.15));
    CHECK(hits_at_k(run3, q3, 20).mean == 1.0);
}

TEST_CASE("two-question fixture with ranks (1, none)") {
    Qrels qrels;
    qrels.relevant["q1"] = {"rel"};
    qrels.relevant["q2"] = {};
    auto run = make_run({{"q1", {"rel", "x"}}, {"q2", {"y", "z"}}});
    CHECK(mrr_at_k(run, qrels, 100).mean == doctest::Approx(0.5));
    CHECK(hits_at_k(run, qrels, 20).mean == doctest::Approx(0.5));
    CHECK(p_at_k(run, qrels, 1).mean == doctest::Approx(0.5));
}

TEST_CASE("run referencing an unknown question is an error") {
    Qrels qrels;
    qrels.relevant["q1"] = {"rel"};
    auto run = make_run({{"mystery", {"a"}}});
    CHECK_THROWS_WITH_AS(mrr_at_k(run, qrels, 10), doctest::Contains("mystery"),
                         std::runtime_error);
}

TEST_CASE("P@1 equals Hits@1 on random runs") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 100; ++trial) {
        Qrels qrels;
        RankedRun run;
        int nq = 3 + int(rng() % 5);
        for (int q = 0; q < nq; ++q) {
            std::string qid = "q" + std::to_string(q);
            ScoredList l;
            l.question_id = qid;
            int np = 5 + int(rng() % 10);
            for (int p = 0; p < np; ++p) {
                std::string pid = "p" + std::to_string(p);
                l.entries.emplace_back(pid, double(np - p));
                if (rng() % 4 == 0) qrels.relevant[qid].insert(pid);
            }
            qrels.relevant[qid];
            run[qid] = l;
        }
        CHECK(p_at_k(run, qrels, 1).mean == hits_at_k(run, qrels, 1).mean);
    }
}

TEST_CASE("MRR non-increasing and Hits non-decreasing in K") {
    std::mt19937_64 rng(23);
    Qrels qrels;
    RankedRun run;
    for (int q = 0; q < 10; ++q) {
        std::string qid = "q" + std::to_string(q);
        ScoredList l;
        for (int p = 0; p < 30; ++p) {
            std::string pid = "p" + std::to_string(p);
            l.entries.emplace_back(pid, double(30 - p));
            if (rng() % 7 == 0) qrels.relevant[qid].insert(pid);
        }
        qrels.relevant[qid];
        run[qid] = l;
    }
    double prev_mrr = 0.0, prev_hits = 0.0;
    for (int k : {1, 2, 5, 10, 20, 30}) {
        double m = mrr_at_k(run, qrels, k).mean;
        double h = hits_at_k(run, qrels, k).mean;
        CHECK(m >= prev_mrr - 1e-12);
        CHECK(h >= prev_hits - 1e-12);
        prev_mrr = m;
        prev_hits = h;
    }
}

TEST_CASE("fisher randomization exact cases") {
    std::vector<double> a{0.2, 0.4, 0.6, 0.8, 1.0};
    CHECK(fisher_randomization(a, a, 1000, 1) == doctest::Approx(1.0));

    std::vector<double> b(10), c(10);
    for (int i = 0; i < 10; ++i) {
        b[i] = 0.5;
        c[i] = b[i] + 1.0;
    }
    CHECK(fisher_randomization(c, b, 0, 1) == doctest::Approx(2.0 / 1024.0));
}

TEST_CASE("fisher monte carlo agrees with exact enumeration") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 3; ++trial) {
        int n = 8 + trial;
        std::vector<double> a(n), b(n);
        for (int i = 0; i < n; ++i) {
            a[i] = u(rng);
            b[i] = u(rng);
        }
        double exact = fisher_randomization(a, b, 0, 1);
        // force the Monte-Carlo path by padding to n > 12
        std::vector<double> a_pad = a, b_pad = b;
        while (a_pad.size() <= 12) {
            a_pad.push_back(0.5);  // identical pairs do not change the diff vector support
            b_pad.push_back(0.5);
        }
        double mc = fisher_randomization(a_pad, b_pad, 100000, 7);
        double exact_pad = 0.0;
        {
            // exact over padded length via direct enumeration (n <= 16 here)
            size_t m = a_pad.size();
            std::vector<double> diff(m);
            double obs = 0.0;
            for (size_t i = 0; i < m; ++i) {
                diff[i] = a_pad[i] - b_pad[i];
                obs += diff[i];
            }
            obs = std::abs(obs / double(m));
            long total = 1L << m, count = 0;
            for (long mask = 0; mask < total; ++mask) {
                double s = 0.0;
                for (size_t i = 0; i < m; ++i) s += (mask >> i & 1) ? -diff[i] : diff[i];
                if (std::abs(s / double(m)) >= obs - 1e-12) ++count;
            }
            exact_pad = double(count) / double(total);
        }
        CHECK(std::abs(mc - exact_pad) < 0.02);
        CHECK(exact >= 0.0);
    }
}

TEST_CASE("fisher input validation") {
    CHECK_THROWS_AS(fisher_randomization({1.0, 2.0}, {1.0}, 10, 1), std::invalid_argument);
    CHECK_THROWS_AS(fisher_randomization({1.0}, {1.0}, 10, 1), std::invalid_argument);
}

TEST_CASE("exact match and bag-of-words F1") {
    AnswerKey bromley{"q", "Bromley", {}};
    CHECK(exact_match("the Bromley", bromley));
    CHECK(f1_bow("the Bromley", bromley) == doctest::Approx(1.0));

    AnswerKey qe{"q", "Queen Elizabeth 2", {}};
    CHECK_FALSE(exact_match("queen elizabeth", qe));
    CHECK(f1_bow("queen elizabeth", qe) == doctest::Approx(0.8));

    AnswerKey gold{"q", "something", {}};
    CHECK_FALSE(exact_match("", gold));
    CHECK(f1_bow("", gold) == 0.0);
}

TEST_CASE("EM implies F1 of 1 on random pairs") {
    std::mt19937_64 rng(37);
    const std::vector<std::string> words{"alpha", "beta", "the", "gamma", "an", "delta", "42"};
    for (int i = 0; i < 1000; ++i) {
        std::string s;
        int len = 1 + int(rng() % 4);
        for (int j = 0; j < len; ++j) s += (j ? " " : "") + words[rng() % words.size()];
        AnswerKey key{"q", s, {}};
        std::string pred = rng() % 2 ? s : s + " extra";
        if (exact_match(pred, key)) CHECK(f1_bow(pred, key) == doctest::Approx(1.0));
    }
}

TEST_CASE("F1 symmetry for non-empty token multisets") {
    std::mt19937_64 rng(41);
    const std::vector<std::string> words{"red", "green", "blue", "cyan"};
    for (int i = 0; i < 200; ++i) {
        auto make = [&]() {
            std::string s;
            int len = 1 + int(rng() % 4);
            for (int j = 0; j < len; ++j) s += (j ? " " : "") + words[rng() % words.size()];
            return s;
        };
        std::string x = make(), y = make();
        AnswerKey kx{"q", x, {}}, ky{"q", y, {}};
        CHECK(f1_bow(x, ky) == doctest::Approx(f1_bow(y, kx)));
    }
}

TEST_CASE("qrels file round-trip") {
    Qrels q;
    q.relevant["q1"] = {"p1", "p2"};
    q.relevant["q2"] = {};
    std::string path = "test_qrels.txt";
    save_qrels(q, path);
    auto back = load_qrels(path);
    CHECK(back.relevant == q.relevant);
    std::remove(path.c_str());
}
