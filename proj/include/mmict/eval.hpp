#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "mmict/run.hpp"

namespace mmict {

// Lowercase, punctuation to spaces, article tokens {a, an, the} removed,
// whitespace collapsed. Idempotent.
inline std::string normalize_answer(const std::string& s) {
    std::string spaced;
    for (unsigned char c : s) {
        if (std::isalnum(c))
            spaced.push_back(static_cast<char>(std::tolower(c)));
        else
            spaced.push_back(' ');
    }
    std::istringstream in(spaced);
    std::string tok, out;
    while (in >> tok) {
        if (tok == "a" || tok == "an" || tok == "the") continue;
        if (!out.empty()) out.push_back(' ');
        out += tok;
    }
    return out;
}

inline std::vector<std::string> answer_tokens(const std::string& s) {
    std::istringstream in(normalize_answer(s));
    std::vector<std::string> out;
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

struct AnswerKey {
    std::string question_id;
    std::string gold;
    std::vector<std::string> aliases;

    std::vector<std::string> all_answers() const {
        std::vector<std::string> out{gold};
        out.insert(out.end(), aliases.begin(), aliases.end());
        return out;
    }
};

inline nlohmann::json to_json(const AnswerKey& k) {
    return {{"question_id", k.question_id}, {"gold", k.gold}, {"aliases", k.aliases}};
}

inline AnswerKey answer_key_from_json(const nlohmann::json& j) {
    AnswerKey k;
    k.question_id = j.at("question_id").get<std::string>();
    k.gold = j.at("gold").get<std::string>();
    if (j.contains("aliases")) k.aliases = j["aliases"].get<std::vector<std::string>>();
    return k;
}

namespace detail {
inline bool contains_token_seq(const std::vector<std::string>& haystack,
                               const std::vector<std::string>& needle) {
    if (needle.empty() || needle.size() > haystack.size()) return false;
    for (size_t i = 0; i + needle.size() <= haystack.size(); ++i) {
        bool ok = true;
        for (size_t j = 0; j < needle.size(); ++j)
            if (haystack[i + j] != needle[j]) {
                ok = false;
                break;
            }
        if (ok) return true;
    }
    return false;
}
}  // namespace detail

// Distant supervision: a passage is relevant iff it contains the
// normalized gold answer (or an alias) at token boundaries.
inline bool passage_relevance(const std::string& passage_text, const AnswerKey& key,
                              bool use_aliases = true) {
    auto hay = answer_tokens(passage_text);
    if (detail::contains_token_seq(hay, answer_tokens(key.gold))) return true;
    if (use_aliases)
        for (const auto& alias : key.aliases)
            if (detail::contains_token_seq(hay, answer_tokens(alias))) return true;
    return false;
}

// question_id -> relevant passage_ids. Holds every known question, so an
// empty set means "no relevant passage anywhere".
struct Qrels {
    std::map<std::string, std::set<std::string>> relevant;

    bool is_relevant(const std::string& qid, const std::string& pid) const {
        auto it = relevant.find(qid);
        return it != relevant.end() && it->second.count(pid) > 0;
    }
};

template <typename PassageRange>
inline Qrels build_qrels(const PassageRange& passages, const std::vector<AnswerKey>& keys,
                         bool use_aliases = true) {
    Qrels q;
    for (const auto& key : keys) {
        auto& rel = q.relevant[key.question_id];
        for (const auto& p : passages)
            if (passage_relevance(p.text, key, use_aliases)) rel.insert(p.passage_id);
    }
    return q;
}

inline void save_qrels(const Qrels& qrels, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write qrels to '" + path + "'");
    for (const auto& [qid, rel] : qrels.relevant) {
        if (rel.empty()) out << qid << " - 0\n";
        for (const auto& pid : rel) out << qid << " " << pid << " 1\n";
    }
}

inline Qrels load_qrels(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read qrels from '" + path + "'");
    Qrels q;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string qid, pid;
        int rel;
        if (!(ls >> qid >> pid >> rel)) throw std::runtime_error("malformed qrels line: '" + line + "'");
        q.relevant[qid];
        if (rel > 0 && pid != "-") q.relevant[qid].insert(pid);
    }
    return q;
}

// ---------------------------------------------------------------------------
// Ranking metrics. Evaluated over every question in the qrels; a question
// missing from the run scores 0. A run question unknown to the qrels is an
// error.

struct MetricResult {
    std::map<std::string, double> per_question;
    double mean = 0.0;
};

namespace detail {
inline void check_run_questions(const RankedRun& run, const Qrels& qrels) {
    for (const auto& [qid, list] : run)
        if (!qrels.relevant.count(qid))
            throw std::runtime_error("run references unknown question '" + qid + "'");
}

template <typename PerQuestion>
inline MetricResult over_questions(const RankedRun& run, const Qrels& qrels, PerQuestion fn) {
    check_run_questions(run, qrels);
    MetricResult res;
    for (const auto& [qid, rel] : qrels.relevant) {
        double v = 0.0;
        auto it = run.find(qid);
        if (it != run.end()) v = fn(it->second, rel);
        res.per_question[qid] = v;
        res.mean += v;
    }
    if (!qrels.relevant.empty()) res.mean /= double(qrels.relevant.size());
    return res;
}
}  // namespace detail

inline MetricResult mrr_at_k(const RankedRun& run, const Qrels& qrels, int k) {
    if (k < 1) throw std::invalid_argument("K must be positive");
    return detail::over_questions(run, qrels,
                                  [k](const ScoredList& list, const std::set<std::string>& rel) {
                                      int rank = 1;
                                      for (const auto& [pid, score] : list.entries) {
                                          if (rank > k) break;
                                          if (rel.count(pid)) return 1.0 / rank;
                                          ++rank;
                                      }
                                      return 0.0;
                                  });
}

inline MetricResult p_at_k(const RankedRun& run, const Qrels& qrels, int k) {
    if (k < 1) throw std::invalid_argument("K must be positive");
    return detail::over_questions(run, qrels,
                                  [k](const ScoredList& list, const std::set<std::string>& rel) {
                                      int rank = 1, hits = 0;
                                      for (const auto& [pid, score] : list.entries) {
                                          if (rank > k) break;
                                          if (rel.count(pid)) ++hits;
                                          ++rank;
                                      }
                                      return double(hits) / double(k);
                                  });
}

inline MetricResult hits_at_k(const RankedRun& run, const Qrels& qrels, int k) {
    if (k < 1) throw std::invalid_argument("K must be positive");
    return detail::over_questions(run, qrels,
                                  [k](const ScoredList& list, const std::set<std::string>& rel) {
                                      int rank = 1;
                                      for (const auto& [pid, score] : list.entries) {
                                          if (rank > k) break;
                                          if (rel.count(pid)) return 1.0;
                                          ++rank;
                                      }
                                      return 0.0;
                                  });
}

// Two-sided paired randomization test. Exact enumeration of all 2^n
// assignments when n <= 12, Monte Carlo otherwise. The identity
// permutation always counts, so p > 0.
inline double fisher_randomization(const std::vector<double>& a, const std::vector<double>& b,
                                   long iterations, std::uint64_t seed) {
    if (a.size() != b.size())
        throw std::invalid_argument("fisher_randomization: paired score vectors differ in length");
    if (a.size() < 2) throw std::invalid_argument("fisher_randomization: need n >= 2");
    size_t n = a.size();
    std::vector<double> diff(n);
    double observed = 0.0;
    for (size_t i = 0; i < n; ++i) {
        diff[i] = a[i] - b[i];
        observed += diff[i];
    }
    observed = std::abs(observed / double(n));
    const double tol = 1e-12;

    if (n <= 12) {
        long total = 1L << n;
        long count = 0;
        for (long mask = 0; mask < total; ++mask) {
            double s = 0.0;
            for (size_t i = 0; i < n; ++i) s += (mask >> i & 1) ? -diff[i] : diff[i];
            if (std::abs(s / double(n)) >= observed - tol) ++count;
        }
        return double(count) / double(total);
    }

    std::mt19937_64 rng(seed);
    long count = 0;
    for (long it = 0; it < iterations; ++it) {
        double s = 0.0;
        std::uint64_t bits = 0;
        int avail = 0;
        for (size_t i = 0; i < n; ++i) {
            if (avail == 0) {
                bits = rng();
                avail = 64;
            }
            s += (bits & 1) ? -diff[i] : diff[i];
            bits >>= 1;
            --avail;
        }
        if (std::abs(s / double(n)) >= observed - tol) ++count;
    }
    return double(count) / double(iterations);
}

// ---------------------------------------------------------------------------
// Answer scoring

inline bool exact_match(const std::string& prediction, const AnswerKey& key) {
    std::string p = normalize_answer(prediction);
    for (const auto& ans : key.all_answers())
        if (p == normalize_answer(ans)) return true;
    return false;
}

namespace detail {
inline double f1_tokens(const std::vector<std::string>& pred, const std::vector<std::string>& ref) {
    if (pred.empty() && ref.empty()) return 1.0;
    if (pred.empty() || ref.empty()) return 0.0;
    std::map<std::string, int> counts;
    for (const auto& t : ref) ++counts[t];
    int common = 0;
    for (const auto& t : pred) {
        auto it = counts.find(t);
        if (it != counts.end() && it->second > 0) {
            ++common;
            --it->second;
        }
    }
    if (common == 0) return 0.0;
    double precision = double(common) / double(pred.size());
    double recall = double(common) / double(ref.size());
    return 2.0 * precision * recall / (precision + recall);
}
}  // namespace detail

// Bag-of-words F1 against the best of gold + aliases.
inline double f1_bow(const std::string& prediction, const AnswerKey& key) {
    auto pred = answer_tokens(prediction);
    double best = 0.0;
    for (const auto& ans : key.all_answers())
        best = std::max(best, detail::f1_tokens(pred, answer_tokens(ans)));
    return best;
}

}  // namespace mmict
