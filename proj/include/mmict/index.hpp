#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <queue>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "mmict/backend.hpp"
#include "mmict/eval.hpp"
#include "mmict/run.hpp"

namespace mmict {

// Exhaustive maximum-inner-product index. Immutable after build; exact by
// construction.
class DenseIndex {
  public:
    static DenseIndex build(const EmbeddingTable& table) {
        DenseIndex idx;
        idx.dim_ = table.dim;
        idx.ids_ = table.ids;
        std::unordered_map<std::string, int> seen;
        for (size_t i = 0; i < table.ids.size(); ++i) {
            if (!seen.emplace(table.ids[i], 1).second)
                throw std::runtime_error("duplicate passage id '" + table.ids[i] + "' in index");
            if (static_cast<int>(table.vectors[i].size()) != idx.dim_)
                throw std::runtime_error("embedding dimension mismatch at id '" + table.ids[i] +
                                         "'");
            for (double v : table.vectors[i])
                if (!std::isfinite(v))
                    throw std::runtime_error("non-finite embedding at id '" + table.ids[i] + "'");
        }
        idx.data_.reserve(table.size() * static_cast<size_t>(table.dim));
        for (const auto& v : table.vectors) idx.data_.insert(idx.data_.end(), v.begin(), v.end());
        return idx;
    }

    int dim() const { return dim_; }
    size_t size() const { return ids_.size(); }
    const std::vector<std::string>& ids() const { return ids_; }

    ScoredList search(const std::vector<double>& query, int k,
                      const std::string& question_id = "") const {
        if (k < 1) throw std::invalid_argument("K must be positive");
        if (static_cast<int>(query.size()) != dim_ && !ids_.empty())
            throw std::invalid_argument("query dimension " + std::to_string(query.size()) +
                                        " does not match index dimension " + std::to_string(dim_));
        // min-heap on (score, reversed id order): the weakest kept entry on top
        auto worse = [](const std::pair<double, const std::string*>& a,
                        const std::pair<double, const std::string*>& b) {
            if (a.first != b.first) return a.first > b.first;
            return *a.second < *b.second;
        };
        std::priority_queue<std::pair<double, const std::string*>,
                            std::vector<std::pair<double, const std::string*>>, decltype(worse)>
            heap(worse);
        for (size_t i = 0; i < ids_.size(); ++i) {
            const double* row = &data_[i * static_cast<size_t>(dim_)];
            double s = 0.0;
            for (int j = 0; j < dim_; ++j) s += row[j] * query[j];
            heap.emplace(s, &ids_[i]);
            if (static_cast<int>(heap.size()) > k) heap.pop();
        }
        ScoredList out;
        out.question_id = question_id;
        out.entries.resize(heap.size());
        for (size_t i = heap.size(); i-- > 0;) {
            out.entries[i] = {*heap.top().second, heap.top().first};
            heap.pop();
        }
        return out;
    }

    void save(const std::string& path) const {
        EmbeddingTable t;
        t.dim = dim_;
        for (size_t i = 0; i < ids_.size(); ++i) {
            std::vector<double> v(data_.begin() + i * dim_, data_.begin() + (i + 1) * dim_);
            t.add(ids_[i], std::move(v));
        }
        save_precomputed(t, path);
    }

    static DenseIndex load(const std::string& path) { return build(load_precomputed(path)); }

  private:
    int dim_ = 0;
    std::vector<std::string> ids_;
    std::vector<double> data_;  // row-major, size() x dim
};

// ---------------------------------------------------------------------------
// Okapi BM25 inverted index. Tokenization shares the lowercase/punctuation
// pipeline of answer normalization but keeps article tokens, so single-word
// terms like "a" stay searchable.

class Bm25Index {
  public:
    double k1 = 0.9;
    double b = 0.4;

    static Bm25Index build(const std::vector<Passage>& passages, double k1 = 0.9, double b = 0.4) {
        Bm25Index idx;
        idx.k1 = k1;
        idx.b = b;
        for (const auto& p : passages) {
            auto toks = tokenize_lower(p.text);
            int doc = static_cast<int>(idx.doc_ids_.size());
            idx.doc_ids_.push_back(p.passage_id);
            idx.doc_lengths_.push_back(static_cast<long>(toks.size()));
            std::map<std::string, int> tf;
            for (const auto& t : toks) ++tf[t];
            for (const auto& [term, freq] : tf) idx.postings_[term].emplace_back(doc, freq);
        }
        idx.avg_doc_length_ = 0.0;
        for (long l : idx.doc_lengths_) idx.avg_doc_length_ += double(l);
        if (!idx.doc_lengths_.empty()) idx.avg_doc_length_ /= double(idx.doc_lengths_.size());
        return idx;
    }

    size_t doc_count() const { return doc_ids_.size(); }
    double avg_doc_length() const { return avg_doc_length_; }

    double idf(const std::string& term) const {
        auto it = postings_.find(term);
        double df = it == postings_.end() ? 0.0 : double(it->second.size());
        double n = double(doc_ids_.size());
        return std::log((n - df + 0.5) / (df + 0.5) + 1.0);
    }

    ScoredList search(const std::string& query, int k, const std::string& question_id = "") const {
        if (k < 1) throw std::invalid_argument("K must be positive");
        std::unordered_map<int, double> scores;
        for (const auto& term : tokenize_lower(query)) {
            auto it = postings_.find(term);
            if (it == postings_.end()) continue;  // absent terms contribute 0
            double w = idf(term);
            for (const auto& [doc, tf] : it->second) {
                double norm = 1.0 - b + b * double(doc_lengths_[doc]) / avg_doc_length_;
                scores[doc] += w * double(tf) * (k1 + 1.0) / (double(tf) + k1 * norm);
            }
        }
        ScoredList out;
        out.question_id = question_id;
        out.entries.reserve(scores.size());
        for (const auto& [doc, s] : scores) out.entries.emplace_back(doc_ids_[doc], s);
        out.sort_entries();
        if (static_cast<int>(out.entries.size()) > k) out.entries.resize(k);
        return out;
    }

    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw std::runtime_error("cannot write index to '" + path + "'");
        nlohmann::json meta{{"k1", k1},
                            {"b", b},
                            {"doc_ids", doc_ids_},
                            {"doc_lengths", doc_lengths_}};
        out << meta.dump() << "\n";
        for (const auto& [term, plist] : postings_) {
            nlohmann::json j;
            j["term"] = term;
            nlohmann::json arr = nlohmann::json::array();
            for (const auto& [doc, tf] : plist) arr.push_back({doc, tf});
            j["postings"] = std::move(arr);
            out << j.dump() << "\n";
        }
    }

    static Bm25Index load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot read index from '" + path + "'");
        std::string line;
        if (!std::getline(in, line)) throw std::runtime_error("empty index file '" + path + "'");
        auto meta = nlohmann::json::parse(line);
        Bm25Index idx;
        idx.k1 = meta.at("k1").get<double>();
        idx.b = meta.at("b").get<double>();
        idx.doc_ids_ = meta.at("doc_ids").get<std::vector<std::string>>();
        idx.doc_lengths_ = meta.at("doc_lengths").get<std::vector<long>>();
        idx.avg_doc_length_ = 0.0;
        for (long l : idx.doc_lengths_) idx.avg_doc_length_ += double(l);
        if (!idx.doc_lengths_.empty()) idx.avg_doc_length_ /= double(idx.doc_lengths_.size());
        while (std::getline(in, line)) {
            if (trim_copy(line).empty()) continue;
            auto j = nlohmann::json::parse(line);
            auto& plist = idx.postings_[j.at("term").get<std::string>()];
            for (const auto& e : j.at("postings")) plist.emplace_back(e[0].get<int>(), e[1].get<int>());
        }
        return idx;
    }

  private:
    std::map<std::string, std::vector<std::pair<int, int>>> postings_;  // term -> (doc, tf)
    std::vector<std::string> doc_ids_;
    std::vector<long> doc_lengths_;
    double avg_doc_length_ = 0.0;
};

// Zero-mean, unit population variance. Constant input maps to all zeros
// and sets *constant_input.
inline std::vector<double> znorm(const std::vector<double>& scores, bool* constant_input = nullptr) {
    if (scores.size() < 2) throw std::invalid_argument("znorm requires at least 2 scores");
    double mean = 0.0;
    for (double s : scores) mean += s;
    mean /= double(scores.size());
    double var = 0.0;
    for (double s : scores) var += (s - mean) * (s - mean);
    var /= double(scores.size());
    std::vector<double> out(scores.size());
    if (var <= 0.0) {
        if (constant_input) *constant_input = true;
        return out;
    }
    if (constant_input) *constant_input = false;
    double inv = 1.0 / std::sqrt(var);
    for (size_t i = 0; i < scores.size(); ++i) out[i] = (scores[i] - mean) * inv;
    return out;
}

}  // namespace mmict
