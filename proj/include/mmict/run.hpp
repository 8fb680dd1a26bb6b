#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mmict {

// Per-question ranked candidates, descending by score with deterministic
// tie-breaking by passage_id ascending.
struct ScoredList {
    std::string question_id;
    std::vector<std::pair<std::string, double>> entries;  // (passage_id, score)

    void sort_entries() {
        std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
    }
};

using RankedRun = std::map<std::string, ScoredList>;

// TREC-run style framing: "question_id passage_id rank score tag"
inline void save_run(const RankedRun& run, const std::string& path,
                     const std::string& tag = "mmict") {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write run to '" + path + "'");
    out.precision(17);
    for (const auto& [qid, list] : run) {
        int rank = 1;
        for (const auto& [pid, score] : list.entries)
            out << qid << " " << pid << " " << rank++ << " " << score << " " << tag << "\n";
    }
}

inline RankedRun load_run(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read run from '" + path + "'");
    RankedRun run;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string qid, pid, tag;
        int rank;
        double score;
        if (!(ls >> qid >> pid >> rank >> score))
            throw std::runtime_error("malformed run line: '" + line + "'");
        auto& list = run[qid];
        list.question_id = qid;
        list.entries.emplace_back(pid, score);
    }
    for (auto& [qid, list] : run) list.sort_entries();
    return run;
}

}  // namespace mmict
