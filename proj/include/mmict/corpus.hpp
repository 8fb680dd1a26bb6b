#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "mmict/rng.hpp"

namespace mmict {

struct ImageRef {
    std::string uri;
    std::string format_tag;

    bool operator==(const ImageRef&) const = default;
};

struct Paragraph {
    std::vector<std::string> sentences;
    std::optional<ImageRef> contextual_image;
};

struct MultimodalDocument {
    std::string doc_id;
    std::string title;
    std::optional<ImageRef> infobox_image;
    std::vector<Paragraph> paragraphs;
};

struct Passage {
    std::string passage_id;
    std::string doc_id;
    std::string text;  // title-prefixed
    int word_count = 0;
    std::optional<ImageRef> image;
};

struct IctPair {
    std::string question_text;
    ImageRef question_image;
    std::string passage_text;
    ImageRef passage_image;
    bool leave_in = false;
    std::string source_doc;
};

struct IctConfig {
    double leave_in_prob = 0.10;
    int context_sentences = 4;
};

struct FilterReport {
    std::map<std::string, long> dropped;  // reason -> count

    long total() const {
        long t = 0;
        for (auto& [k, v] : dropped) t += v;
        return t;
    }
};

inline const std::string kTitleSeparator = " [SEP] ";

inline int count_words(const std::string& s) {
    std::istringstream in(s);
    std::string w;
    int n = 0;
    while (in >> w) ++n;
    return n;
}

inline std::string trim_copy(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

// Rule-based sentence splitter: terminal punctuation followed by whitespace
// and an uppercase letter, with an abbreviation stop-list.
inline std::vector<std::string> split_sentences(const std::string& text) {
    static const std::set<std::string> kAbbrev = {"mr",  "mrs", "dr", "prof", "st",  "vs",
                                                  "etc", "jr",  "sr", "no",   "fig", "al",
                                                  "e.g", "i.e", "cf"};
    std::vector<std::string> out;
    size_t start = 0;
    for (size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (c != '.' && c != '!' && c != '?') continue;
        size_t j = i + 1;
        while (j < text.size() && (text[j] == '.' || text[j] == '!' || text[j] == '?')) ++j;
        size_t ws = j;
        while (ws < text.size() && std::isspace(static_cast<unsigned char>(text[ws]))) ++ws;
        if (ws == j) continue;                                   // no whitespace after punct
        if (ws >= text.size()) break;                            // trailing punct, flush below
        if (!std::isupper(static_cast<unsigned char>(text[ws]))) continue;
        if (c == '.') {
            // preceding word, lowercased, with internal periods kept (e.g., i.e)
            size_t we = i;
            size_t wb = we;
            while (wb > 0 && !std::isspace(static_cast<unsigned char>(text[wb - 1]))) --wb;
            std::string word = text.substr(wb, we - wb);
            std::string low;
            for (char wc : word)
                low.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(wc))));
            if (kAbbrev.count(low)) continue;
        }
        std::string sent = trim_copy(text.substr(start, j - start));
        if (!sent.empty()) out.push_back(sent);
        start = ws;
        i = j - 1;
    }
    std::string tail = trim_copy(text.substr(start));
    if (!tail.empty()) out.push_back(tail);
    return out;
}

// ---------------------------------------------------------------------------
// JSON framing (one object per line for corpus files)

inline nlohmann::json to_json(const ImageRef& r) {
    return {{"uri", r.uri}, {"format_tag", r.format_tag}};
}

inline ImageRef image_ref_from_json(const nlohmann::json& j) {
    return ImageRef{j.at("uri").get<std::string>(), j.value("format_tag", "")};
}

inline nlohmann::json to_json(const MultimodalDocument& d) {
    nlohmann::json paragraphs = nlohmann::json::array();
    for (const auto& p : d.paragraphs) {
        nlohmann::json jp;
        jp["sentences"] = p.sentences;
        if (p.contextual_image) jp["contextual_image"] = to_json(*p.contextual_image);
        paragraphs.push_back(std::move(jp));
    }
    nlohmann::json j;
    j["doc_id"] = d.doc_id;
    j["title"] = d.title;
    if (d.infobox_image) j["infobox_image"] = to_json(*d.infobox_image);
    j["paragraphs"] = std::move(paragraphs);
    return j;
}

inline MultimodalDocument document_from_json(const nlohmann::json& j) {
    MultimodalDocument d;
    d.doc_id = j.at("doc_id").get<std::string>();
    d.title = j.at("title").get<std::string>();
    if (d.title.empty()) throw std::invalid_argument("document '" + d.doc_id + "' has empty title");
    if (j.contains("infobox_image") && !j["infobox_image"].is_null())
        d.infobox_image = image_ref_from_json(j["infobox_image"]);
    for (const auto& jp : j.value("paragraphs", nlohmann::json::array())) {
        Paragraph p;
        if (jp.contains("sentences")) {
            for (const auto& s : jp["sentences"]) {
                std::string t = trim_copy(s.get<std::string>());
                if (!t.empty()) p.sentences.push_back(std::move(t));
            }
        } else if (jp.contains("text")) {
            p.sentences = split_sentences(jp["text"].get<std::string>());
        }
        if (jp.contains("contextual_image") && !jp["contextual_image"].is_null())
            p.contextual_image = image_ref_from_json(jp["contextual_image"]);
        d.paragraphs.push_back(std::move(p));
    }
    return d;
}

inline nlohmann::json to_json(const Passage& p) {
    nlohmann::json j;
    j["passage_id"] = p.passage_id;
    j["doc_id"] = p.doc_id;
    j["text"] = p.text;
    j["word_count"] = p.word_count;
    if (p.image) j["image"] = to_json(*p.image);
    return j;
}

inline Passage passage_from_json(const nlohmann::json& j) {
    Passage p;
    p.passage_id = j.at("passage_id").get<std::string>();
    p.doc_id = j.at("doc_id").get<std::string>();
    p.text = j.at("text").get<std::string>();
    p.word_count = j.value("word_count", count_words(p.text));
    if (j.contains("image") && !j["image"].is_null()) p.image = image_ref_from_json(j["image"]);
    return p;
}

inline nlohmann::json to_json(const IctPair& p) {
    return {{"question_text", p.question_text}, {"question_image", to_json(p.question_image)},
            {"passage_text", p.passage_text},   {"passage_image", to_json(p.passage_image)},
            {"leave_in", p.leave_in},           {"source_doc", p.source_doc}};
}

inline IctPair ict_pair_from_json(const nlohmann::json& j) {
    IctPair p;
    p.question_text = j.at("question_text").get<std::string>();
    p.question_image = image_ref_from_json(j.at("question_image"));
    p.passage_text = j.at("passage_text").get<std::string>();
    p.passage_image = image_ref_from_json(j.at("passage_image"));
    p.leave_in = j.at("leave_in").get<bool>();
    p.source_doc = j.value("source_doc", "");
    return p;
}

// ---------------------------------------------------------------------------
// Operations

// Greedy sentence-packing into disjoint passages of at most max_words body
// words, preserving sentence boundaries. An oversized single sentence is
// emitted alone rather than truncated. Each passage is title-prefixed and
// inherits the document's infobox image.
inline std::vector<Passage> split_passages(const MultimodalDocument& doc, int max_words) {
    std::vector<Passage> out;
    std::vector<std::string> current;
    int current_words = 0;
    auto flush = [&]() {
        if (current.empty()) return;
        Passage p;
        p.passage_id = doc.doc_id + ":" + std::to_string(out.size());
        p.doc_id = doc.doc_id;
        std::string body;
        for (size_t i = 0; i < current.size(); ++i) {
            if (i) body += " ";
            body += current[i];
        }
        p.text = doc.title + kTitleSeparator + body;
        p.word_count = count_words(p.text);
        p.image = doc.infobox_image;
        out.push_back(std::move(p));
        current.clear();
        current_words = 0;
    };
    for (const auto& para : doc.paragraphs) {
        for (const auto& sent : para.sentences) {
            int w = count_words(sent);
            if (current_words + w > max_words) flush();
            current.push_back(sent);
            current_words += w;
        }
    }
    flush();
    return out;
}

struct IctGenerationStats {
    long pairs = 0;
    long skipped_short_paragraph = 0;
    long skipped_no_contextual_image = 0;
    long skipped_no_infobox = 0;
    long skipped_duplicate_context = 0;
};

// Multimodal ICT pair generation: every sentence of every eligible
// paragraph becomes a pseudo-question paired with the paragraph's
// contextual image; the passage side carries up to four surrounding
// sentences (title-prefixed) and the document's infobox image. With
// probability cfg.leave_in_prob the pseudo-question stays in the passage
// as a fifth sentence.
inline std::vector<IctPair> make_ict_pairs(const MultimodalDocument& doc, const IctConfig& cfg,
                                           std::uint64_t rng_seed,
                                           IctGenerationStats* stats = nullptr) {
    std::vector<IctPair> out;
    IctGenerationStats local;
    IctGenerationStats& st = stats ? *stats : local;
    if (!doc.infobox_image) {
        ++st.skipped_no_infobox;
        return out;
    }
    auto rng = seeded_rng(rng_seed, doc.doc_id);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (const auto& para : doc.paragraphs) {
        if (para.sentences.size() < 2) {
            ++st.skipped_short_paragraph;
            continue;
        }
        if (!para.contextual_image) {
            ++st.skipped_no_contextual_image;
            continue;
        }
        int n = static_cast<int>(para.sentences.size());
        for (int i = 0; i < n; ++i) {
            bool leave_in = u(rng) < cfg.leave_in_prob;
            // tightest window of context sentences around i, excluding i,
            // preferring following sentences on distance ties
            std::vector<int> picked;
            for (int dist = 1; static_cast<int>(picked.size()) < cfg.context_sentences && dist < n;
                 ++dist) {
                if (i + dist < n) picked.push_back(i + dist);
                if (static_cast<int>(picked.size()) < cfg.context_sentences && i - dist >= 0)
                    picked.push_back(i - dist);
            }
            if (leave_in) picked.push_back(i);
            std::sort(picked.begin(), picked.end());
            std::string context;
            for (size_t k = 0; k < picked.size(); ++k) {
                if (k) context += " ";
                context += para.sentences[picked[k]];
            }
            if (!leave_in && context.find(para.sentences[i]) != std::string::npos) {
                ++st.skipped_duplicate_context;
                continue;
            }
            IctPair pair;
            pair.question_text = para.sentences[i];
            pair.question_image = *para.contextual_image;
            pair.passage_text = doc.title + kTitleSeparator + context;
            pair.passage_image = *doc.infobox_image;
            pair.leave_in = leave_in;
            pair.source_doc = doc.doc_id;
            out.push_back(std::move(pair));
            ++st.pairs;
        }
    }
    return out;
}

struct CorpusSplits {
    std::vector<MultimodalDocument> train;
    std::vector<MultimodalDocument> val;
    std::vector<MultimodalDocument> test;
};

// Article-disjoint split: every doc_id lands in exactly one subset, sizes
// match the ratios within one document, deterministic given the seed.
inline CorpusSplits split_by_article(const std::vector<MultimodalDocument>& corpus,
                                     std::array<double, 3> ratios, std::uint64_t rng_seed) {
    double sum = ratios[0] + ratios[1] + ratios[2];
    if (ratios[0] <= 0 || ratios[1] <= 0 || ratios[2] <= 0 || std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("split ratios must be positive and sum to 1");
    if (corpus.size() < 3) throw std::invalid_argument("corpus too small to split");

    size_t n = corpus.size();
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    std::mt19937_64 rng(rng_seed);
    for (size_t i = n - 1; i > 0; --i) {  // Fisher-Yates, platform-stable
        size_t j = rng() % (i + 1);
        std::swap(order[i], order[j]);
    }

    std::array<size_t, 3> counts{};
    std::array<double, 3> frac{};
    size_t assigned = 0;
    for (int k = 0; k < 3; ++k) {
        double exact = ratios[k] * double(n);
        counts[k] = static_cast<size_t>(std::floor(exact));
        frac[k] = exact - double(counts[k]);
        assigned += counts[k];
    }
    std::array<int, 3> by_frac{0, 1, 2};
    std::stable_sort(by_frac.begin(), by_frac.end(),
                     [&](int a, int b) { return frac[a] > frac[b]; });
    for (size_t r = 0; r < n - assigned; ++r) ++counts[by_frac[r % 3]];

    CorpusSplits s;
    size_t pos = 0;
    for (size_t i = 0; i < counts[0]; ++i) s.train.push_back(corpus[order[pos++]]);
    for (size_t i = 0; i < counts[1]; ++i) s.val.push_back(corpus[order[pos++]]);
    for (size_t i = 0; i < counts[2]; ++i) s.test.push_back(corpus[order[pos++]]);
    return s;
}

inline bool image_format_allowed(const std::string& tag) {
    static const std::set<std::string> kAllowed = {"jpeg", "jpg", "png", "gif", "bmp", "webp"};
    std::string low;
    for (char c : tag) low.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    return kAllowed.count(low) > 0;
}

// Drops documents whose infobox image has a disallowed format, paragraphs
// whose contextual image does, and single-sentence paragraphs.
inline std::pair<std::vector<MultimodalDocument>, FilterReport> filter_corpus(
    const std::vector<MultimodalDocument>& corpus) {
    std::vector<MultimodalDocument> kept;
    FilterReport report;
    for (const auto& doc : corpus) {
        if (doc.infobox_image && !image_format_allowed(doc.infobox_image->format_tag)) {
            ++report.dropped["format"];
            continue;
        }
        MultimodalDocument d = doc;
        d.paragraphs.clear();
        for (const auto& para : doc.paragraphs) {
            if (para.contextual_image &&
                !image_format_allowed(para.contextual_image->format_tag)) {
                ++report.dropped["format"];
                continue;
            }
            if (para.sentences.size() < 2) {
                ++report.dropped["short_paragraph"];
                continue;
            }
            d.paragraphs.push_back(para);
        }
        kept.push_back(std::move(d));
    }
    return {std::move(kept), std::move(report)};
}

inline nlohmann::json to_json(const FilterReport& r) {
    nlohmann::json j = nlohmann::json::object();
    for (auto& [reason, count] : r.dropped) j[reason] = count;
    return j;
}

}  // namespace mmict
