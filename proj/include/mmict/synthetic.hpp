#pragma once

#include <string>
#include <vector>

#include "mmict/backend.hpp"
#include "mmict/corpus.hpp"
#include "mmict/eval.hpp"
#include "mmict/rng.hpp"

namespace mmict {

// Fixture generators over a SyntheticWorld. Documents are per-entity
// articles whose sentences mention the entity name and carry the entity's
// answer token, with contextual and infobox images labeled by entity.

struct SyntheticCorpusConfig {
    int documents = 64;
    int paragraphs_per_doc = 3;
    int min_sentences = 4;
    int max_sentences = 7;
    int filler_vocab = 200;
    double entity_mention_prob = 0.6;
    std::uint64_t seed = 7;
};

inline std::string synth_answer(int entity) { return "ans" + std::to_string(entity); }

inline ImageRef synth_image(const SyntheticWorld& world, int entity, const std::string& slot) {
    return ImageRef{"synth://" + world.entity_name(entity) + "/" + slot, "jpeg"};
}

inline std::vector<MultimodalDocument> make_synthetic_corpus(const SyntheticWorld& world,
                                                             const SyntheticCorpusConfig& cfg) {
    std::vector<MultimodalDocument> docs;
    auto rng = seeded_rng(cfg.seed, "synthetic-corpus");
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int d = 0; d < cfg.documents; ++d) {
        int entity = d % world.entity_count;
        MultimodalDocument doc;
        doc.doc_id = "doc" + std::to_string(d);
        doc.title = "article" + std::to_string(d);
        doc.infobox_image = synth_image(world, entity, "infobox");
        for (int p = 0; p < cfg.paragraphs_per_doc; ++p) {
            Paragraph para;
            para.contextual_image = synth_image(world, entity, "ctx" + std::to_string(p));
            int n_sents =
                cfg.min_sentences + int(rng() % std::uint64_t(cfg.max_sentences - cfg.min_sentences + 1));
            for (int s = 0; s < n_sents; ++s) {
                // unique position token keeps sentences distinct
                std::string sent = "s" + std::to_string(d) + "x" + std::to_string(p) + "x" +
                                   std::to_string(s);
                int fillers = 4 + int(rng() % 4);
                for (int w = 0; w < fillers; ++w)
                    sent += " w" + std::to_string(rng() % std::uint64_t(cfg.filler_vocab));
                if (u(rng) < cfg.entity_mention_prob) sent += " " + world.entity_name(entity);
                sent += " " + synth_answer(entity) + ".";
                para.sentences.push_back(sent);
            }
            doc.paragraphs.push_back(std::move(para));
        }
        docs.push_back(std::move(doc));
    }
    return docs;
}

struct SynthQuestion {
    std::string question_id;
    std::string text;
    ImageRef image;
    AnswerKey key;
    bool text_answerable = false;
};

// Evaluation questions: a text_frac share mentions the entity by name, the
// rest are answerable only through the image.
inline std::vector<SynthQuestion> make_synthetic_questions(const SyntheticWorld& world, int n,
                                                           double text_frac, std::uint64_t seed) {
    std::vector<SynthQuestion> out;
    auto rng = seeded_rng(seed, "synthetic-questions");
    int text_count = 0;
    for (int i = 0; i < n; ++i) {
        int entity = i % world.entity_count;
        SynthQuestion q;
        q.question_id = "q" + std::to_string(i);
        q.text_answerable = double(text_count) < text_frac * double(i + 1);
        if (q.text_answerable) ++text_count;
        std::string fillers;
        for (int w = 0; w < 5; ++w) fillers += " w" + std::to_string(rng() % 200ull);
        if (q.text_answerable)
            q.text = "which fact concerns " + world.entity_name(entity) + fillers;
        else
            q.text = "which fact is depicted here" + fillers;
        q.image = synth_image(world, entity, "query" + std::to_string(i));
        q.key.question_id = q.question_id;
        q.key.gold = synth_answer(entity);
        out.push_back(std::move(q));
    }
    return out;
}

}  // namespace mmict
