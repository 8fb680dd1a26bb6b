// Command-line front end for the mmict pipeline. Every subcommand reads and
// writes line-delimited JSON artifacts so stages can be chained, inspected,
// and re-run; identical inputs and seeds produce byte-identical outputs.

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mmict/corpus.hpp"
#include "mmict/eval.hpp"
#include "mmict/fusion.hpp"
#include "mmict/index.hpp"
#include "mmict/run.hpp"
#include "mmict/synthetic.hpp"
#include "mmict/trainer.hpp"

using nlohmann::json;
using namespace mmict;

namespace {

std::vector<json> read_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::vector<json> out;
    std::string line;
    long n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (trim_copy(line).empty()) continue;
        try {
            out.push_back(json::parse(line));
        } catch (const json::parse_error& e) {
            throw std::runtime_error("bad JSON at " + path + ":" + std::to_string(n) + ": " +
                                     e.what());
        }
    }
    return out;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    return out;
}

void write_json(const std::string& path, const json& j) {
    auto out = open_out(path);
    out << j.dump(2) << "\n";
}

std::vector<MultimodalDocument> load_corpus(const std::string& path) {
    std::vector<MultimodalDocument> docs;
    for (const auto& j : read_jsonl(path)) docs.push_back(document_from_json(j));
    return docs;
}

void save_corpus(const std::vector<MultimodalDocument>& docs, const std::string& path) {
    auto out = open_out(path);
    for (const auto& d : docs) out << to_json(d).dump() << "\n";
}

std::vector<Passage> load_passages(const std::string& path) {
    std::vector<Passage> out;
    for (const auto& j : read_jsonl(path)) out.push_back(passage_from_json(j));
    return out;
}

// --- synthetic world + questions -------------------------------------------

json world_to_json(const SyntheticWorld& w) {
    return {{"entities", w.entity_count}, {"latent_dim", w.latent_dim},
            {"text_dim", w.text_dim},     {"image_dim", w.image_dim},
            {"noise_sigma", w.noise_sigma}, {"seed", w.seed}};
}

SyntheticWorld load_world(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    json j = json::parse(in);
    return SyntheticWorld::make(j.at("entities").get<int>(), j.at("latent_dim").get<int>(),
                                j.at("text_dim").get<int>(), j.at("image_dim").get<int>(),
                                j.at("noise_sigma").get<double>(),
                                j.at("seed").get<std::uint64_t>());
}

json question_to_json(const SynthQuestion& q) {
    return {{"question_id", q.question_id},
            {"text", q.text},
            {"image", to_json(q.image)},
            {"key", to_json(q.key)},
            {"text_answerable", q.text_answerable}};
}

struct LoadedQuestion {
    std::string question_id;
    std::string text;
    std::optional<ImageRef> image;
    AnswerKey key;
};

std::vector<LoadedQuestion> load_questions(const std::string& path) {
    std::vector<LoadedQuestion> out;
    for (const auto& j : read_jsonl(path)) {
        LoadedQuestion q;
        q.question_id = j.at("question_id").get<std::string>();
        q.text = j.value("text", "");
        if (j.contains("image") && !j["image"].is_null())
            q.image = image_ref_from_json(j["image"]);
        if (j.contains("key"))
            q.key = answer_key_from_json(j["key"]);
        else
            q.key.question_id = q.question_id;
        out.push_back(std::move(q));
    }
    return out;
}

// --- model plumbing ---------------------------------------------------------

json model_config_json(FusionKind kind, const TransformerConfig& t, int image_dim,
                       std::uint64_t seed) {
    return {{"fusion", to_string(kind)},
            {"image_dim", image_dim},
            {"seed", seed},
            {"transformer",
             {{"layers", t.layers},
              {"model_dim", t.model_dim},
              {"heads", t.heads},
              {"ffn_dim", t.ffn_dim},
              {"dropout_prob", t.dropout_prob},
              {"max_seq", t.max_seq},
              {"use_position", t.use_position},
              {"use_type", t.use_type}}}};
}

BiEncoder model_from_config(const json& cfg) {
    const auto& jt = cfg.at("transformer");
    TransformerConfig t;
    t.layers = jt.at("layers").get<int>();
    t.model_dim = jt.at("model_dim").get<int>();
    t.heads = jt.at("heads").get<int>();
    t.ffn_dim = jt.at("ffn_dim").get<int>();
    t.dropout_prob = jt.at("dropout_prob").get<double>();
    t.max_seq = jt.at("max_seq").get<int>();
    t.use_position = jt.value("use_position", true);
    t.use_type = jt.value("use_type", true);
    return BiEncoder::init(fusion_kind_from_string(cfg.at("fusion").get<std::string>()), t,
                           cfg.at("image_dim").get<int>(), cfg.at("seed").get<std::uint64_t>());
}

BiEncoder load_checkpoint(const std::string& path, json* config_out = nullptr) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
    json j = json::parse(in);
    if (j.value("format", "") != "mmict-checkpoint-v1")
        throw std::runtime_error("'" + path + "' is not a checkpoint file");
    BiEncoder model = model_from_config(j.at("config"));
    checkpoint_apply(j, model);
    if (config_out) *config_out = j.at("config");
    return model;
}

std::vector<IctPair> load_pairs(const std::string& path) {
    std::vector<IctPair> out;
    for (const auto& j : read_jsonl(path)) out.push_back(ict_pair_from_json(j));
    return out;
}

// --- metric helpers ---------------------------------------------------------

MetricResult metric_by_name(const std::string& name, const RankedRun& run, const Qrels& qrels,
                            int k) {
    if (name == "mrr") return mrr_at_k(run, qrels, k);
    if (name == "p") return p_at_k(run, qrels, k);
    if (name == "hits") return hits_at_k(run, qrels, k);
    throw std::invalid_argument("unknown metric '" + name + "' (expected mrr, p, or hits)");
}

std::vector<double> per_question_vector(const MetricResult& r) {
    std::vector<double> out;
    for (const auto& [qid, v] : r.per_question) out.push_back(v);
    return out;
}

std::string pct(double v) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(1) << v * 100.0;
    return s.str();
}

Qrels qrels_from_flags(const std::string& qrels_path, const std::string& questions_path,
                       const std::string& passages_path) {
    if (!qrels_path.empty()) return load_qrels(qrels_path);
    if (questions_path.empty() || passages_path.empty())
        throw std::runtime_error("need either --qrels or both --questions and --passages");
    auto passages = load_passages(passages_path);
    std::vector<AnswerKey> keys;
    for (const auto& q : load_questions(questions_path)) keys.push_back(q.key);
    return build_qrels(passages, keys);
}

// Score-level fusion needs both runs over one candidate pool per question.
// Retrievers with sparse candidate lists (BM25) get padded: every passage in
// the union is scored, absent entries at the list's own minimum score.
void align_runs(RankedRun& a, RankedRun& b) {
    for (auto& [qid, la] : a) {
        auto it = b.find(qid);
        if (it == b.end()) throw std::runtime_error("runs disagree on question '" + qid + "'");
        auto& lb = it->second;
        std::map<std::string, double> sa, sb;
        double min_a = 0.0, min_b = 0.0;
        for (const auto& [pid, s] : la.entries) {
            sa[pid] = s;
            min_a = std::min(min_a, s);
        }
        for (const auto& [pid, s] : lb.entries) {
            sb[pid] = s;
            min_b = std::min(min_b, s);
        }
        std::set<std::string> pool;
        for (const auto& [pid, s] : sa) pool.insert(pid);
        for (const auto& [pid, s] : sb) pool.insert(pid);
        la.entries.clear();
        lb.entries.clear();
        for (const auto& pid : pool) {
            auto ia = sa.find(pid);
            auto ib = sb.find(pid);
            la.entries.emplace_back(pid, ia == sa.end() ? min_a : ia->second);
            lb.entries.emplace_back(pid, ib == sb.end() ? min_b : ib->second);
        }
        la.sort_entries();
        lb.sort_entries();
    }
}

// --- config-file defaults ---------------------------------------------------

// A JSON config may supply defaults per subcommand; explicit command-line
// flags always win. {"train": {"steps": 500}, "common": {"seed": 1}}
std::vector<std::string> expand_args(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    std::string config_path, subcommand;
    for (size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size())
            config_path = args[i + 1];
        else if (args[i].rfind("--config=", 0) == 0)
            config_path = args[i].substr(9);
        else if (subcommand.empty() && args[i][0] != '-')
            subcommand = args[i];
    }
    if (config_path.empty()) return args;
    std::ifstream in(config_path);
    if (!in) throw std::runtime_error("cannot open config '" + config_path + "'");
    json cfg = json::parse(in);

    auto given = [&](const std::string& key) {
        for (const auto& a : args)
            if (a == "--" + key || a.rfind("--" + key + "=", 0) == 0) return true;
        return false;
    };
    auto apply = [&](const json& section) {
        for (auto it = section.begin(); it != section.end(); ++it) {
            if (given(it.key())) continue;
            if (it.value().is_boolean()) {
                if (it.value().get<bool>()) args.push_back("--" + it.key());
            } else if (it.value().is_string()) {
                args.push_back("--" + it.key() + "=" + it.value().get<std::string>());
            } else {
                args.push_back("--" + it.key() + "=" + it.value().dump());
            }
        }
    };
    if (cfg.contains(subcommand)) apply(cfg[subcommand]);
    if (cfg.contains("common")) apply(cfg["common"]);
    return args;
}

}  // namespace

int run_cli(std::vector<std::string> args) {
    CLI::App app{"multimodal dense-retrieval pipeline"};
    app.require_subcommand(1);
    std::string config_path;
    int threads = 0;
    app.add_option("--config", config_path, "JSON config with per-subcommand defaults");
    app.add_option("--threads", threads, "worker cap (0 = all cores)");

    // ---- synth -------------------------------------------------------------
    auto* synth = app.add_subcommand("synth", "generate a synthetic fixture world");
    struct {
        std::string out;
        int entities = 16, documents = 64, paragraphs = 3, questions = 64;
        double text_frac = 0.5, noise = 0.05;
        int latent = 16, text_dim = 32, image_dim = 48;
        std::uint64_t seed = 7;
    } sy;
    synth->add_option("--out", sy.out, "output directory")->required();
    synth->add_option("--entities", sy.entities);
    synth->add_option("--documents", sy.documents);
    synth->add_option("--paragraphs", sy.paragraphs);
    synth->add_option("--questions", sy.questions);
    synth->add_option("--text-frac", sy.text_frac, "share of text-answerable questions");
    synth->add_option("--noise", sy.noise);
    synth->add_option("--latent", sy.latent);
    synth->add_option("--text-dim", sy.text_dim);
    synth->add_option("--image-dim", sy.image_dim);
    synth->add_option("--seed", sy.seed)->required();
    synth->callback([&] {
        auto world = SyntheticWorld::make(sy.entities, sy.latent, sy.text_dim, sy.image_dim,
                                          sy.noise, sy.seed);
        SyntheticCorpusConfig ccfg;
        ccfg.documents = sy.documents;
        ccfg.paragraphs_per_doc = sy.paragraphs;
        ccfg.seed = sy.seed;
        write_json(sy.out + "/world.json", world_to_json(world));
        save_corpus(make_synthetic_corpus(world, ccfg), sy.out + "/corpus.jsonl");
        auto out = open_out(sy.out + "/questions.jsonl");
        for (const auto& q : make_synthetic_questions(world, sy.questions, sy.text_frac, sy.seed))
            out << question_to_json(q).dump() << "\n";
        std::cout << "wrote world, corpus (" << sy.documents << " docs), " << sy.questions
                  << " questions to " << sy.out << "\n";
    });

    // ---- build-corpus --------------------------------------------------------
    auto* build = app.add_subcommand("build-corpus", "filter documents and chunk into passages");
    struct {
        std::string in, out, report;
        int max_words = 100;
    } bc;
    build->add_option("--in", bc.in, "corpus jsonl")->required();
    build->add_option("--out", bc.out, "passages jsonl")->required();
    build->add_option("--max-words", bc.max_words);
    build->add_option("--report", bc.report, "filter report json");
    build->callback([&] {
        auto corpus = load_corpus(bc.in);
        auto [kept, report] = filter_corpus(corpus);
        auto out = open_out(bc.out);
        long passages = 0;
        for (const auto& doc : kept)
            for (const auto& p : split_passages(doc, bc.max_words)) {
                out << to_json(p).dump() << "\n";
                ++passages;
            }
        json rj{{"documents_in", corpus.size()},
                {"documents_kept", kept.size()},
                {"passages", passages},
                {"dropped", to_json(report)}};
        if (!bc.report.empty()) write_json(bc.report, rj);
        std::cout << rj.dump() << "\n";
    });

    // ---- ict-pairs -----------------------------------------------------------
    auto* ict = app.add_subcommand("ict-pairs", "generate inverse-cloze training pairs");
    struct {
        std::string in, out, stats;
        double leave_in_prob = 0.10;
        int context_sentences = 4;
        std::uint64_t seed = 0;
    } ip;
    ict->add_option("--in", ip.in, "corpus jsonl")->required();
    ict->add_option("--out", ip.out, "pairs jsonl")->required();
    ict->add_option("--leave-in-prob", ip.leave_in_prob);
    ict->add_option("--context-sentences", ip.context_sentences);
    ict->add_option("--seed", ip.seed)->required();
    ict->add_option("--stats", ip.stats, "generation stats json");
    ict->callback([&] {
        IctConfig cfg;
        cfg.leave_in_prob = ip.leave_in_prob;
        cfg.context_sentences = ip.context_sentences;
        IctGenerationStats stats;
        auto out = open_out(ip.out);
        long leave_in = 0;
        for (const auto& doc : load_corpus(ip.in))
            for (const auto& pair : make_ict_pairs(doc, cfg, ip.seed, &stats)) {
                out << to_json(pair).dump() << "\n";
                if (pair.leave_in) ++leave_in;
            }
        json sj{{"pairs", stats.pairs},
                {"leave_in", leave_in},
                {"skipped_short_paragraph", stats.skipped_short_paragraph},
                {"skipped_no_contextual_image", stats.skipped_no_contextual_image},
                {"skipped_no_infobox", stats.skipped_no_infobox},
                {"skipped_duplicate_context", stats.skipped_duplicate_context}};
        if (!ip.stats.empty()) write_json(ip.stats, sj);
        std::cout << sj.dump() << "\n";
    });

    // ---- split ---------------------------------------------------------------
    auto* split = app.add_subcommand("split", "article-disjoint train/val/test split");
    struct {
        std::string in, out_train, out_val, out_test;
        std::vector<double> ratios{0.8, 0.1, 0.1};
        std::uint64_t seed = 0;
    } sp;
    split->add_option("--in", sp.in)->required();
    split->add_option("--out-train", sp.out_train)->required();
    split->add_option("--out-val", sp.out_val)->required();
    split->add_option("--out-test", sp.out_test)->required();
    split->add_option("--ratios", sp.ratios)->delimiter(',')->expected(3);
    split->add_option("--seed", sp.seed)->required();
    split->callback([&] {
        auto s = split_by_article(load_corpus(sp.in), {sp.ratios[0], sp.ratios[1], sp.ratios[2]},
                                  sp.seed);
        save_corpus(s.train, sp.out_train);
        save_corpus(s.val, sp.out_val);
        save_corpus(s.test, sp.out_test);
        std::cout << json{{"train", s.train.size()}, {"val", s.val.size()}, {"test", s.test.size()}}
                         .dump()
                  << "\n";
    });

    // ---- train ---------------------------------------------------------------
    auto* train = app.add_subcommand("train", "contrastive bi-encoder training stage");
    struct {
        std::string pairs, val_pairs, world, out, log, init_checkpoint, fusion = "ilf";
        int stage = 2;
        long steps = 500;
        int batch_size = -1;
        double lr = -1.0;
        std::string schedule;
        long warmup = -1;
        int frozen_last = 0;
        long val_every = 50;
        std::uint64_t seed = 0;
        int layers = 2, heads = 4, ffn = 64, max_seq = 64;
        double dropout = 0.1;
    } tr;
    train->add_option("--pairs", tr.pairs, "training pairs jsonl")->required();
    train->add_option("--val-pairs", tr.val_pairs, "validation pairs jsonl");
    train->add_option("--world", tr.world, "world json")->required();
    train->add_option("--fusion", tr.fusion, "eca | ilf | text");
    train->add_option("--stage", tr.stage)->check(CLI::Range(2, 3));
    train->add_option("--steps", tr.steps);
    train->add_option("--batch-size", tr.batch_size);
    train->add_option("--lr", tr.lr);
    train->add_option("--schedule", tr.schedule, "linear_warmup | constant");
    train->add_option("--warmup", tr.warmup);
    train->add_option("--frozen-last", tr.frozen_last, "transformer layers frozen in stage 2");
    train->add_option("--val-every", tr.val_every);
    train->add_option("--seed", tr.seed)->required();
    train->add_option("--layers", tr.layers);
    train->add_option("--heads", tr.heads);
    train->add_option("--ffn", tr.ffn);
    train->add_option("--max-seq", tr.max_seq);
    train->add_option("--dropout", tr.dropout);
    train->add_option("--init-checkpoint", tr.init_checkpoint, "warm-start parameters");
    train->add_option("--out", tr.out, "checkpoint json")->required();
    train->add_option("--log", tr.log, "per-step log jsonl");
    train->callback([&] {
        auto world = load_world(tr.world);
        FusionKind kind = fusion_kind_from_string(tr.fusion);
        TransformerConfig tcfg;
        tcfg.layers = tr.layers;
        tcfg.model_dim = world.text_dim;
        tcfg.heads = tr.heads;
        tcfg.ffn_dim = tr.ffn;
        tcfg.dropout_prob = tr.dropout;
        tcfg.max_seq = tr.max_seq;
        json mcfg = model_config_json(kind, tcfg, world.image_dim, tr.seed);

        BiEncoder model = tr.init_checkpoint.empty() ? model_from_config(mcfg)
                                                     : load_checkpoint(tr.init_checkpoint, &mcfg);

        std::vector<EncodedExample> data, eval_set;
        for (const auto& p : load_pairs(tr.pairs)) data.push_back(encode_pair(p, world));
        if (!tr.val_pairs.empty())
            for (const auto& p : load_pairs(tr.val_pairs)) eval_set.push_back(encode_pair(p, world));

        StagePlan plan = default_stage_plan(tr.stage, kind);
        plan.max_steps = tr.steps;
        plan.seed = tr.seed;
        plan.val_every = tr.val_every;
        plan.frozen_last_l = tr.frozen_last;
        if (tr.batch_size > 0) plan.batch_size = tr.batch_size;
        if (tr.lr > 0) plan.lr = tr.lr;
        if (tr.warmup >= 0) plan.warmup_steps = tr.warmup;
        if (!tr.schedule.empty()) plan.schedule = schedule_kind_from_string(tr.schedule);

        auto result = run_stage(plan, data, model, eval_set);
        write_json(tr.out, checkpoint_to_json(model, mcfg));
        if (!tr.log.empty()) {
            auto out = open_out(tr.log);
            for (const auto& e : result.log) out << to_json(e).dump() << "\n";
        }
        std::cout << json{{"pairs", data.size()},
                          {"best_val_mrr", result.best_val_mrr},
                          {"best_step", result.best_step}}
                         .dump()
                  << "\n";
    });

    // ---- embed ---------------------------------------------------------------
    auto* embed = app.add_subcommand("embed", "encode passages or questions to vectors");
    struct {
        std::string checkpoint, world, in, out, kind = "passages";
    } em;
    embed->add_option("--checkpoint", em.checkpoint)->required();
    embed->add_option("--world", em.world)->required();
    embed->add_option("--in", em.in, "passages or questions jsonl")->required();
    embed->add_option("--kind", em.kind, "passages | questions");
    embed->add_option("--out", em.out, "embeddings jsonl")->required();
    embed->callback([&] {
        auto world = load_world(em.world);
        auto model = load_checkpoint(em.checkpoint);
        EmbeddingTable table;
        if (em.kind == "passages") {
            for (const auto& p : load_passages(em.in)) {
                auto text = encode_text_synthetic(p.text, world);
                std::optional<ImageEncoding> img;
                if (p.image) img = encode_image_synthetic(*p.image, world);
                table.add(p.passage_id, model.passage.embed(text, img ? &*img : nullptr));
            }
        } else if (em.kind == "questions") {
            for (const auto& q : load_questions(em.in)) {
                auto text = encode_text_synthetic(q.text, world);
                std::optional<ImageEncoding> img;
                if (q.image) img = encode_image_synthetic(*q.image, world);
                table.add(q.question_id, model.question.embed(text, img ? &*img : nullptr));
            }
        } else {
            throw std::invalid_argument("--kind must be passages or questions");
        }
        save_precomputed(table, em.out);
        std::cout << json{{"embedded", table.size()}, {"dim", table.dim}}.dump() << "\n";
    });

    // ---- index ---------------------------------------------------------------
    auto* index = app.add_subcommand("index", "build a dense or bm25 index");
    struct {
        std::string type = "dense", embeddings, passages, out;
        double k1 = 0.9, b = 0.4;
    } ix;
    index->add_option("--type", ix.type, "dense | bm25");
    index->add_option("--embeddings", ix.embeddings, "dense: embeddings jsonl");
    index->add_option("--passages", ix.passages, "bm25: passages jsonl");
    index->add_option("--out", ix.out)->required();
    index->add_option("--k1", ix.k1);
    index->add_option("--b", ix.b);
    index->callback([&] {
        if (ix.type == "dense") {
            if (ix.embeddings.empty()) throw std::runtime_error("dense index needs --embeddings");
            auto idx = DenseIndex::build(load_precomputed(ix.embeddings));
            idx.save(ix.out);
            std::cout << json{{"type", "dense"}, {"size", idx.size()}, {"dim", idx.dim()}}.dump()
                      << "\n";
        } else if (ix.type == "bm25") {
            if (ix.passages.empty()) throw std::runtime_error("bm25 index needs --passages");
            auto idx = Bm25Index::build(load_passages(ix.passages), ix.k1, ix.b);
            idx.save(ix.out);
            std::cout << json{{"type", "bm25"}, {"size", idx.doc_count()}}.dump() << "\n";
        } else {
            throw std::invalid_argument("--type must be dense or bm25");
        }
    });

    // ---- search --------------------------------------------------------------
    auto* search = app.add_subcommand("search", "retrieve top-K passages per question");
    struct {
        std::string type = "dense", index, queries, questions, out, tag = "mmict";
        int k = 100;
    } se;
    search->add_option("--type", se.type, "dense | bm25");
    search->add_option("--index", se.index)->required();
    search->add_option("--queries", se.queries, "dense: question embeddings jsonl");
    search->add_option("--questions", se.questions, "bm25: questions jsonl");
    search->add_option("--k", se.k);
    search->add_option("--tag", se.tag);
    search->add_option("--out", se.out, "run file")->required();
    search->callback([&] {
        RankedRun run;
        if (se.type == "dense") {
            if (se.queries.empty()) throw std::runtime_error("dense search needs --queries");
            auto idx = DenseIndex::load(se.index);
            auto queries = load_precomputed(se.queries);
            for (size_t i = 0; i < queries.size(); ++i)
                run[queries.ids[i]] = idx.search(queries.vectors[i], se.k, queries.ids[i]);
        } else if (se.type == "bm25") {
            if (se.questions.empty()) throw std::runtime_error("bm25 search needs --questions");
            auto idx = Bm25Index::load(se.index);
            for (const auto& q : load_questions(se.questions))
                run[q.question_id] = idx.search(q.text, se.k, q.question_id);
        } else {
            throw std::invalid_argument("--type must be dense or bm25");
        }
        save_run(run, se.out, se.tag);
        std::cout << json{{"questions", run.size()}, {"k", se.k}}.dump() << "\n";
    });

    // ---- fuse ----------------------------------------------------------------
    auto* fuse = app.add_subcommand("fuse", "late fusion of two score runs");
    struct {
        std::string text_run, image_run, out, qrels, questions, passages;
        double alpha = 0.5, grid_step = 0.01;
        bool tune = false;
    } fu;
    fuse->add_option("--text-run", fu.text_run)->required();
    fuse->add_option("--image-run", fu.image_run)->required();
    fuse->add_option("--alpha", fu.alpha);
    fuse->add_flag("--tune", fu.tune, "grid-search alpha on validation qrels");
    fuse->add_option("--grid-step", fu.grid_step);
    fuse->add_option("--qrels", fu.qrels);
    fuse->add_option("--questions", fu.questions);
    fuse->add_option("--passages", fu.passages);
    fuse->add_option("--out", fu.out, "fused run file")->required();
    fuse->callback([&] {
        auto text_run = load_run(fu.text_run);
        auto image_run = load_run(fu.image_run);
        align_runs(text_run, image_run);
        double alpha = fu.alpha;
        if (fu.tune) {
            Qrels qrels = qrels_from_flags(fu.qrels, fu.questions, fu.passages);
            alpha = grid_search_alpha(text_run, image_run, qrels, fu.grid_step);
        }
        save_run(late_fusion_run(text_run, image_run, alpha), fu.out, "fused");
        std::cout << json{{"alpha", alpha}, {"tuned", fu.tune}}.dump() << "\n";
    });

    // ---- mine-negatives ------------------------------------------------------
    auto* mine = app.add_subcommand("mine-negatives", "retrieve answer-free hard negatives");
    struct {
        std::string index, questions, passages, out;
        int k = 5;
    } mn;
    mine->add_option("--index", mn.index, "bm25 index")->required();
    mine->add_option("--questions", mn.questions)->required();
    mine->add_option("--passages", mn.passages)->required();
    mine->add_option("--k", mn.k);
    mine->add_option("--out", mn.out, "negatives jsonl")->required();
    mine->callback([&] {
        auto idx = Bm25Index::load(mn.index);
        std::map<std::string, std::string> texts;
        for (const auto& p : load_passages(mn.passages)) texts[p.passage_id] = p.text;
        auto retriever = [&](const std::string& query, int k) { return idx.search(query, k); };
        auto out = open_out(mn.out);
        long total = 0;
        for (const auto& q : load_questions(mn.questions)) {
            auto negs = mine_hard_negatives(q.text, q.key, retriever, texts, mn.k);
            total += static_cast<long>(negs.size());
            out << json{{"question_id", q.question_id}, {"negatives", negs}}.dump() << "\n";
        }
        std::cout << json{{"negatives", total}}.dump() << "\n";
    });

    // ---- evaluate ------------------------------------------------------------
    auto* evaluate = app.add_subcommand("evaluate", "IR metrics for a run");
    struct {
        std::string run, qrels, questions, passages, out, save_qrels_path;
        std::vector<int> ks{1, 20, 100};
    } ev;
    evaluate->add_option("--run", ev.run)->required();
    evaluate->add_option("--qrels", ev.qrels);
    evaluate->add_option("--questions", ev.questions);
    evaluate->add_option("--passages", ev.passages);
    evaluate->add_option("--ks", ev.ks)->delimiter(',');
    evaluate->add_option("--save-qrels", ev.save_qrels_path);
    evaluate->add_option("--out", ev.out, "metrics json");
    evaluate->callback([&] {
        auto run = load_run(ev.run);
        Qrels qrels = qrels_from_flags(ev.qrels, ev.questions, ev.passages);
        if (!ev.save_qrels_path.empty()) save_qrels(qrels, ev.save_qrels_path);
        json metrics = json::object();
        json per_question = json::object();
        std::vector<std::pair<std::string, double>> table_rows;
        for (int k : ev.ks) {
            auto m = mrr_at_k(run, qrels, k);
            auto p = p_at_k(run, qrels, k);
            auto h = hits_at_k(run, qrels, k);
            metrics["MRR@" + std::to_string(k)] = m.mean;
            metrics["P@" + std::to_string(k)] = p.mean;
            metrics["Hits@" + std::to_string(k)] = h.mean;
            per_question["MRR@" + std::to_string(k)] = m.per_question;
            table_rows.emplace_back("MRR@" + std::to_string(k), m.mean);
            table_rows.emplace_back("P@" + std::to_string(k), p.mean);
            table_rows.emplace_back("Hits@" + std::to_string(k), h.mean);
        }
        json out{{"questions", qrels.relevant.size()},
                 {"metrics", metrics},
                 {"per_question", per_question}};
        if (!ev.out.empty()) write_json(ev.out, out);
        std::cout << json{{"questions", qrels.relevant.size()}, {"metrics", metrics}}.dump()
                  << "\n";
        for (const auto& [name, value] : table_rows)
            std::cout << std::left << std::setw(10) << name << " " << std::right << std::setw(6)
                      << pct(value) << "\n";
    });

    // ---- significance --------------------------------------------------------
    auto* sig = app.add_subcommand("significance", "paired randomization test between two runs");
    struct {
        std::string run_a, run_b, qrels, questions, passages, metric = "mrr", out;
        int k = 100;
        long iterations = 100000;
        std::uint64_t seed = 0;
    } sg;
    sig->add_option("--run-a", sg.run_a)->required();
    sig->add_option("--run-b", sg.run_b)->required();
    sig->add_option("--qrels", sg.qrels);
    sig->add_option("--questions", sg.questions);
    sig->add_option("--passages", sg.passages);
    sig->add_option("--metric", sg.metric, "mrr | p | hits");
    sig->add_option("--k", sg.k);
    sig->add_option("--iterations", sg.iterations);
    sig->add_option("--seed", sg.seed)->required();
    sig->add_option("--out", sg.out);
    sig->callback([&] {
        Qrels qrels = qrels_from_flags(sg.qrels, sg.questions, sg.passages);
        auto a = metric_by_name(sg.metric, load_run(sg.run_a), qrels, sg.k);
        auto b = metric_by_name(sg.metric, load_run(sg.run_b), qrels, sg.k);
        double p = fisher_randomization(per_question_vector(a), per_question_vector(b),
                                        sg.iterations, sg.seed);
        json out{{"metric", sg.metric},
                 {"k", sg.k},
                 {"mean_a", a.mean},
                 {"mean_b", b.mean},
                 {"p_value", p},
                 {"significant_at_0.01", p <= 0.01}};
        if (!sg.out.empty()) write_json(sg.out, out);
        std::cout << out.dump() << "\n";
    });

    // ---- report --------------------------------------------------------------
    auto* report = app.add_subcommand("report", "aligned comparison table across systems");
    struct {
        std::string spec, out;
    } rp;
    report->add_option("--spec", rp.spec, "report spec json")->required();
    report->add_option("--out", rp.out, "report markdown");
    report->callback([&] {
        std::ifstream in(rp.spec);
        if (!in) throw std::runtime_error("cannot open report spec '" + rp.spec + "'");
        json spec = json::parse(in);
        Qrels qrels = qrels_from_flags(spec.value("qrels", ""), spec.value("questions", ""),
                                       spec.value("passages", ""));
        struct Column {
            std::string label, metric;
            int k;
        };
        std::vector<Column> columns;
        for (const auto& jc : spec.value(
                 "columns", json::array({{{"metric", "mrr"}, {"k", 100}},
                                         {{"metric", "p"}, {"k", 1}},
                                         {{"metric", "p"}, {"k", 20}},
                                         {{"metric", "hits"}, {"k", 20}}}))) {
            Column c;
            c.metric = jc.at("metric").get<std::string>();
            c.k = jc.at("k").get<int>();
            std::string up = c.metric == "mrr" ? "MRR" : (c.metric == "p" ? "P" : "Hits");
            c.label = up + "@" + std::to_string(c.k);
            columns.push_back(c);
        }
        std::string baseline = spec.value("baseline", "");
        long iterations = spec.value("iterations", 100000L);
        std::uint64_t seed = spec.value("seed", std::uint64_t{1});

        struct Row {
            std::string name;
            std::vector<double> values;
            std::vector<bool> significant;
        };
        std::map<std::string, RankedRun> runs;
        std::vector<Row> rows;
        for (const auto& js : spec.at("systems")) {
            std::string name = js.at("name").get<std::string>();
            runs[name] = load_run(js.at("run").get<std::string>());
        }
        for (const auto& js : spec.at("systems")) {
            Row row;
            row.name = js.at("name").get<std::string>();
            for (const auto& c : columns) {
                auto m = metric_by_name(c.metric, runs.at(row.name), qrels, c.k);
                row.values.push_back(m.mean);
                bool sig_mark = false;
                if (!baseline.empty() && row.name != baseline) {
                    auto base = metric_by_name(c.metric, runs.at(baseline), qrels, c.k);
                    double p = fisher_randomization(per_question_vector(m),
                                                    per_question_vector(base), iterations, seed);
                    sig_mark = p <= 0.01;
                }
                row.significant.push_back(sig_mark);
            }
            rows.push_back(std::move(row));
        }

        std::ostringstream md;
        md << "| model |";
        for (const auto& c : columns) md << " " << c.label << " |";
        md << "\n|---|";
        for (size_t i = 0; i < columns.size(); ++i) md << "---|";
        md << "\n";
        for (const auto& row : rows) {
            md << "| " << row.name << " |";
            for (size_t i = 0; i < row.values.size(); ++i)
                md << " " << pct(row.values[i]) << (row.significant[i] ? "*" : "") << " |";
            md << "\n";
        }
        if (!baseline.empty())
            md << "\n`*` significant vs " << baseline
               << " (two-sided randomization test, p <= 0.01)\n";
        md << "\nconfig-hash: " << std::hex << fnv1a(spec.dump()) << std::dec << "\n";
        if (!rp.out.empty()) {
            auto out = open_out(rp.out);
            out << md.str();
        }
        std::cout << md.str();
    });

    std::vector<const char*> argv;
    argv.push_back("mmict");
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }
    return 0;
}

int main(int argc, char** argv) {
    try {
        return run_cli(expand_args(argc, argv));
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
