#pragma once

#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "mmict/backend.hpp"
#include "mmict/corpus.hpp"
#include "mmict/fusion.hpp"
#include "mmict/optim.hpp"

namespace mmict {

// One training unit: an encoded visual question, its unique positive
// visual passage, and optional mined hard negatives.
struct EncodedExample {
    TextEncoding q_text;
    std::optional<ImageEncoding> q_image;
    TextEncoding p_text;
    std::optional<ImageEncoding> p_image;
    std::vector<std::pair<TextEncoding, std::optional<ImageEncoding>>> negatives;
};

inline EncodedExample encode_pair(const IctPair& pair, const SyntheticWorld& world) {
    EncodedExample ex;
    ex.q_text = encode_text_synthetic(pair.question_text, world);
    ex.q_image = encode_image_synthetic(pair.question_image, world);
    ex.p_text = encode_text_synthetic(pair.passage_text, world);
    ex.p_image = encode_image_synthetic(pair.passage_image, world);
    return ex;
}

// Contrastive NLL over a batch: row k of the similarity matrix scores
// question k against every positive in the batch (in-batch negatives)
// plus all hard negatives; the loss is the mean row-wise -log softmax at
// the positive column.
inline Var contrastive_loss(const std::vector<Var>& q_vectors,
                            const std::vector<Var>& p_pos_vectors,
                            const std::vector<Var>& p_neg_vectors) {
    size_t b = q_vectors.size();
    if (b != p_pos_vectors.size())
        throw std::invalid_argument("contrastive_loss: question/positive count mismatch");
    if (b < 2 && p_neg_vectors.empty()) throw std::invalid_argument("no negatives available");
    Var q = q_vectors[0];
    for (size_t i = 1; i < b; ++i) q = concat_rows(q, q_vectors[i]);
    Var p = p_pos_vectors[0];
    for (size_t i = 1; i < b; ++i) p = concat_rows(p, p_pos_vectors[i]);
    for (const auto& n : p_neg_vectors) p = concat_rows(p, n);
    Var sims = matmul(q, transpose(p));
    std::vector<int> targets(b);
    for (size_t i = 0; i < b; ++i) targets[i] = static_cast<int>(i);
    return nll_rows(sims, targets);
}

// In-batch MRR with pessimistic tie handling: the true passage is ranked
// after every candidate scoring >= it.
inline double inbatch_mrr(const Tensor& similarities) {
    if (similarities.rows != similarities.cols || similarities.rows < 2)
        throw std::invalid_argument("inbatch_mrr: need a square similarity matrix, B >= 2");
    double mrr = 0.0;
    for (int i = 0; i < similarities.rows; ++i) {
        double truth = similarities.at(i, i);
        int rank = 1;
        for (int j = 0; j < similarities.cols; ++j) {
            if (j == i) continue;
            if (similarities.at(i, j) >= truth) ++rank;
        }
        mrr += 1.0 / rank;
    }
    return mrr / similarities.rows;
}

inline double inbatch_mrr(const std::vector<std::vector<double>>& q_vectors,
                          const std::vector<std::vector<double>>& p_vectors) {
    if (q_vectors.size() != p_vectors.size())
        throw std::invalid_argument("inbatch_mrr: question/passage count mismatch");
    int b = static_cast<int>(q_vectors.size());
    Tensor s(b, b);
    for (int i = 0; i < b; ++i)
        for (int j = 0; j < b; ++j) {
            double d = 0.0;
            for (size_t k = 0; k < q_vectors[i].size(); ++k) d += q_vectors[i][k] * p_vectors[j][k];
            s.at(i, j) = d;
        }
    return inbatch_mrr(s);
}

// ---------------------------------------------------------------------------

// Bi-encoder: separate question and passage towers (two-encoder
// convention; W_c is not shared across towers).
struct BiEncoder {
    FusionModel question;
    FusionModel passage;

    static BiEncoder init(FusionKind kind, const TransformerConfig& tcfg, int image_dim,
                          std::uint64_t seed) {
        BiEncoder b;
        b.question = FusionModel::init(kind, tcfg, image_dim, mix_seed(seed, "question"), "q.");
        b.passage = FusionModel::init(kind, tcfg, image_dim, mix_seed(seed, "passage"), "p.");
        return b;
    }

    std::vector<Parameter*> params() {
        auto out = question.params();
        for (Parameter* p : passage.params()) out.push_back(p);
        return out;
    }

    void set_frozen_last_layers(int l) {
        question.set_frozen_last_layers(l);
        passage.set_frozen_last_layers(l);
    }

    void unfreeze_all() {
        question.unfreeze_all();
        passage.unfreeze_all();
    }
};

struct StagePlan {
    int stage = 2;
    int batch_size = 32;
    double lr = 2e-5;
    ScheduleKind schedule = ScheduleKind::LinearWarmup;
    long warmup_steps = 100;
    int frozen_last_l = 0;
    long max_steps = 0;
    std::uint64_t seed = 1;
    long val_every = 50;
    double clip_norm = 2.0;
    AdamConfig adam;
};

// Recipe defaults: stage 2 uses batch 512 with 100 warm-up steps, stage 3
// batch 298 with 4; ECA trains at 2e-5 linear, ILF stage 2 at 2e-3
// constant.
inline StagePlan default_stage_plan(int stage, FusionKind kind) {
    StagePlan p;
    p.stage = stage;
    if (stage == 2) {
        p.batch_size = 512;
        p.warmup_steps = 100;
    } else if (stage == 3) {
        p.batch_size = 298;
        p.warmup_steps = 4;
    }
    if (kind == FusionKind::Ilf && stage == 2) {
        p.lr = 2e-3;
        p.schedule = ScheduleKind::Constant;
    } else {
        p.lr = 2e-5;
        p.schedule = ScheduleKind::LinearWarmup;
    }
    return p;
}

struct TrainLogEntry {
    long step = 0;
    double loss = 0.0;
    double lr = 0.0;
    double grad_norm = 0.0;
    std::optional<double> val_mrr;
};

inline nlohmann::json to_json(const TrainLogEntry& e) {
    nlohmann::json j{{"step", e.step}, {"loss", e.loss}, {"lr", e.lr}, {"grad_norm", e.grad_norm}};
    if (e.val_mrr) j["val_mrr"] = *e.val_mrr;
    return j;
}

struct TrainResult {
    std::vector<TrainLogEntry> log;
    double best_val_mrr = 0.0;
    long best_step = 0;
};

inline double validation_inbatch_mrr(BiEncoder& model, const std::vector<EncodedExample>& eval_set) {
    if (eval_set.size() < 2) return 0.0;
    std::vector<std::vector<double>> q, p;
    for (const auto& ex : eval_set) {
        q.push_back(model.question.embed(ex.q_text, ex.q_image ? &*ex.q_image : nullptr));
        p.push_back(model.passage.embed(ex.p_text, ex.p_image ? &*ex.p_image : nullptr));
    }
    return inbatch_mrr(q, p);
}

// One training stage: per step forward, contrastive loss, backward, clip
// at plan.clip_norm, Adam with the scheduled learning rate. Checkpoint
// selection by validation in-batch MRR; the best parameters are restored
// into the model on return.
inline TrainResult run_stage(const StagePlan& plan, const std::vector<EncodedExample>& data,
                             BiEncoder& model, const std::vector<EncodedExample>& eval_set) {
    if (data.empty() && plan.max_steps > 0)
        throw std::invalid_argument("run_stage: no training data");
    if (plan.stage == 3)
        model.unfreeze_all();
    else
        model.set_frozen_last_layers(plan.frozen_last_l);

    auto all_params = model.params();
    AdamState adam_state;
    TrainResult result;
    std::mt19937_64 rng(mix_seed(plan.seed, "batches"));

    std::map<std::string, Tensor> best_snapshot;
    auto snapshot = [&]() {
        best_snapshot.clear();
        for (Parameter* p : all_params) best_snapshot.emplace(p->name, p->value);
    };
    auto consider = [&](long step) {
        double mrr = validation_inbatch_mrr(model, eval_set);
        if (best_snapshot.empty() || mrr > result.best_val_mrr) {
            result.best_val_mrr = mrr;
            result.best_step = step;
            snapshot();
        }
        return mrr;
    };
    // Without a validation set the stage keeps its final parameters.
    const bool track_best = eval_set.size() >= 2;
    if (track_best) consider(0);

    int b = std::min<long>(plan.batch_size, static_cast<long>(data.size()));
    for (long step = 1; step <= plan.max_steps; ++step) {
        std::vector<const EncodedExample*> batch;
        if (b == static_cast<int>(data.size())) {
            for (const auto& ex : data) batch.push_back(&ex);
        } else {
            std::vector<size_t> idx(data.size());
            for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
            for (int i = 0; i < b; ++i) {
                size_t j = i + rng() % (idx.size() - i);
                std::swap(idx[i], idx[j]);
                batch.push_back(&data[idx[i]]);
            }
        }

        DropoutCtx ctx;
        ctx.training = true;
        ctx.prob = model.question.dropout_prob;
        ctx.seed = mix_seed(plan.seed, "step:" + std::to_string(step));

        std::vector<Var> q_vecs, p_vecs, n_vecs;
        for (const auto* ex : batch) {
            q_vecs.push_back(
                model.question.encode(ex->q_text, ex->q_image ? &*ex->q_image : nullptr, ctx));
            p_vecs.push_back(
                model.passage.encode(ex->p_text, ex->p_image ? &*ex->p_image : nullptr, ctx));
        }
        // hard negatives are shared across the batch as extra columns
        for (const auto* ex : batch)
            for (const auto& [ntext, nimage] : ex->negatives)
                n_vecs.push_back(model.passage.encode(ntext, nimage ? &*nimage : nullptr, ctx));

        Var loss = contrastive_loss(q_vecs, p_vecs, n_vecs);
        double loss_value = loss->value.at(0, 0);
        if (!std::isfinite(loss_value))
            throw std::runtime_error("non-finite loss at step " + std::to_string(step));

        for (Parameter* p : all_params) p->zero_grad();
        backward(loss);
        double grad_norm = clip_grad_norm(all_params, plan.clip_norm);
        AdamConfig cfg = plan.adam;
        long warmup = std::min(plan.warmup_steps, plan.max_steps);
        cfg.lr = lr_schedule(plan.schedule, plan.lr, warmup, plan.max_steps, step);
        adam_step(all_params, adam_state, cfg, step);

        TrainLogEntry entry{step, loss_value, cfg.lr, grad_norm, std::nullopt};
        if (track_best && (step % plan.val_every == 0 || step == plan.max_steps))
            entry.val_mrr = consider(step);
        result.log.push_back(entry);
    }

    for (Parameter* p : all_params) {
        auto it = best_snapshot.find(p->name);
        if (it != best_snapshot.end()) p->value = it->second;
    }
    return result;
}

// ---------------------------------------------------------------------------
// Hard-negative mining: top retrieved passages that do NOT contain any
// normalized answer string.

inline std::vector<std::string> mine_hard_negatives(
    const std::string& question, const AnswerKey& key,
    const std::function<ScoredList(const std::string&, int)>& retriever,
    const std::map<std::string, std::string>& passage_texts, int k) {
    ScoredList top = retriever(question, k * 4 + 16);
    std::vector<std::string> out;
    for (const auto& [pid, score] : top.entries) {
        auto it = passage_texts.find(pid);
        if (it == passage_texts.end()) continue;
        if (passage_relevance(it->second, key)) continue;
        out.push_back(pid);
        if (static_cast<int>(out.size()) >= k) break;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoints: named parameter tensors + config echo + optimizer state,
// JSON-framed, bit-exact round trip.

inline nlohmann::json tensor_to_json(const Tensor& t) {
    return {{"rows", t.rows}, {"cols", t.cols}, {"data", t.data}};
}

inline Tensor tensor_from_json(const nlohmann::json& j) {
    Tensor t(j.at("rows").get<int>(), j.at("cols").get<int>());
    t.data = j.at("data").get<std::vector<double>>();
    if (t.data.size() != static_cast<size_t>(t.rows) * t.cols)
        throw std::runtime_error("checkpoint tensor size mismatch");
    return t;
}

inline nlohmann::json checkpoint_to_json(BiEncoder& model, const nlohmann::json& config,
                                         const AdamState* adam = nullptr) {
    nlohmann::json params = nlohmann::json::object();
    for (Parameter* p : model.params())
        params[p->name] = {{"tensor", tensor_to_json(p->value)}, {"frozen", p->frozen}};
    nlohmann::json j{{"format", "mmict-checkpoint-v1"}, {"config", config}, {"params", params}};
    if (adam) {
        nlohmann::json m = nlohmann::json::object(), v = nlohmann::json::object();
        for (const auto& [name, t] : adam->m) m[name] = tensor_to_json(t);
        for (const auto& [name, t] : adam->v) v[name] = tensor_to_json(t);
        j["adam"] = {{"m", m}, {"v", v}, {"step_count", adam->step_count}};
    }
    return j;
}

inline void checkpoint_apply(const nlohmann::json& j, BiEncoder& model, AdamState* adam = nullptr) {
    const auto& params = j.at("params");
    for (Parameter* p : model.params()) {
        if (!params.contains(p->name))
            throw std::runtime_error("checkpoint missing parameter '" + p->name + "'");
        const auto& jp = params.at(p->name);
        Tensor t = tensor_from_json(jp.at("tensor"));
        if (t.rows != p->value.rows || t.cols != p->value.cols)
            throw std::runtime_error("checkpoint shape mismatch for '" + p->name + "'");
        p->value = std::move(t);
        p->grad = Tensor(p->value.rows, p->value.cols);
        p->frozen = jp.value("frozen", false);
    }
    if (adam && j.contains("adam")) {
        adam->m.clear();
        adam->v.clear();
        for (auto it = j["adam"]["m"].begin(); it != j["adam"]["m"].end(); ++it)
            adam->m.emplace(it.key(), tensor_from_json(it.value()));
        for (auto it = j["adam"]["v"].begin(); it != j["adam"]["v"].end(); ++it)
            adam->v.emplace(it.key(), tensor_from_json(it.value()));
        adam->step_count = j["adam"].value("step_count", 0L);
    }
}

}  // namespace mmict
