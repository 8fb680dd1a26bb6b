#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmict/backend.hpp"
#include "mmict/eval.hpp"
#include "mmict/index.hpp"
#include "mmict/run.hpp"
#include "mmict/transformer.hpp"

namespace mmict {

enum class FusionKind { Eca, Ilf, TextOnly };

inline std::string to_string(FusionKind k) {
    switch (k) {
        case FusionKind::Eca: return "eca";
        case FusionKind::Ilf: return "ilf";
        case FusionKind::TextOnly: return "text";
    }
    return "?";
}

inline FusionKind fusion_kind_from_string(const std::string& s) {
    if (s == "eca") return FusionKind::Eca;
    if (s == "ilf") return FusionKind::Ilf;
    if (s == "text" || s == "text-only") return FusionKind::TextOnly;
    throw std::invalid_argument("unknown fusion kind '" + s + "'");
}

// One encoder tower producing d-dim embeddings.
//  - ECA: image vector projected by W_c joins the token sequence as a
//    visual token (appended after the last text token); a transformer
//    mixes the modalities; output is the summary position.
//  - ILF: layer_norm(summary * W_t + image * W_c), with affine.
//  - TextOnly: layer_norm(summary * W_t), the text-only bi-encoder
//    baseline.
struct FusionModel {
    FusionKind kind = FusionKind::Ilf;
    int image_dim = 48;
    TransformerEncoder transformer;  // ECA only
    Parameter w_c;                   // c x d (ECA, ILF)
    Parameter w_t;                   // d x d (ILF, TextOnly)
    Parameter ln_gain, ln_bias;      // post-sum layer norm (ILF, TextOnly)
    double dropout_prob = 0.1;
    int frozen_last_l = 0;

    static FusionModel init(FusionKind kind, const TransformerConfig& tcfg, int image_dim,
                            std::uint64_t seed, const std::string& name_prefix = "") {
        FusionModel m;
        m.kind = kind;
        m.image_dim = image_dim;
        m.dropout_prob = tcfg.dropout_prob;
        int d = tcfg.model_dim;
        auto pname = [&](const std::string& n) { return name_prefix + n; };
        if (kind == FusionKind::Eca) {
            m.transformer = TransformerEncoder::init(tcfg, mix_seed(seed, name_prefix + "enc"));
            for (Parameter* p : m.transformer.params()) p->name = name_prefix + p->name;
        }
        if (kind != FusionKind::TextOnly)
            m.w_c = Parameter(pname("w_c"), Tensor::randn(image_dim, d, mix_seed(seed, pname("w_c")),
                                                          1.0 / std::sqrt(double(image_dim))));
        if (kind != FusionKind::Eca) {
            m.w_t = Parameter(pname("w_t"),
                              Tensor::randn(d, d, mix_seed(seed, pname("w_t")), 1.0 / std::sqrt(double(d))));
            m.ln_gain = Parameter(pname("ln_gain"), Tensor::full(1, d, 1.0));
            m.ln_bias = Parameter(pname("ln_bias"), Tensor(1, d));
        }
        return m;
    }

    int dim() const { return kind == FusionKind::Eca ? transformer.cfg.model_dim : w_t.value.cols; }

    std::vector<Parameter*> params() {
        std::vector<Parameter*> out;
        if (kind == FusionKind::Eca) {
            out = transformer.params();
            out.push_back(&w_c);
        } else {
            out.push_back(&w_t);
            if (kind == FusionKind::Ilf) out.push_back(&w_c);
            out.push_back(&ln_gain);
            out.push_back(&ln_bias);
        }
        return out;
    }

    // Stage-2 freezing: last l transformer layers for ECA; ILF/TextOnly
    // have no trainable text tower, so this only records the setting.
    void set_frozen_last_layers(int l) {
        frozen_last_l = l;
        if (kind == FusionKind::Eca) transformer.freeze_last_layers(l);
    }

    void unfreeze_all() {
        frozen_last_l = 0;
        if (kind == FusionKind::Eca) transformer.unfreeze_all();
        for (Parameter* p : params()) p->frozen = false;
    }

    Var encode(const TextEncoding& text, const ImageEncoding* image, DropoutCtx& ctx) {
        switch (kind) {
            case FusionKind::Eca: return eca_encode(text, image, ctx);
            case FusionKind::Ilf: return ilf_encode(text, image, ctx);
            case FusionKind::TextOnly: return text_encode(text, ctx);
        }
        throw std::logic_error("unreachable");
    }

    Var eca_encode(const TextEncoding& text, const ImageEncoding* image, DropoutCtx& ctx) {
        if (!image) throw std::invalid_argument("eca_encode requires an image");
        if (static_cast<int>(image->vector.cols) != image_dim)
            throw std::invalid_argument("image dimension mismatch: expected " +
                                        std::to_string(image_dim));
        Var x = constant(text.embeddings);
        Var visual = apply_dropout(matmul(constant(image->vector), leaf(w_c)), ctx);
        x = concat_rows(x, visual);
        std::vector<int> types(x->value.rows, 0);
        types.back() = 1;
        Var out = transformer.forward(x, types, ctx);
        return take_position(out, 0);
    }

    Var ilf_encode(const TextEncoding& text, const ImageEncoding* image, DropoutCtx& ctx) {
        Var summary = take_position(constant(text.embeddings), 0);
        Var t = apply_dropout(matmul(summary, leaf(w_t)), ctx);
        Var fused = t;
        if (image) {
            Var e_c = apply_dropout(matmul(constant(image->vector), leaf(w_c)), ctx);
            fused = add(t, e_c);
        }
        return add_rowwise(mul_rowwise(layer_norm(fused), leaf(ln_gain)), leaf(ln_bias));
    }

    Var text_encode(const TextEncoding& text, DropoutCtx& ctx) {
        Var summary = take_position(constant(text.embeddings), 0);
        Var t = apply_dropout(matmul(summary, leaf(w_t)), ctx);
        return add_rowwise(mul_rowwise(layer_norm(t), leaf(ln_gain)), leaf(ln_bias));
    }

    // Eval-mode encoding (dropout off) to a plain vector.
    std::vector<double> embed(const TextEncoding& text, const ImageEncoding* image) {
        DropoutCtx ctx;  // training=false
        Var v = encode(text, image, ctx);
        return v->value.data;
    }
};

// ---------------------------------------------------------------------------
// Late fusion (score-level): alpha * znorm(text) + (1 - alpha) * znorm(image)

struct LateFusionResult {
    ScoredList fused;
    bool text_constant = false;
    bool image_constant = false;
};

// Both lists must cover the same candidate set. Text scores are expected
// to be dot products, image scores cosines; each is z-normalized over the
// per-question candidate pool before mixing.
inline LateFusionResult late_fusion_scores(const ScoredList& text_scores,
                                           const ScoredList& image_scores, double alpha) {
    if (text_scores.entries.size() != image_scores.entries.size())
        throw std::invalid_argument("late fusion candidate sets differ in size");
    if (text_scores.entries.size() < 2)
        throw std::invalid_argument("late fusion needs at least 2 candidates to normalize");
    std::map<std::string, double> image_by_id;
    for (const auto& [pid, s] : image_scores.entries) image_by_id[pid] = s;

    std::vector<std::string> ids;
    std::vector<double> t, i;
    for (const auto& [pid, s] : text_scores.entries) {
        auto it = image_by_id.find(pid);
        if (it == image_by_id.end())
            throw std::invalid_argument("late fusion candidate sets differ at passage '" + pid +
                                        "'");
        ids.push_back(pid);
        t.push_back(s);
        i.push_back(it->second);
    }
    LateFusionResult res;
    auto tz = znorm(t, &res.text_constant);
    auto iz = znorm(i, &res.image_constant);
    res.fused.question_id = text_scores.question_id;
    for (size_t k = 0; k < ids.size(); ++k)
        res.fused.entries.emplace_back(ids[k], alpha * tz[k] + (1.0 - alpha) * iz[k]);
    res.fused.sort_entries();
    return res;
}

inline RankedRun late_fusion_run(const RankedRun& text_run, const RankedRun& image_run,
                                 double alpha) {
    RankedRun out;
    for (const auto& [qid, tlist] : text_run) {
        auto it = image_run.find(qid);
        if (it == image_run.end())
            throw std::invalid_argument("image run missing question '" + qid + "'");
        out[qid] = late_fusion_scores(tlist, it->second, alpha).fused;
    }
    return out;
}

// Grid search for the interpolation weight maximizing MRR on validation.
// Ties break toward the smaller alpha.
inline double grid_search_alpha_over(const RankedRun& text_run, const RankedRun& image_run,
                                     const Qrels& qrels, const std::vector<double>& grid) {
    if (text_run.empty()) throw std::invalid_argument("empty validation set");
    if (grid.empty()) throw std::invalid_argument("empty alpha grid");
    double best_alpha = grid.front(), best_mrr = -1.0;
    for (double a : grid) {
        RankedRun fused = late_fusion_run(text_run, image_run, a);
        double mrr = mrr_at_k(fused, qrels, 1 << 30).mean;
        if (mrr > best_mrr + 1e-12) {
            best_mrr = mrr;
            best_alpha = a;
        }
    }
    return best_alpha;
}

inline double grid_search_alpha(const RankedRun& text_run, const RankedRun& image_run,
                                const Qrels& qrels, double grid_step = 0.01) {
    if (grid_step <= 0.0 || grid_step > 0.5)
        throw std::invalid_argument("grid_step must be in (0, 0.5]");
    std::vector<double> grid;
    for (int k = 0;; ++k) {
        double a = k * grid_step;
        if (a >= 1.0 - 1e-12) {
            grid.push_back(1.0);
            break;
        }
        grid.push_back(a);
    }
    return grid_search_alpha_over(text_run, image_run, qrels, grid);
}

}  // namespace mmict
