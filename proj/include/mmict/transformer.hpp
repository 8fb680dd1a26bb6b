#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "mmict/autodiff.hpp"
#include "mmict/rng.hpp"

namespace mmict {

struct TransformerConfig {
    int layers = 2;
    int model_dim = 32;
    int heads = 4;
    int ffn_dim = 64;
    double dropout_prob = 0.1;
    int max_seq = 64;
    bool use_position = true;
    bool use_type = true;  // learned text-vs-visual segment embedding

    void validate() const {
        if (model_dim % heads != 0)
            throw std::invalid_argument("model_dim must be divisible by heads");
        if (dropout_prob < 0.0 || dropout_prob >= 1.0)
            throw std::invalid_argument("dropout_prob must be in [0,1)");
    }
};

// Per-step dropout seeding: one counter per forward pass so replays with
// the same (seed, step) are bit-identical.
struct DropoutCtx {
    bool training = false;
    double prob = 0.0;
    std::uint64_t seed = 0;
    std::uint64_t counter = 0;

    std::uint64_t next() { return mix_seed(seed, "drop:" + std::to_string(counter++)); }
};

inline Var apply_dropout(const Var& x, DropoutCtx& ctx) {
    return dropout(x, ctx.prob, ctx.training, ctx.training ? ctx.next() : 0);
}

struct TransformerLayer {
    Parameter wq, wk, wv, wo, bq, bk, bv, bo;
    Parameter ln1_gain, ln1_bias;
    Parameter w1, b1, w2, b2;
    Parameter ln2_gain, ln2_bias;

    static TransformerLayer init(const TransformerConfig& cfg, int layer_idx, std::uint64_t seed) {
        int d = cfg.model_dim;
        int f = cfg.ffn_dim;
        std::string prefix = "layer" + std::to_string(layer_idx) + ".";
        double s = 0.02;
        auto rnd = [&](const std::string& name, int r, int c) {
            return Parameter(prefix + name, Tensor::randn(r, c, mix_seed(seed, prefix + name), s));
        };
        TransformerLayer l{
            rnd("wq", d, d), rnd("wk", d, d), rnd("wv", d, d), rnd("wo", d, d),
            Parameter(prefix + "bq", Tensor(1, d)), Parameter(prefix + "bk", Tensor(1, d)),
            Parameter(prefix + "bv", Tensor(1, d)), Parameter(prefix + "bo", Tensor(1, d)),
            Parameter(prefix + "ln1_gain", Tensor::full(1, d, 1.0)),
            Parameter(prefix + "ln1_bias", Tensor(1, d)),
            rnd("w1", d, f), Parameter(prefix + "b1", Tensor(1, f)),
            rnd("w2", f, d), Parameter(prefix + "b2", Tensor(1, d)),
            Parameter(prefix + "ln2_gain", Tensor::full(1, d, 1.0)),
            Parameter(prefix + "ln2_bias", Tensor(1, d))};
        return l;
    }

    std::vector<Parameter*> params() {
        return {&wq, &wk, &wv, &wo, &bq, &bk, &bv, &bo, &ln1_gain, &ln1_bias,
                &w1, &b1, &w2, &b2, &ln2_gain, &ln2_bias};
    }

    void set_frozen(bool frozen) {
        for (Parameter* p : params()) p->frozen = frozen;
    }
};

// Post-LN transformer encoder over a (seq x d) input with learned position
// and segment embeddings.
struct TransformerEncoder {
    TransformerConfig cfg;
    Parameter position;  // max_seq x d
    Parameter type;      // 2 x d
    std::vector<TransformerLayer> layers;

    static TransformerEncoder init(const TransformerConfig& cfg, std::uint64_t seed) {
        cfg.validate();
        TransformerEncoder enc;
        enc.cfg = cfg;
        enc.position = Parameter("position", Tensor::randn(cfg.max_seq, cfg.model_dim,
                                                           mix_seed(seed, "position"), 0.02));
        enc.type =
            Parameter("type", Tensor::randn(2, cfg.model_dim, mix_seed(seed, "type"), 0.02));
        for (int i = 0; i < cfg.layers; ++i)
            enc.layers.push_back(TransformerLayer::init(cfg, i, seed));
        return enc;
    }

    std::vector<Parameter*> params() {
        std::vector<Parameter*> out{&position, &type};
        for (auto& l : layers)
            for (Parameter* p : l.params()) out.push_back(p);
        return out;
    }

    // Freezes the last l layers (the Stage-2 contract). Embeddings and the
    // first layers stay trainable.
    void freeze_last_layers(int l) {
        for (int i = 0; i < cfg.layers; ++i) layers[i].set_frozen(i >= cfg.layers - l);
    }

    void unfreeze_all() {
        for (auto& l : layers) l.set_frozen(false);
        position.frozen = false;
        type.frozen = false;
    }

    Var attention(TransformerLayer& l, const Var& x, DropoutCtx& ctx) {
        Var q = add_rowwise(matmul(x, leaf(l.wq)), leaf(l.bq));
        Var k = add_rowwise(matmul(x, leaf(l.wk)), leaf(l.bk));
        Var v = add_rowwise(matmul(x, leaf(l.wv)), leaf(l.bv));
        int dh = cfg.model_dim / cfg.heads;
        Var heads_out;
        for (int h = 0; h < cfg.heads; ++h) {
            Var qh = slice_cols(q, h * dh, dh);
            Var kh = slice_cols(k, h * dh, dh);
            Var vh = slice_cols(v, h * dh, dh);
            Var o = scaled_dot_attention(qh, kh, vh);
            heads_out = h == 0 ? o : concat_cols(heads_out, o);
        }
        return add_rowwise(matmul(heads_out, leaf(l.wo)), leaf(l.bo));
    }

    Var forward(Var x, const std::vector<int>& token_types, DropoutCtx& ctx) {
        int seq = x->value.rows;
        if (seq > cfg.max_seq)
            throw std::invalid_argument("sequence length " + std::to_string(seq) +
                                        " exceeds max_seq " + std::to_string(cfg.max_seq));
        if (cfg.use_position) {
            std::vector<int> pos(seq);
            for (int i = 0; i < seq; ++i) pos[i] = i;
            x = add(x, gather_rows(leaf(position), pos));
        }
        if (cfg.use_type) x = add(x, gather_rows(leaf(type), token_types));
        for (auto& l : layers) {
            Var a = apply_dropout(attention(l, x, ctx), ctx);
            x = add_rowwise(mul_rowwise(layer_norm(add(x, a)), leaf(l.ln1_gain)), leaf(l.ln1_bias));
            Var f = add_rowwise(matmul(gelu(add_rowwise(matmul(x, leaf(l.w1)), leaf(l.b1))),
                                       leaf(l.w2)),
                                leaf(l.b2));
            f = apply_dropout(f, ctx);
            x = add_rowwise(mul_rowwise(layer_norm(add(x, f)), leaf(l.ln2_gain)), leaf(l.ln2_bias));
        }
        return x;
    }
};

}  // namespace mmict
