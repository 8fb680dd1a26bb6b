#include "doctest.h"

#include <random>

#include "mmict/fusion.hpp"

using namespace mmict;

namespace {

TransformerConfig small_cfg(int d = 16, int layers = 1, int heads = 2) {
    TransformerConfig cfg;
    cfg.layers = layers;
    cfg.model_dim = d;
    cfg.heads = heads;
    cfg.ffn_dim = 2 * d;
    cfg.dropout_prob = 0.0;
    cfg.max_seq = 16;
    return cfg;
}

TextEncoding random_text(int tokens, int d, std::uint64_t seed) {
    TextEncoding enc;
    for (int i = 0; i < tokens; ++i) enc.tokens.push_back("t" + std::to_string(i));
    enc.embeddings = Tensor::randn(1 + tokens, d, seed);
    // keep the summary slot consistent with its definition: mean of tokens
    for (int j = 0; j < d; ++j) {
        double m = 0.0;
        for (int i = 1; i <= tokens; ++i) m += enc.embeddings.at(i, j);
        enc.embeddings.at(0, j) = tokens ? m / tokens : 0.0;
    }
    return enc;
}

ImageEncoding random_image(int c, std::uint64_t seed) {
    ImageEncoding img;
    img.vector = Tensor::randn(1, c, seed);
    img.source = ImageRef{"synth://ent0/fixture", "jpeg"};
    return img;
}

}  // namespace

TEST_CASE("eca produces a single d-dim vector and needs an image") {
    auto model = FusionModel::init(FusionKind::Eca, small_cfg(), 8, 3);
    auto text = random_text(4, 16, 10);
    auto img = random_image(8, 11);
    DropoutCtx ctx;
    Var out = model.eca_encode(text, &img, ctx);
    CHECK(out->value.rows == 1);
    CHECK(out->value.cols == 16);
    CHECK_THROWS_WITH_AS(model.eca_encode(text, nullptr, ctx), doctest::Contains("requires an image"),
                         std::invalid_argument);
    auto wrong = random_image(5, 12);
    CHECK_THROWS_WITH_AS(model.eca_encode(text, &wrong, ctx),
                         doctest::Contains("image dimension mismatch"), std::invalid_argument);
}

TEST_CASE("eca image pathway carries gradient into the projection") {
    auto model = FusionModel::init(FusionKind::Eca, small_cfg(), 8, 5);
    auto text = random_text(3, 16, 20);
    auto img = random_image(8, 21);
    DropoutCtx ctx;
    Var out = model.eca_encode(text, &img, ctx);
    Var loss = sum_all(mul_elem(out, out));
    for (Parameter* p : model.params()) p->zero_grad();
    backward(loss);
    CHECK(model.w_c.grad.l2_norm() > 0.0);
}

TEST_CASE("eca image changes the output") {
    auto model = FusionModel::init(FusionKind::Eca, small_cfg(), 8, 7);
    auto text = random_text(3, 16, 30);
    auto img1 = random_image(8, 31);
    auto img2 = random_image(8, 32);
    DropoutCtx ctx;
    auto a = model.eca_encode(text, &img1, ctx)->value.data;
    auto b = model.eca_encode(text, &img2, ctx)->value.data;
    CHECK(a != b);
}

TEST_CASE("without position encodings eca is invariant to text token order") {
    auto cfg = small_cfg(16, 2, 2);
    cfg.use_position = false;
    auto model = FusionModel::init(FusionKind::Eca, cfg, 8, 9);
    auto text = random_text(5, 16, 40);
    auto img = random_image(8, 41);
    DropoutCtx ctx;
    auto base = model.eca_encode(text, &img, ctx)->value.data;

    // permute the token rows (summary row 0 stays; it is the token mean)
    TextEncoding shuffled = text;
    std::vector<int> perm{3, 1, 4, 2, 5};
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 16; ++j)
            shuffled.embeddings.at(1 + i, j) = text.embeddings.at(perm[i], j);
    auto permuted = model.eca_encode(shuffled, &img, ctx)->value.data;
    for (size_t i = 0; i < base.size(); ++i) CHECK(permuted[i] == doctest::Approx(base[i]).epsilon(1e-12));
}

TEST_CASE("ilf with no image reduces to the text-only pathway") {
    auto model = FusionModel::init(FusionKind::Ilf, small_cfg(), 8, 13);
    auto text = random_text(4, 16, 50);
    DropoutCtx ctx;
    auto a = model.ilf_encode(text, nullptr, ctx)->value.data;
    auto b = model.text_encode(text, ctx)->value.data;
    CHECK(a == b);
}

TEST_CASE("ilf sum-of-projections equals one concatenated projection") {
    // layer_norm(s W_t + v W_c) == layer_norm([s v] W) with W = [W_t; W_c]
    const int d = 16, c = 8;
    auto model = FusionModel::init(FusionKind::Ilf, small_cfg(d), c, 17);
    std::mt19937_64 seeds(60);
    for (int trial = 0; trial < 100; ++trial) {
        auto text = random_text(3, d, seeds());
        auto img = random_image(c, seeds());
        DropoutCtx ctx;
        auto fused = model.ilf_encode(text, &img, ctx)->value;

        Tensor concat_in(1, d + c);
        for (int j = 0; j < d; ++j) concat_in.at(0, j) = text.embeddings.at(0, j);
        for (int j = 0; j < c; ++j) concat_in.at(0, d + j) = img.vector.at(0, j);
        Tensor w(d + c, d);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) w.at(i, j) = model.w_t.value.at(i, j);
        for (int i = 0; i < c; ++i)
            for (int j = 0; j < d; ++j) w.at(d + i, j) = model.w_c.value.at(i, j);
        Var alt = add_rowwise(
            mul_rowwise(layer_norm(matmul(constant(concat_in), constant(w))), leaf(model.ln_gain)),
            leaf(model.ln_bias));
        for (int j = 0; j < d; ++j)
            CHECK(std::abs(fused.at(0, j) - alt->value.at(0, j)) < 1e-12);
    }
}

TEST_CASE("ilf with a zero image matches the text pathway") {
    auto model = FusionModel::init(FusionKind::Ilf, small_cfg(), 8, 19);
    auto text = random_text(4, 16, 70);
    ImageEncoding zero;
    zero.vector = Tensor(1, 8);
    DropoutCtx ctx;
    auto a = model.ilf_encode(text, &zero, ctx)->value.data;
    auto b = model.text_encode(text, ctx)->value.data;
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-14));
}

TEST_CASE("embed runs dropout-free and deterministically") {
    auto cfg = small_cfg();
    cfg.dropout_prob = 0.5;  // must not fire in eval mode
    auto model = FusionModel::init(FusionKind::Eca, cfg, 8, 23);
    auto text = random_text(4, 16, 80);
    auto img = random_image(8, 81);
    auto a = model.embed(text, &img);
    auto b = model.embed(text, &img);
    CHECK(a == b);
}

// ---------------------------------------------------------------------------

namespace {
ScoredList list_of(std::vector<std::pair<std::string, double>> entries,
                   const std::string& qid = "q") {
    ScoredList l;
    l.question_id = qid;
    l.entries = std::move(entries);
    return l;
}
}  // namespace

TEST_CASE("late fusion alpha=1 reproduces the text ranking, alpha=0 the image ranking") {
    auto text = list_of({{"a", 5.0}, {"b", 3.0}, {"c", 1.0}});
    auto image = list_of({{"a", 0.1}, {"b", 0.9}, {"c", 0.5}});
    auto t_only = late_fusion_scores(text, image, 1.0).fused;
    CHECK(t_only.entries[0].first == "a");
    CHECK(t_only.entries[1].first == "b");
    CHECK(t_only.entries[2].first == "c");
    auto i_only = late_fusion_scores(text, image, 0.0).fused;
    CHECK(i_only.entries[0].first == "b");
    CHECK(i_only.entries[1].first == "c");
    CHECK(i_only.entries[2].first == "a");
}

TEST_CASE("opposed modalities tie at alpha=0.5 and break by passage id") {
    auto text = list_of({{"x", 2.0}, {"y", 0.0}});
    auto image = list_of({{"x", 0.0}, {"y", 2.0}});
    auto res = late_fusion_scores(text, image, 0.5);
    CHECK(res.fused.entries[0].second == doctest::Approx(0.0));
    CHECK(res.fused.entries[1].second == doctest::Approx(0.0));
    CHECK(res.fused.entries[0].first == "x");
    CHECK(res.fused.entries[1].first == "y");
}

TEST_CASE("late fusion flags constant score lists instead of dividing by zero") {
    auto text = list_of({{"x", 1.0}, {"y", 1.0}});
    auto image = list_of({{"x", 0.3}, {"y", 0.7}});
    auto res = late_fusion_scores(text, image, 0.5);
    CHECK(res.text_constant);
    CHECK_FALSE(res.image_constant);
    CHECK(res.fused.entries[0].first == "y");
}

TEST_CASE("late fusion rejects mismatched candidate sets") {
    auto text = list_of({{"x", 1.0}, {"y", 2.0}});
    auto image = list_of({{"x", 1.0}, {"z", 2.0}});
    CHECK_THROWS_WITH_AS(late_fusion_scores(text, image, 0.5), doctest::Contains("'y'"),
                         std::invalid_argument);
    auto short_list = list_of({{"x", 1.0}});
    CHECK_THROWS_AS(late_fusion_scores(short_list, short_list, 0.5), std::invalid_argument);
}

TEST_CASE("grid search over a single point returns that point") {
    RankedRun text{{"q", list_of({{"r", 2.0}, {"f", 1.0}})}};
    RankedRun image{{"q", list_of({{"r", 1.0}, {"f", 2.0}})}};
    Qrels qrels;
    qrels.relevant["q"] = {"r"};
    CHECK(grid_search_alpha_over(text, image, qrels, {0.5}) == 0.5);
}

TEST_CASE("grid search picks the smallest alpha under symmetric inputs") {
    RankedRun text{{"q", list_of({{"r", 2.0}, {"f", 1.0}})}};
    Qrels qrels;
    qrels.relevant["q"] = {"r"};
    CHECK(grid_search_alpha(text, text, qrels, 0.25) == 0.0);
}

TEST_CASE("grid search recovers a text-dominant optimum") {
    // relevant wins only when the text signal outweighs the image signal
    RankedRun text{{"q", list_of({{"zrel", 1.0}, {"afoil", 0.0}})}};
    RankedRun image{{"q", list_of({{"zrel", 0.0}, {"afoil", 1.0}})}};
    Qrels qrels;
    qrels.relevant["q"] = {"zrel"};
    // at alpha=0.5 scores tie and "afoil" wins on id, so only alpha=1 is perfect
    CHECK(grid_search_alpha_over(text, image, qrels, {0.0, 0.5, 1.0}) == 1.0);
}

TEST_CASE("grid step validation") {
    RankedRun text{{"q", list_of({{"a", 1.0}, {"b", 0.0}})}};
    Qrels qrels;
    qrels.relevant["q"] = {"a"};
    CHECK_THROWS_AS(grid_search_alpha(text, text, qrels, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(grid_search_alpha(text, text, qrels, 0.9), std::invalid_argument);
}

TEST_CASE("fusion kind round-trips through strings") {
    for (auto k : {FusionKind::Eca, FusionKind::Ilf, FusionKind::TextOnly})
        CHECK(fusion_kind_from_string(to_string(k)) == k);
    CHECK_THROWS_AS(fusion_kind_from_string("bilinear"), std::invalid_argument);
}
