#include <doctest.h>

#include "oracles.hpp"
#include "terragen/conditioning.hpp"

using namespace terragen;
using terragen::testing::gradcheck;

namespace {

EncoderConfig toy_encoder() {
    EncoderConfig cfg;
    cfg.embed_dim = 16;
    cfg.fusion_heads = 2;
    cfg.fusion_key_dim = 8;
    cfg.mask_cnn_channels = {4, 8, 8, 16};
    cfg.mask_input_size = 16;
    return cfg;
}

std::vector<UnifiedEntity> toy_entities(int n, int grid = 16) {
    std::vector<UnifiedEntity> out;
    Rng rng(123);
    for (int i = 0; i < n; ++i) {
        UnifiedEntity u;
        u.category = 3 + i;
        double x1 = 0.1 + 0.05 * i, y1 = 0.2;
        u.box = BBox{x1, y1, x1 + 0.3, y1 + 0.4};
        u.mask = rasterize_box(u.box, grid, grid);
        out.push_back(u);
    }
    return out;
}

Layout toy_layout(TaskId task, int n) {
    Layout l;
    l.task = task;
    for (const auto& u : toy_entities(n)) {
        LayoutEntity e;
        e.category = u.category;
        e.box = u.box;
        e.mask = u.mask;
        l.entities.push_back(e);
    }
    l.recount_caption();
    return l;
}

}  // namespace

TEST_SUITE("conditioning") {

TEST_CASE("empty entity list encodes to nothing") {
    EncoderConfig cfg = toy_encoder();
    ParamStore params;
    Rng rng(1);
    init_conditioning_params(params, cfg, rng);
    CHECK(encode_boxes({}, cfg, params) == nullptr);
    CHECK(encode_masks({}, cfg, params) == nullptr);
}

TEST_CASE("identical box entities produce identical rows") {
    EncoderConfig cfg = toy_encoder();
    ParamStore params;
    Rng rng(2);
    init_conditioning_params(params, cfg, rng);
    auto ents = toy_entities(1);
    ents.push_back(ents[0]);
    Var feats = encode_boxes(ents, cfg, params);
    REQUIRE(feats->value.shape == std::vector<int>{2, cfg.embed_dim});
    for (int d = 0; d < cfg.embed_dim; ++d) {
        CHECK(feats->value.at(0, d) == feats->value.at(1, d));
    }
}

TEST_CASE("category id outside the table is rejected") {
    EncoderConfig cfg = toy_encoder();
    ParamStore params;
    Rng rng(3);
    init_conditioning_params(params, cfg, rng);
    auto ents = toy_entities(1);
    ents[0].category = cfg.n_categories + 5;
    CHECK_THROWS(encode_boxes(ents, cfg, params));
}

TEST_CASE("all-zero and all-one masks encode differently") {
    EncoderConfig cfg = toy_encoder();
    ParamStore params;
    Rng rng(4);
    init_conditioning_params(params, cfg, rng);
    UnifiedEntity zero;
    zero.category = 0;
    zero.box = BBox{0.1, 0.1, 0.9, 0.9};
    zero.mask = Mask::zeros(16, 16);
    UnifiedEntity one = zero;
    for (auto& b : one.mask.bits) b = 1;
    Var feats = encode_masks({zero, one}, cfg, params);
    double dist = 0;
    for (int d = 0; d < cfg.embed_dim; ++d) {
        double diff = feats->value.at(0, d) - feats->value.at(1, d);
        dist += diff * diff;
    }
    CHECK(dist > 0.0);
}

TEST_CASE("mask encoder is not translation-blind") {
    EncoderConfig cfg = toy_encoder();
    ParamStore params;
    Rng rng(5);
    init_conditioning_params(params, cfg, rng);
    UnifiedEntity a;
    a.category = 0;
    a.mask = Mask::zeros(16, 16);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) a.mask.at(r, c) = 1;
    a.box = *a.mask.tight_box();
    UnifiedEntity b = a;
    b.mask = Mask::zeros(16, 16);
    for (int r = 12; r < 16; ++r)
        for (int c = 12; c < 16; ++c) b.mask.at(r, c) = 1;
    b.box = *b.mask.tight_box();
    Var feats = encode_masks({a, b}, cfg, params);
    double dist = 0;
    for (int d = 0; d < cfg.embed_dim; ++d) {
        double diff = feats->value.at(0, d) - feats->value.at(1, d);
        dist += diff * diff;
    }
    CHECK(dist > 1e-12);
}

TEST_CASE("fuse with zero mask features and zero residual is the scaled box path") {
    EncoderConfig cfg = toy_encoder();
    cfg.alpha_box = 0.8;
    cfg.alpha_mask = 0.9;
    ParamStore params;
    Rng rng(6);
    init_conditioning_params(params, cfg, rng);
    Var wr = params.get("cond.fuse.wr");
    std::fill(wr->value.data.begin(), wr->value.data.end(), 0.0);

    auto ents = toy_entities(3);
    Var box = encode_boxes(ents, cfg, params);
    Var zero_mask = constant(Tensor::zeros({3, cfg.embed_dim}));
    Var out = fuse(box, zero_mask, cfg, params);
    for (int64_t i = 0; i < out->value.numel(); ++i) {
        CHECK(out->value[i] == doctest::Approx(0.8 * box->value[i]).epsilon(1e-12));
    }
}

TEST_CASE("fuse rejects mismatched shapes") {
    EncoderConfig cfg = toy_encoder();
    ParamStore params;
    Rng rng(7);
    init_conditioning_params(params, cfg, rng);
    Var a = constant(Tensor::zeros({2, cfg.embed_dim}));
    Var b = constant(Tensor::zeros({3, cfg.embed_dim}));
    CHECK_THROWS(fuse(a, b, cfg, params));
}

TEST_CASE("null bundle is layout-independent and flagged") {
    EncoderConfig cfg = toy_encoder();
    ParamStore params;
    Rng rng(8);
    init_conditioning_params(params, cfg, rng);
    ConditionBundle b1 = condition(toy_layout(TaskId::T1_SemanticSeg, 3), cfg, params, true, 16);
    ConditionBundle b2 = condition(toy_layout(TaskId::T4_Flood, 1), cfg, params, true, 16);
    CHECK(b1.null_flag);
    CHECK(b1.entity_count() == 0);
    CHECK(b1.stacked()->value.data == b2.stacked()->value.data);
}

TEST_CASE("empty layout yields task and caption tokens only") {
    EncoderConfig cfg = toy_encoder();
    ParamStore params;
    Rng rng(9);
    init_conditioning_params(params, cfg, rng);
    Layout empty;
    empty.task = TaskId::T3_Road;
    ConditionBundle b = condition(empty, cfg, params, false, 16);
    CHECK_FALSE(b.null_flag);
    CHECK(b.entity_count() == 0);
    CHECK(b.token_count() == 2);
    CHECK(b.stacked()->value.shape == std::vector<int>{2, cfg.embed_dim});
}

TEST_CASE("different tasks produce different entity tokens") {
    EncoderConfig cfg = toy_encoder();
    ParamStore params;
    Rng rng(10);
    init_conditioning_params(params, cfg, rng);
    Layout l1 = toy_layout(TaskId::T1_SemanticSeg, 2);
    Layout l2 = l1;
    l2.task = TaskId::T2_Building;
    ConditionBundle b1 = condition(l1, cfg, params, false, 16);
    ConditionBundle b2 = condition(l2, cfg, params, false, 16);
    double dist = 0;
    for (int64_t i = 0; i < b1.entity_tokens->value.numel(); ++i) {
        double d = b1.entity_tokens->value[i] - b2.entity_tokens->value[i];
        dist += d * d;
    }
    CHECK(dist > 1e-12);
}

TEST_CASE("entity order permutes tokens row-for-row") {
    EncoderConfig cfg = toy_encoder();
    ParamStore params;
    Rng rng(11);
    init_conditioning_params(params, cfg, rng);
    Layout l = toy_layout(TaskId::T1_SemanticSeg, 3);
    Layout p = l;
    std::swap(p.entities[0], p.entities[2]);
    ConditionBundle bl = condition(l, cfg, params, false, 16);
    ConditionBundle bp = condition(p, cfg, params, false, 16);
    int D = cfg.embed_dim;
    for (int d = 0; d < D; ++d) {
        CHECK(bl.entity_tokens->value.at(0, d) == doctest::Approx(bp.entity_tokens->value.at(2, d)).epsilon(1e-9));
        CHECK(bl.entity_tokens->value.at(2, d) == doctest::Approx(bp.entity_tokens->value.at(0, d)).epsilon(1e-9));
        CHECK(bl.entity_tokens->value.at(1, d) == doctest::Approx(bp.entity_tokens->value.at(1, d)).epsilon(1e-9));
    }
}

TEST_CASE("gradcheck through the full conditioning path") {
    EncoderConfig cfg = toy_encoder();
    ParamStore params;
    Rng rng(12);
    init_conditioning_params(params, cfg, rng);
    Layout l = toy_layout(TaskId::T1_SemanticSeg, 2);
    auto make_loss = [&]() {
        ConditionBundle b = condition(l, cfg, params, false, 16);
        Var stackv = b.stacked();
        return mean_all(mul(stackv, stackv));
    };
    std::vector<Var> check_params;
    for (const auto& [name, v] : params.items()) check_params.push_back(v);
    Rng coord_rng(13);
    CHECK(gradcheck(make_loss, check_params, coord_rng, 60) < 1e-4);
}

} // TEST_SUITE conditioning
