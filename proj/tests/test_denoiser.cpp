#include <doctest.h>

#include "oracles.hpp"
#include "terragen/denoiser.hpp"

using namespace terragen;
using terragen::testing::gradcheck;

namespace {

EncoderConfig toy_encoder() {
    EncoderConfig cfg;
    cfg.embed_dim = 16;
    cfg.fusion_heads = 2;
    cfg.fusion_key_dim = 8;
    cfg.mask_cnn_channels = {4, 8, 8, 16};
    return cfg;
}

UNetConfig toy_unet() {
    UNetConfig cfg;
    cfg.image_size = 16;
    cfg.in_channels = 3;
    cfg.base_channels = 8;
    cfg.levels = 2;
    cfg.channels = {8, 16};
    cfg.injection_resolutions = {8, 4};
    cfg.scale_weight_init = {0.4, 0.6};
    cfg.norm_groups = 4;
    cfg.temb_dim = 16;
    cfg.injection_mode = InjectionMode::AllLevels;
    return cfg;
}

std::vector<UnifiedEntity> grid_entities(int n, int grid) {
    std::vector<UnifiedEntity> out;
    for (int i = 0; i < n; ++i) {
        UnifiedEntity u;
        u.category = 3 + i;
        double x1 = 0.05 + 0.2 * i;
        u.box = BBox{x1, 0.1, x1 + 0.18, 0.6};
        u.mask = rasterize_box(u.box, grid, grid);
        out.push_back(u);
    }
    return out;
}

Layout layout_from(const std::vector<UnifiedEntity>& ents, TaskId task) {
    Layout l;
    l.task = task;
    for (const auto& u : ents) {
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

TEST_SUITE("denoiser") {

TEST_CASE("pyramid: full-frame mask gives an all-ones column at every scale") {
    UNetConfig cfg = toy_unet();
    UnifiedEntity u;
    u.category = 0;
    u.box = BBox{0, 0, 1, 1};
    u.mask = Mask::zeros(16, 16);
    for (auto& b : u.mask.bits) b = 1;
    MaskPyramid pyr = build_mask_pyramid({u}, cfg);
    REQUIRE(pyr.masks.size() == 2);
    for (const Tensor& m : pyr.masks) {
        for (int q = 0; q < m.shape[0]; ++q) {
            CHECK(m.at(q, 0) == 1.0);  // task
            CHECK(m.at(q, 1) == 1.0);  // caption
            CHECK(m.at(q, 2) == 1.0);  // the full-frame entity
        }
    }
}

TEST_CASE("pyramid: single pixel at the finest scale is a single one") {
    UNetConfig cfg = toy_unet();
    cfg.image_size = 16;
    cfg.injection_resolutions = {16};
    cfg.scale_weight_init = {1.0};
    UnifiedEntity u;
    u.category = 0;
    u.mask = Mask::zeros(16, 16);
    u.mask.at(5, 9) = 1;
    u.box = *u.mask.tight_box();
    MaskPyramid pyr = build_mask_pyramid({u}, cfg);
    const Tensor& m = pyr.masks[0];
    int64_t ones = 0;
    for (int q = 0; q < 256; ++q) ones += m.at(q, 2) == 1.0 ? 1 : 0;
    CHECK(ones == 1);
    CHECK(m.at(5 * 16 + 9, 2) == 1.0);
}

TEST_CASE("pyramid: 2x2 block at the origin pools to one coarse cell") {
    UNetConfig cfg = toy_unet();
    cfg.image_size = 16;
    cfg.injection_resolutions = {8};
    cfg.scale_weight_init = {1.0};
    UnifiedEntity u;
    u.category = 0;
    u.mask = Mask::zeros(16, 16);
    u.mask.at(0, 0) = u.mask.at(0, 1) = u.mask.at(1, 0) = u.mask.at(1, 1) = 1;
    u.box = *u.mask.tight_box();
    MaskPyramid pyr = build_mask_pyramid({u}, cfg);
    const Tensor& m = pyr.masks[0];
    for (int q = 0; q < 64; ++q) {
        CHECK(m.at(q, 2) == (q == 0 ? 1.0 : 0.0));
    }
}

TEST_CASE("initial scale weights are exactly the configured values") {
    Tensor logits = exact_softmax_logits({0.1, 0.3, 0.6});
    Var alphas = ScaleWeights{make_leaf(logits, true)}.alphas();
    CHECK(alphas->value[0] == 0.1);
    CHECK(alphas->value[1] == 0.3);
    CHECK(alphas->value[2] == 0.6);
    double sum = alphas->value[0] + alphas->value[1] + alphas->value[2];
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("scale weights stay positive and normalized after perturbation") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor logits = randn_init(rng, {3}, 3.0);
        Var alphas = ScaleWeights{make_leaf(logits, true)}.alphas();
        double sum = 0;
        for (int i = 0; i < 3; ++i) {
            CHECK(alphas->value[i] > 0.0);
            sum += alphas->value[i];
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("all-permissive single-scale masked attention equals plain attention") {
    Rng rng(7);
    int T = 12, m = 5, d = 8;
    Var q = constant(randn_init(rng, {T, d}, 1.0));
    Var k = constant(randn_init(rng, {m, d}, 1.0));
    Var v = constant(randn_init(rng, {m, d}, 1.0));
    std::vector<Tensor> masks = {Tensor::full({T, m}, 1.0)};
    Var alphas = constant(Tensor({1, 1}, {1.0}));

    Var masked = masked_cross_attention(q, k, v, masks, alphas, MaskMode::Additive);
    Var plain = matmul(softmax(scale(matmul(q, transpose2d(k)), 1.0 / std::sqrt(8.0)), 1), v);
    for (int64_t i = 0; i < masked->value.numel(); ++i) {
        CHECK(std::abs(masked->value[i] - plain->value[i]) < 1e-6);
    }
}

TEST_CASE("additive mode drives blocked-column mass below 1e-8") {
    Rng rng(9);
    int T = 9, m = 4, d = 8;
    Var q = constant(randn_init(rng, {T, d}, 1.0));
    Var k = constant(randn_init(rng, {m, d}, 1.0));
    Var v = constant(randn_init(rng, {m, d}, 1.0));
    Tensor mask = Tensor::full({T, m}, 1.0);
    for (int t = 0; t < T; ++t) mask.at(t, 2) = 0.0;  // block one entity everywhere
    AttnRecorder::Site site;
    Var alphas = constant(Tensor({1, 1}, {1.0}));
    masked_cross_attention(q, k, v, {mask}, alphas, MaskMode::Additive, &site);
    REQUIRE(site.per_scale.size() == 1);
    for (int t = 0; t < T; ++t) {
        CHECK(site.per_scale[0].at(t, 2) < 1e-8);
    }
}

TEST_CASE("attention rows sum to one in both mask modes") {
    Rng rng(11);
    int T = 6, m = 5, d = 8;
    Var q = constant(randn_init(rng, {T, d}, 1.0));
    Var k = constant(randn_init(rng, {m, d}, 1.0));
    Var v = constant(randn_init(rng, {m, d}, 1.0));
    Tensor mask = Tensor::full({T, m}, 1.0);
    mask.at(0, 3) = 0.0;
    mask.at(4, 1) = 0.0;
    for (MaskMode mode : {MaskMode::Additive, MaskMode::Multiplicative}) {
        AttnRecorder::Site site;
        Var alphas = constant(Tensor({1, 1}, {1.0}));
        masked_cross_attention(q, k, v, {mask}, alphas, mode, &site);
        for (int t = 0; t < T; ++t) {
            double sum = 0;
            for (int j = 0; j < m; ++j) sum += site.per_scale[0].at(t, j);
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
        }
    }
}

TEST_CASE("multi-scale output is the convex combination of single-scale outputs") {
    Rng rng(13);
    int T = 10, m = 4, d = 8;
    Var q = constant(randn_init(rng, {T, d}, 1.0));
    Var k = constant(randn_init(rng, {m, d}, 1.0));
    Var v = constant(randn_init(rng, {m, d}, 1.0));
    std::vector<Tensor> masks;
    for (int s = 0; s < 3; ++s) {
        Tensor mask = Tensor::full({T, m}, 1.0);
        for (int t = 0; t < T; ++t) {
            if ((t + s) % 3 == 0) mask.at(t, (s + 1) % m) = 0.0;
        }
        masks.push_back(std::move(mask));
    }
    Var alphas = constant(Tensor({1, 3}, {0.1, 0.3, 0.6}));
    Var combined = masked_cross_attention(q, k, v, masks, alphas, MaskMode::Additive);

    Tensor manual = Tensor::zeros({T, d});
    double weights[3] = {0.1, 0.3, 0.6};
    for (int s = 0; s < 3; ++s) {
        Var single = masked_cross_attention(q, k, v, {masks[static_cast<size_t>(s)]},
                                            constant(Tensor({1, 1}, {1.0})), MaskMode::Additive);
        for (int64_t i = 0; i < manual.numel(); ++i) manual[i] += weights[s] * single->value[i];
    }
    for (int64_t i = 0; i < manual.numel(); ++i) {
        CHECK(std::abs(combined->value[i] - manual[i]) < 1e-6);
    }
}

TEST_CASE("head-dim mismatch is rejected") {
    Var q = constant(Tensor::zeros({4, 8}));
    Var k = constant(Tensor::zeros({3, 6}));
    Var v = constant(Tensor::zeros({3, 6}));
    CHECK_THROWS(masked_cross_attention(q, k, v, {Tensor::full({4, 3}, 1.0)},
                                        constant(Tensor({1, 1}, {1.0})), MaskMode::Additive));
}

TEST_CASE("injection with zero output projection is the identity") {
    EncoderConfig enc = toy_encoder();
    UNetConfig unet = toy_unet();
    ParamStore params;
    Rng rng(17);
    init_conditioning_params(params, enc, rng);
    init_unet_params(params, unet, rng);

    auto ents = grid_entities(2, 16);
    Layout l = layout_from(ents, TaskId::T1_SemanticSeg);
    ConditionBundle bundle = condition(l, enc, params, false, 16);
    MaskPyramid pyr = build_mask_pyramid(unify(l, 16, 16), unet);

    Var f_in = constant(randn_init(rng, {1, 8, 8, 8}, 1.0));
    Var f_out = inject(f_in, bundle, pyr, params, unet, "inject.enc8");
    CHECK(f_out->value.data == f_in->value.data);  // wo is zero-initialized
}

TEST_CASE("empty layout injection attends only to task and caption") {
    EncoderConfig enc = toy_encoder();
    UNetConfig unet = toy_unet();
    ParamStore params;
    Rng rng(19);
    init_conditioning_params(params, enc, rng);
    init_unet_params(params, unet, rng);
    // non-zero wo so the attention result actually lands in f_out
    Var wo = params.get("inject.enc8.wo");
    wo->value = randn_init(rng, wo->value.shape, 0.1);

    Layout empty;
    empty.task = TaskId::T0_Detection;
    ConditionBundle bundle = condition(empty, enc, params, false, 16);
    MaskPyramid pyr = build_mask_pyramid({}, unet);
    Var f_in = constant(randn_init(rng, {1, 8, 8, 8}, 1.0));
    AttnRecorder rec;
    Var f_out = inject(f_in, bundle, pyr, params, unet, "inject.enc8", &rec);
    f_out->value.check_finite("inject");
    REQUIRE(rec.sites.size() == 1);
    CHECK(rec.sites[0].per_scale[0].shape == std::vector<int>{64, 2});
}

TEST_CASE("unet output shape matches input and is zero at initialization") {
    EncoderConfig enc = toy_encoder();
    UNetConfig unet = toy_unet();
    ParamStore params;
    Rng rng(23);
    init_conditioning_params(params, enc, rng);
    init_unet_params(params, unet, rng);

    auto ents = grid_entities(2, 16);
    Layout l = layout_from(ents, TaskId::T1_SemanticSeg);
    ConditionBundle bundle = condition(l, enc, params, false, 16);
    MaskPyramid pyr = build_mask_pyramid(unify(l, 16, 16), unet);
    Var x = constant(randn_init(rng, {1, 3, 16, 16}, 1.0));
    Var eps = unet_forward(x, 100, bundle, pyr, params, unet);
    CHECK(eps->value.shape == x->value.shape);
    for (double v : eps->value.data) CHECK(v == 0.0);  // zero-init head
}

TEST_CASE("image size not divisible by the level count is rejected") {
    UNetConfig bad = toy_unet();
    bad.image_size = 12;
    CHECK_THROWS(bad.validate());
}

TEST_CASE("entity permutation leaves eps_pred unchanged within 1e-6") {
    EncoderConfig enc = toy_encoder();
    UNetConfig unet = toy_unet();
    ParamStore params;
    Rng rng(29);
    init_conditioning_params(params, enc, rng);
    init_unet_params(params, unet, rng);
    // non-trivial injection path and head
    for (const char* name : {"inject.enc8.wo", "inject.enc4.wo", "inject.dec8.wo", "inject.dec4.wo",
                             "unet.head.w"}) {
        Var p = params.get(name);
        p->value = randn_init(rng, p->value.shape, 0.1);
    }

    auto ents = grid_entities(3, 16);
    Layout l = layout_from(ents, TaskId::T1_SemanticSeg);
    Layout p = l;
    std::swap(p.entities[0], p.entities[2]);

    Var x = constant(randn_init(rng, {1, 3, 16, 16}, 1.0));
    auto run = [&](const Layout& lay) {
        ConditionBundle b = condition(lay, enc, params, false, 16);
        MaskPyramid pyr = build_mask_pyramid(unify(lay, 16, 16), unet);
        return unet_forward(x, 55, b, pyr, params, unet)->value;
    };
    Tensor a = run(l), b = run(p);
    for (int64_t i = 0; i < a.numel(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-6);
}

TEST_CASE("gradient flows into the scale logits through injection") {
    EncoderConfig enc = toy_encoder();
    UNetConfig unet = toy_unet();
    ParamStore params;
    Rng rng(31);
    init_conditioning_params(params, enc, rng);
    init_unet_params(params, unet, rng);
    for (const char* name : {"inject.enc8.wo", "inject.enc4.wo", "inject.dec8.wo", "inject.dec4.wo",
                             "unet.head.w"}) {
        Var p = params.get(name);
        p->value = randn_init(rng, p->value.shape, 0.1);
    }
    auto ents = grid_entities(2, 16);
    Layout l = layout_from(ents, TaskId::T1_SemanticSeg);
    ConditionBundle bundle = condition(l, enc, params, false, 16);
    MaskPyramid pyr = build_mask_pyramid(unify(l, 16, 16), unet);
    Var x = constant(randn_init(rng, {1, 3, 16, 16}, 1.0));
    Var eps = unet_forward(x, 7, bundle, pyr, params, unet);
    backward(mean_all(mul(eps, eps)));
    Var logits = params.get("inject.scale_logits");
    REQUIRE(logits->has_grad());
    double norm = 0;
    for (double g : logits->grad.data) norm += g * g;
    CHECK(norm > 0.0);
}

TEST_CASE("gradcheck: unet through injection on a tiny config") {
    EncoderConfig enc = toy_encoder();
    UNetConfig unet;
    unet.image_size = 8;
    unet.in_channels = 1;
    unet.base_channels = 4;
    unet.levels = 2;
    unet.channels = {4, 8};
    unet.injection_resolutions = {4, 2};
    unet.scale_weight_init = {0.4, 0.6};
    unet.norm_groups = 2;
    unet.temb_dim = 8;
    unet.injection_mode = InjectionMode::AllLevels;

    ParamStore params;
    Rng rng(37);
    init_conditioning_params(params, enc, rng);
    init_unet_params(params, unet, rng);
    for (const char* name : {"inject.enc4.wo", "inject.enc2.wo", "inject.dec4.wo", "inject.dec2.wo",
                             "unet.head.w"}) {
        Var p = params.get(name);
        p->value = randn_init(rng, p->value.shape, 0.1);
    }

    auto ents = grid_entities(2, 8);
    Layout l = layout_from(ents, TaskId::T1_SemanticSeg);
    Var x = constant(randn_init(rng, {1, 1, 8, 8}, 1.0));
    auto make_loss = [&]() {
        ConditionBundle bundle = condition(l, enc, params, false, 8);
        MaskPyramid pyr = build_mask_pyramid(unify(l, 8, 8), unet);
        Var eps = unet_forward(x, 13, bundle, pyr, params, unet);
        return mean_all(mul(eps, eps));
    };
    std::vector<Var> check_params;
    for (const auto& [name, v] : params.items()) check_params.push_back(v);
    Rng coord_rng(41);
    CHECK(gradcheck(make_loss, check_params, coord_rng, 60) < 1e-4);
}

} // TEST_SUITE denoiser
