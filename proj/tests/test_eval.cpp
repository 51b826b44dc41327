#include <doctest.h>

#include <algorithm>

#include "oracles.hpp"
#include "terragen/eval.hpp"
#include "terragen/rng.hpp"

using namespace terragen;

namespace {

FeatureStats stats_1d(double mu, double var) {
    FeatureStats s;
    s.mu = Tensor({1}, {mu});
    s.sigma = Tensor({1, 1}, {var});
    s.n = 100;
    return s;
}

BBox random_box(Rng& rng) {
    double x1 = rng.uniform(0.0, 0.7), y1 = rng.uniform(0.0, 0.7);
    return BBox{x1, y1, x1 + rng.uniform(0.1, 0.3), y1 + rng.uniform(0.1, 0.3)};
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("fid of identical stats is zero") {
    Rng rng(3);
    FeatureStats s;
    int d = 6;
    s.mu = randn_init(rng, {d}, 1.0);
    Tensor a = randn_init(rng, {d, d}, 1.0);
    s.sigma = Tensor::zeros({d, d});
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            for (int k = 0; k < d; ++k) s.sigma.at(i, j) += a.at(i, k) * a.at(j, k) / d;
    s.n = 50;
    CHECK(std::abs(fid(s, s)) < 1e-8);
}

TEST_CASE("fid 1-D closed forms") {
    CHECK(fid(stats_1d(0.0, 1.0), stats_1d(3.0, 1.0)) == doctest::Approx(9.0).epsilon(1e-10));
    CHECK(fid(stats_1d(0.0, 4.0), stats_1d(0.0, 1.0)) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("fid is symmetric") {
    Rng rng(5);
    auto make = [&](uint64_t seed) {
        Rng r(seed);
        FeatureStats s;
        int d = 5;
        s.mu = randn_init(r, {d}, 1.0);
        Tensor a = randn_init(r, {d, d}, 1.0);
        s.sigma = Tensor::zeros({d, d});
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j)
                for (int k = 0; k < d; ++k) s.sigma.at(i, j) += a.at(i, k) * a.at(j, k) / d;
        s.n = 50;
        return s;
    };
    FeatureStats a = make(11), b = make(22);
    CHECK(std::abs(fid(a, b) - fid(b, a)) < 1e-8);
    CHECK(fid(a, b) > 0.0);
    (void)rng;
}

TEST_CASE("fid rejects dimension mismatches and indefinite inputs") {
    FeatureStats a = stats_1d(0, 1);
    FeatureStats b;
    b.mu = Tensor::zeros({2});
    b.sigma = Tensor::zeros({2, 2});
    b.n = 10;
    CHECK_THROWS(fid(a, b));
    FeatureStats bad = stats_1d(0, -0.5);
    CHECK_THROWS(fid(bad, a));
}

TEST_CASE("duplicated image set collapses the covariance") {
    Rng rng(7);
    ImageU8 img = ImageU8::create(16, 16, 3);
    for (auto& v : img.data) v = static_cast<uint8_t>(rng.uniform_int(256));
    std::vector<ImageU8> images(10, img);
    FeatureStats s = features(images);
    for (double v : s.sigma.data) CHECK(std::abs(v) < 1e-24);  // zero up to mean round-off
    CHECK(std::abs(fid(s, s)) < 1e-8);
}

TEST_CASE("fid of a set against itself through the extractor is zero") {
    std::vector<ImageU8> images;
    Rng rng(9);
    for (int i = 0; i < 12; ++i) {
        ImageU8 img = ImageU8::create(16, 16, 3);
        for (auto& v : img.data) v = static_cast<uint8_t>(rng.uniform_int(256));
        images.push_back(std::move(img));
    }
    FeatureStats s = features(images);
    CHECK(std::abs(fid(s, s)) < 1e-8);
}

TEST_CASE("disjoint palettes are farther apart than shared palettes") {
    auto render = [](uint64_t seed, bool alt_palette) {
        Rng rng(seed);
        std::vector<ImageU8> out;
        for (int i = 0; i < 16; ++i) {
            ImageU8 img = ImageU8::create(16, 16, 3);
            for (int y = 0; y < 16; ++y)
                for (int x = 0; x < 16; ++x) {
                    bool blob = ((x / 4) + (y / 4)) % 2 == 0;
                    uint8_t base[3] = {40, 50, 40};
                    uint8_t ca[3] = {220, 60, 60};
                    uint8_t cb[3] = {60, 90, 220};
                    const uint8_t* c = blob ? (alt_palette ? cb : ca) : base;
                    for (int ch = 0; ch < 3; ++ch) {
                        img.at(y, x, ch) = static_cast<uint8_t>(
                            std::clamp<int>(c[ch] + rng.uniform_int(9) - 4, 0, 255));
                    }
                }
            out.push_back(std::move(img));
        }
        return out;
    };
    FeatureStats red1 = features(render(1, false));
    FeatureStats red2 = features(render(2, false));
    FeatureStats blue = features(render(3, true));
    CHECK(fid(red1, blue) > fid(red1, red2));
}

TEST_CASE("unknown extractor names are rejected, registry lists the default") {
    CHECK_THROWS(get_extractor("no-such-extractor"));
    auto names = extractor_names();
    CHECK(std::find(names.begin(), names.end(), "down8-proj64") != names.end());
}

TEST_CASE("oracle detector on a blank background finds nothing") {
    ImageU8 img = ImageU8::create(24, 24, 3);
    for (int y = 0; y < 24; ++y)
        for (int x = 0; x < 24; ++x) {
            img.at(y, x, 0) = 45;
            img.at(y, x, 1) = 55;
            img.at(y, x, 2) = 45;
        }
    CHECK(oracle_detect(img, default_palette()).empty());
}

TEST_CASE("touching same-category rectangles merge into one component") {
    ImageU8 img = ImageU8::create(24, 24, 3);
    auto color = default_palette().at(categories().id_of("building"));
    for (int y = 4; y < 10; ++y)
        for (int x = 4; x < 16; ++x)
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = color[static_cast<size_t>(c)];
    // second rectangle shares an edge
    for (int y = 10; y < 16; ++y)
        for (int x = 8; x < 12; ++x)
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = color[static_cast<size_t>(c)];
    auto dets = oracle_detect(img, default_palette());
    REQUIRE(dets.size() == 1);
    CHECK(dets[0].category == categories().id_of("building"));
    CHECK(dets[0].mask.area() == 6 * 12 + 6 * 4);
}

TEST_CASE("components below four pixels are ignored") {
    ImageU8 img = ImageU8::create(16, 16, 3);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) {
            img.at(y, x, 0) = 45;
            img.at(y, x, 1) = 55;
            img.at(y, x, 2) = 45;
        }
    auto color = default_palette().at(categories().id_of("water"));
    for (int c = 0; c < 3; ++c) {
        img.at(3, 3, c) = color[static_cast<size_t>(c)];
        img.at(3, 4, c) = color[static_cast<size_t>(c)];
        img.at(4, 3, c) = color[static_cast<size_t>(c)];
    }
    CHECK(oracle_detect(img, default_palette()).empty());
}

TEST_CASE("seg metrics: perfect prediction") {
    Mask m = Mask::zeros(8, 8);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) m.at(r, c) = 1;
    std::map<int, Mask> masks = {{3, m}};
    SegResult r = seg_metrics(masks, masks, 8, 8);
    CHECK(r.miou == doctest::Approx(1.0));
    CHECK(r.acc == doctest::Approx(1.0));
}

TEST_CASE("seg metrics: complementary masks have zero IoU") {
    Mask top = Mask::zeros(8, 8), bottom = Mask::zeros(8, 8);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 8; ++c) top.at(r, c) = 1;
    for (int r = 4; r < 8; ++r)
        for (int c = 0; c < 8; ++c) bottom.at(r, c) = 1;
    SegResult r = seg_metrics({{1, top}}, {{1, bottom}}, 8, 8);
    CHECK(r.miou == doctest::Approx(0.0));
    CHECK(r.acc == doctest::Approx(0.0));  // every pixel is labeled, none match
}

TEST_CASE("seg metrics: shifted block IoU is one third") {
    Mask gt = Mask::zeros(8, 8), pred = Mask::zeros(8, 8);
    for (int r = 2; r < 6; ++r)
        for (int c = 0; c < 4; ++c) gt.at(r, c) = 1;
    for (int r = 2; r < 6; ++r)
        for (int c = 2; c < 6; ++c) pred.at(r, c) = 1;
    SegResult r = seg_metrics({{1, pred}}, {{1, gt}}, 8, 8);
    CHECK(r.miou == doctest::Approx(1.0 / 3).epsilon(1e-12));
}

TEST_CASE("seg metrics are class-order invariant and exclude absent classes") {
    Rng rng(13);
    std::map<int, Mask> pred, gt;
    for (int cls : {2, 5, 9}) {
        Mask mp = Mask::zeros(8, 8), mg = Mask::zeros(8, 8);
        for (int k = 0; k < 12; ++k) {
            mp.at(rng.uniform_int(8), rng.uniform_int(8)) = 1;
            mg.at(rng.uniform_int(8), rng.uniform_int(8)) = 1;
        }
        pred[cls] = mp;
        gt[cls] = mg;
    }
    SegResult a = seg_metrics(pred, gt, 8, 8);
    std::map<int, Mask> pred_rev(pred.rbegin(), pred.rend());
    SegResult b = seg_metrics(pred_rev, gt, 8, 8);
    CHECK(a.miou == b.miou);
    CHECK(a.per_class_iou == b.per_class_iou);
    // class absent from both sides is not counted
    pred[7] = Mask::zeros(8, 8);
    gt[7] = Mask::zeros(8, 8);
    SegResult c = seg_metrics(pred, gt, 8, 8);
    CHECK(c.present_classes == a.present_classes);
}

TEST_CASE("det metrics: perfect predictions score one") {
    DetInstance inst;
    Rng rng(15);
    for (int i = 0; i < 4; ++i) {
        BBox b = random_box(rng);
        inst.gts.push_back({i % 2, b});
        inst.preds.push_back({i % 2, b, 0.9 - 0.1 * i});
    }
    DetResult r = det_metrics({inst});
    CHECK(r.ap50 == doctest::Approx(1.0));
    CHECK(r.map == doctest::Approx(1.0));
}

TEST_CASE("det metrics: no predictions with nonempty gt scores zero") {
    DetInstance inst;
    inst.gts.push_back({1, BBox{0.1, 0.1, 0.4, 0.4}});
    DetResult r = det_metrics({inst});
    CHECK(r.ap50 == doctest::Approx(0.0));
    CHECK(r.map == doctest::Approx(0.0));
}

TEST_CASE("det metrics: ranked match before distractor yields AP50 of one") {
    // one gt; first pred overlaps IoU 0.6, second is a lower-scored miss
    DetInstance inst;
    BBox gt{0.2, 0.2, 0.6, 0.6};
    inst.gts.push_back({1, gt});
    // IoU 0.6 box: shift so intersection/union = 0.6 -> offset 0.1 along x
    BBox close{0.28, 0.2, 0.68, 0.6};
    CHECK(iou(close, gt) > 0.55);
    BBox far{0.7, 0.7, 0.9, 0.9};
    CHECK(iou(far, gt) < 0.25);
    inst.preds.push_back({1, close, 0.9});
    inst.preds.push_back({1, far, 0.8});
    DetResult r = det_metrics({inst});
    CHECK(r.ap50 == doctest::Approx(1.0));
}

TEST_CASE("det metrics equal the brute-force oracle on random small instances") {
    Rng rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        int n_images = 1 + rng.uniform_int(3);
        std::vector<DetInstance> instances;
        for (int im = 0; im < n_images; ++im) {
            DetInstance inst;
            int n_gt = rng.uniform_int(4);
            int n_pred = rng.uniform_int(6);
            if (n_gt + n_pred > 5) {  // spec pins <= 5 boxes per instance
                n_gt = std::min(n_gt, 3);
                n_pred = std::min(n_pred, 5 - n_gt);
            }
            for (int i = 0; i < n_gt; ++i) inst.gts.push_back({rng.uniform_int(3), random_box(rng)});
            for (int i = 0; i < n_pred; ++i) {
                // predictions partially overlap gts
                BBox b = random_box(rng);
                if (!inst.gts.empty() && rng.uniform() < 0.6) {
                    const BBox& g = inst.gts[static_cast<size_t>(rng.uniform_int(n_gt))].box;
                    double dx = rng.uniform(-0.08, 0.08), dy = rng.uniform(-0.08, 0.08);
                    b = BBox{std::clamp(g.x1 + dx, 0.0, 0.9), std::clamp(g.y1 + dy, 0.0, 0.9),
                             std::clamp(g.x2 + dx, 0.05, 1.0), std::clamp(g.y2 + dy, 0.05, 1.0)};
                    if (!(b.x1 < b.x2 && b.y1 < b.y2)) b = random_box(rng);
                }
                inst.preds.push_back({rng.uniform_int(3), b, rng.uniform()});
            }
            instances.push_back(std::move(inst));
        }
        bool any_gt = false;
        for (const auto& inst : instances) any_gt |= !inst.gts.empty();
        if (!any_gt) continue;
        DetResult fast = det_metrics(instances);
        DetResult slow = terragen::testing::brute_force_det_metrics(instances);
        CHECK(fast.ap50 == doctest::Approx(slow.ap50).epsilon(1e-12));
        CHECK(fast.map == doctest::Approx(slow.map).epsilon(1e-12));
    }
}

TEST_CASE("eval report JSON round-trips losslessly") {
    EvalReport r;
    r.fid = 12.5;
    r.noise_fid = 99.25;
    r.miou = {{"T1", 0.5}, {"T3", 0.75}};
    r.acc = {{"T1", 0.9}};
    r.miou_mean = 0.625;
    r.shuffled_miou_mean = 0.125;
    r.ap50 = 0.5;
    r.map = 0.25;
    r.caption_consistency = 0.875;
    r.n_samples = 42;
    r.seed = 7;
    r.config_hash = "abc123";
    EvalReport back = EvalReport::from_json(r.to_json());
    CHECK(back.fid == r.fid);
    CHECK(back.noise_fid == r.noise_fid);
    CHECK(back.miou == r.miou);
    CHECK(back.acc == r.acc);
    CHECK(back.miou_mean == r.miou_mean);
    CHECK(back.shuffled_miou_mean == r.shuffled_miou_mean);
    CHECK(back.ap50 == r.ap50);
    CHECK(back.map == r.map);
    CHECK(back.caption_consistency == r.caption_consistency);
    CHECK(back.n_samples == r.n_samples);
    CHECK(back.seed == r.seed);
    CHECK(back.config_hash == r.config_hash);
}

TEST_CASE("real renders against their own layouts hit the oracle ceiling") {
    auto specs = default_scene_specs(32);
    std::vector<ImageU8> images;
    std::vector<Layout> layouts;
    for (uint64_t i = 0; i < 20; ++i) {
        Rng rng(Rng::mix(321, i));
        auto [img, layout] = gen_scene(rng, specs[i % specs.size()]);
        images.push_back(std::move(img));
        layouts.push_back(std::move(layout));
    }
    CHECK(oracle_miou_on(images, layouts) >= 0.99);
}

} // TEST_SUITE eval
