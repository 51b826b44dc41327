#include <doctest.h>

#include <set>

#include "terragen/layout.hpp"
#include "terragen/layout_io.hpp"
#include "terragen/rng.hpp"

using namespace terragen;

namespace {

Layout single_box_layout(TaskId task, int category, BBox box) {
    Layout l;
    l.task = task;
    LayoutEntity e;
    e.category = category;
    e.box = box;
    l.entities.push_back(e);
    l.recount_caption();
    return l;
}

Mask mask_with_pixels(int h, int w, const std::vector<std::pair<int, int>>& px) {
    Mask m = Mask::zeros(h, w);
    for (auto [r, c] : px) m.at(r, c) = 1;
    return m;
}

}  // namespace

TEST_SUITE("layout") {

TEST_CASE("iou closed forms") {
    BBox a{0.1, 0.1, 0.5, 0.5};
    CHECK(iou(a, a) == doctest::Approx(1.0));
    BBox b{0.6, 0.6, 0.9, 0.9};
    CHECK(iou(a, b) == doctest::Approx(0.0));
    BBox c{0.0, 0.0, 2.0 / 8, 2.0 / 8}, d{1.0 / 8, 1.0 / 8, 3.0 / 8, 3.0 / 8};
    CHECK(iou(c, d) == doctest::Approx(1.0 / 7).epsilon(1e-12));
}

TEST_CASE("unify rasterizes a centered box to the central 4x4 block") {
    Layout l = single_box_layout(TaskId::T2_Building, categories().id_of("building"),
                                 BBox{0.25, 0.25, 0.75, 0.75});
    auto unified = unify(l, 8, 8);
    REQUIRE(unified.size() == 1);
    const Mask& m = unified[0].mask;
    int64_t count = 0;
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c) {
            bool inside = r >= 2 && r < 6 && c >= 2 && c < 6;
            CHECK(m.at(r, c) == (inside ? 1 : 0));
            count += m.at(r, c);
        }
    CHECK(count == 16);
}

TEST_CASE("unify wraps a single-pixel mask with its pixel-edge box") {
    Layout l;
    l.task = TaskId::T2_Building;
    LayoutEntity e;
    e.category = categories().id_of("building");
    e.mask = mask_with_pixels(8, 8, {{3, 5}});
    l.entities.push_back(e);
    auto unified = unify(l, 8, 8);
    REQUIRE(unified.size() == 1);
    CHECK(unified[0].box.x1 == doctest::Approx(5.0 / 8));
    CHECK(unified[0].box.y1 == doctest::Approx(3.0 / 8));
    CHECK(unified[0].box.x2 == doctest::Approx(6.0 / 8));
    CHECK(unified[0].box.y2 == doctest::Approx(4.0 / 8));
}

TEST_CASE("unify keeps entities that already carry both") {
    Layout l;
    l.task = TaskId::T2_Building;
    LayoutEntity e;
    e.category = categories().id_of("building");
    e.box = BBox{0.1, 0.1, 0.9, 0.9};
    e.mask = mask_with_pixels(8, 8, {{4, 4}, {4, 5}});
    l.entities.push_back(e);
    auto unified = unify(l, 8, 8);
    REQUIRE(unified.size() == 1);
    CHECK(unified[0].box == *l.entities[0].box);
    CHECK(unified[0].mask == *l.entities[0].mask);
}

TEST_CASE("unify drops empty-mask entities") {
    Layout l;
    l.task = TaskId::T2_Building;
    LayoutEntity e;
    e.category = categories().id_of("building");
    e.mask = Mask::zeros(8, 8);
    l.entities.push_back(e);
    CHECK(unify(l, 8, 8).empty());
}

TEST_CASE("unify is idempotent") {
    Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        Layout l;
        l.task = TaskId::T1_SemanticSeg;
        int n = 1 + rng.uniform_int(4);
        for (int i = 0; i < n; ++i) {
            LayoutEntity e;
            e.category = rng.uniform_int(10);
            double x1 = rng.uniform(0.0, 0.8), y1 = rng.uniform(0.0, 0.8);
            e.box = BBox{x1, y1, x1 + rng.uniform(0.15, 0.2), y1 + rng.uniform(0.15, 0.2)};
            l.entities.push_back(e);
        }
        auto once = unify(l, 16, 16);
        Layout l2;
        l2.task = l.task;
        for (const auto& u : once) {
            LayoutEntity e;
            e.category = u.category;
            e.box = u.box;
            e.mask = u.mask;
            l2.entities.push_back(e);
        }
        auto twice = unify(l2, 16, 16);
        REQUIRE(twice.size() == once.size());
        for (size_t i = 0; i < once.size(); ++i) CHECK(twice[i] == once[i]);
    }
}

TEST_CASE("tight box of a rasterized box reproduces it within one pixel per edge") {
    Rng rng(23);
    for (int trial = 0; trial < 50; ++trial) {
        int grid = 8 + rng.uniform_int(25);
        double px = 1.0 / grid;
        double x1 = rng.uniform(0.0, 1.0 - 3 * px);
        double y1 = rng.uniform(0.0, 1.0 - 3 * px);
        double x2 = x1 + rng.uniform(2.5 * px, 1.0 - x1);
        double y2 = y1 + rng.uniform(2.5 * px, 1.0 - y1);
        BBox b{x1, y1, std::min(x2, 1.0), std::min(y2, 1.0)};
        Mask m = rasterize_box(b, grid, grid);
        REQUIRE(m.area() > 0);
        auto tb = m.tight_box();
        REQUIRE(tb.has_value());
        CHECK(std::abs(tb->x1 - b.x1) <= px + 1e-12);
        CHECK(std::abs(tb->y1 - b.y1) <= px + 1e-12);
        CHECK(std::abs(tb->x2 - b.x2) <= px + 1e-12);
        CHECK(std::abs(tb->y2 - b.y2) <= px + 1e-12);
    }
}

TEST_CASE("horizontal flip reflects boxes") {
    Layout l = single_box_layout(TaskId::T2_Building, categories().id_of("building"),
                                 BBox{0.1, 0.2, 0.4, 0.5});
    Layout f = transform_layout(l, GeoTransform::hflip());
    REQUIRE(f.entities.size() == 1);
    CHECK(f.entities[0].box->x1 == doctest::Approx(0.6));
    CHECK(f.entities[0].box->y1 == doctest::Approx(0.2));
    CHECK(f.entities[0].box->x2 == doctest::Approx(0.9));
    CHECK(f.entities[0].box->y2 == doctest::Approx(0.5));
}

TEST_CASE("rotating 180 twice is the identity") {
    Rng rng(31);
    Layout l;
    l.task = TaskId::T1_SemanticSeg;
    for (int i = 0; i < 3; ++i) {
        LayoutEntity e;
        e.category = rng.uniform_int(10);
        Mask m = Mask::zeros(16, 16);
        for (int k = 0; k < 30; ++k) m.at(rng.uniform_int(16), rng.uniform_int(16)) = 1;
        if (m.area() < 4) continue;
        e.mask = m;
        e.box = m.tight_box();
        l.entities.push_back(e);
    }
    l.recount_caption();
    Layout twice = transform_layout(transform_layout(l, GeoTransform::rot180()), GeoTransform::rot180());
    CHECK(twice == l);
}

TEST_CASE("flips and right-angle rotations preserve mask pixel counts exactly") {
    Rng rng(37);
    Layout l;
    l.task = TaskId::T4_Flood;
    LayoutEntity e;
    e.category = categories().id_of("flood");
    Mask m = Mask::zeros(12, 12);
    for (int k = 0; k < 40; ++k) m.at(rng.uniform_int(12), rng.uniform_int(12)) = 1;
    e.mask = m;
    l.entities.push_back(e);
    l.recount_caption();
    int64_t area = m.area();
    for (auto t : {GeoTransform::hflip(), GeoTransform::vflip(), GeoTransform::rot90(),
                   GeoTransform::rot180(), GeoTransform::rot270()}) {
        Layout out = transform_layout(l, t);
        REQUIRE(out.entities.size() == 1);
        CHECK(out.entities[0].mask->area() == area);
    }
}

TEST_CASE("shear keeps rectangle mask area within 10%") {
    Layout l;
    l.task = TaskId::T2_Building;
    LayoutEntity e;
    e.category = categories().id_of("building");
    Mask m = Mask::zeros(32, 32);
    for (int r = 8; r < 24; ++r)
        for (int c = 10; c < 22; ++c) m.at(r, c) = 1;
    e.mask = m;
    l.entities.push_back(e);
    l.recount_caption();
    Layout sheared = transform_layout(l, GeoTransform::sheared(0.2));
    REQUIRE(sheared.entities.size() == 1);
    double ratio = static_cast<double>(sheared.entities[0].mask->area()) / static_cast<double>(m.area());
    CHECK(ratio > 0.9);
    CHECK(ratio < 1.1);
}

TEST_CASE("out-of-range transform parameters are rejected") {
    Layout l = single_box_layout(TaskId::T2_Building, categories().id_of("building"),
                                 BBox{0.2, 0.2, 0.8, 0.8});
    CHECK_THROWS(transform_layout(l, GeoTransform::scaled(0.3)));
    CHECK_THROWS(transform_layout(l, GeoTransform::scaled(1.7)));
    CHECK_THROWS(transform_layout(l, GeoTransform::sheared(0.5)));
}

TEST_CASE("scaling drops entities that shrink away") {
    Layout l;
    l.task = TaskId::T2_Building;
    LayoutEntity e;
    e.category = categories().id_of("building");
    Mask m = Mask::zeros(32, 32);
    m.at(16, 16) = m.at(16, 17) = m.at(17, 16) = m.at(17, 17) = 1;  // 4 px, the drop threshold
    e.mask = m;
    l.entities.push_back(e);
    l.recount_caption();
    Layout tiny = transform_layout(l, GeoTransform::scaled(0.5));
    CHECK(tiny.entities.empty());
    CHECK(tiny.caption.empty());
}

TEST_CASE("validate flags identical same-category boxes") {
    Layout l;
    l.task = TaskId::T0_Detection;
    LayoutEntity e;
    e.category = categories().id_of("vehicle");
    e.box = BBox{0.1, 0.1, 0.3, 0.3};
    l.entities.push_back(e);
    l.entities.push_back(e);
    l.recount_caption();
    auto issues = validate(l);
    REQUIRE(issues.size() == 1);
    CHECK(issues[0].kind == IssueKind::OverlappingBoxes);
}

TEST_CASE("validate accepts a single road stripe") {
    Layout l;
    l.task = TaskId::T3_Road;
    LayoutEntity e;
    e.category = categories().id_of("road");
    Mask m = Mask::zeros(16, 16);
    for (int c = 0; c < 16; ++c)
        for (int r = 6; r < 9; ++r) m.at(r, c) = 1;
    e.mask = m;
    e.box = m.tight_box();
    l.entities.push_back(e);
    l.recount_caption();
    CHECK(validate(l).empty());
}

TEST_CASE("validate flags fragmented roads") {
    Layout l;
    l.task = TaskId::T3_Road;
    LayoutEntity e;
    e.category = categories().id_of("road");
    Mask m = Mask::zeros(16, 16);
    // four separated 2x2 blobs
    for (auto [r, c] : std::vector<std::pair<int, int>>{{1, 1}, {1, 12}, {12, 1}, {12, 12}}) {
        m.at(r, c) = m.at(r + 1, c) = m.at(r, c + 1) = m.at(r + 1, c + 1) = 1;
    }
    e.mask = m;
    l.entities.push_back(e);
    l.recount_caption();
    auto issues = validate(l);
    REQUIRE(issues.size() == 1);
    CHECK(issues[0].kind == IssueKind::BrokenRoad);
}

TEST_CASE("validate flags categories illegal for the task") {
    Layout l = single_box_layout(TaskId::T2_Building, categories().id_of("vehicle"),
                                 BBox{0.1, 0.1, 0.3, 0.3});
    auto issues = validate(l);
    REQUIRE(issues.size() == 1);
    CHECK(issues[0].kind == IssueKind::SemanticConflict);
}

TEST_CASE("validate is order-insensitive in issue kinds and counts") {
    Layout l;
    l.task = TaskId::T2_Building;
    LayoutEntity bad;
    bad.category = categories().id_of("vehicle");
    bad.box = BBox{0.1, 0.1, 0.3, 0.3};
    LayoutEntity dup;
    dup.category = categories().id_of("building");
    dup.box = BBox{0.5, 0.5, 0.7, 0.7};
    l.entities = {bad, dup, dup};
    l.recount_caption();
    auto count_kinds = [](const std::vector<Issue>& issues) {
        std::multiset<IssueKind> kinds;
        for (const auto& i : issues) kinds.insert(i.kind);
        return kinds;
    };
    auto base = count_kinds(validate(l));
    Layout perm = l;
    std::swap(perm.entities[0], perm.entities[2]);
    CHECK(count_kinds(validate(perm)) == base);
    Layout perm2 = l;
    std::rotate(perm2.entities.begin(), perm2.entities.begin() + 1, perm2.entities.end());
    CHECK(count_kinds(validate(perm2)) == base);
}

TEST_CASE("category table has 31 entries and exactly five tasks") {
    CHECK(categories().size() == 31);
    CHECK(kNumTasks == 5);
    CHECK(categories().legal_categories(TaskId::T1_SemanticSeg).size() == 10);
    CHECK(categories().legal_categories(TaskId::T0_Detection).size() == 20);
    CHECK(categories().legal_categories(TaskId::T2_Building) ==
          std::vector<int>{categories().id_of("building")});
}

TEST_CASE("layout json round-trips through files") {
    Layout l;
    l.task = TaskId::T1_SemanticSeg;
    LayoutEntity a;
    a.category = categories().id_of("water");
    Mask m = Mask::zeros(16, 16);
    for (int r = 4; r < 9; ++r)
        for (int c = 2; c < 12; ++c) m.at(r, c) = 1;
    a.mask = m;
    a.box = m.tight_box();
    LayoutEntity b;
    b.category = categories().id_of("building");
    b.box = BBox{0.7, 0.7, 0.9, 0.95};
    l.entities = {a, b};
    l.recount_caption();

    std::string path = "layout_roundtrip_test.json";
    write_layout(path, l);
    Layout back = read_layout(path);
    CHECK(back == l);
    std::remove(path.c_str());
    std::remove("layout_roundtrip_test_m0.png");
}

} // TEST_SUITE layout
