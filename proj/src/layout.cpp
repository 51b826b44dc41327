#include "terragen/layout.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace terragen {

std::string task_name(TaskId t) { return "T" + std::to_string(static_cast<int>(t)); }

std::string task_long_name(TaskId t) {
    switch (t) {
        case TaskId::T0_Detection: return "object-detection";
        case TaskId::T1_SemanticSeg: return "semantic-segmentation";
        case TaskId::T2_Building: return "building-extraction";
        case TaskId::T3_Road: return "road-extraction";
        case TaskId::T4_Flood: return "flood-detection";
    }
    throw std::invalid_argument("task_long_name: bad task");
}

TaskId parse_task(const std::string& s) {
    for (int i = 0; i < kNumTasks; ++i) {
        TaskId t = static_cast<TaskId>(i);
        if (s == task_name(t) || s == task_long_name(t)) return t;
    }
    throw std::invalid_argument("parse_task: unknown task '" + s + "'");
}

namespace {

CategoryTable build_categories() {
    CategoryTable t;
    // Segmentation classes (ids 0-9).
    t.names = {"agriculture", "background", "barren", "building", "forest",
               "grassland", "road", "water", "woodland", "unknown"};
    // Detection classes (ids 10-29).
    const char* detection[] = {"expressway-service-area", "expressway-toll-station", "airplane", "airport",
                               "baseballfield", "basketballcourt", "bridge", "chimney", "dam", "golffield",
                               "groundtrackfield", "harbor", "overpass", "ship", "stadium", "storagetank",
                               "tenniscourt", "trainstation", "vehicle", "windmill"};
    for (const char* name : detection) t.names.push_back(name);
    // Flood (id 30).
    t.names.push_back("flood");
    return t;
}

}  // namespace

const CategoryTable& categories() {
    static const CategoryTable table = build_categories();
    return table;
}

int CategoryTable::id_of(const std::string& name) const {
    for (size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) return static_cast<int>(i);
    }
    throw std::invalid_argument("CategoryTable: unknown category '" + name + "'");
}

const std::string& CategoryTable::name_of(int id) const {
    if (id < 0 || id >= size()) throw std::invalid_argument("CategoryTable: bad id " + std::to_string(id));
    return names[static_cast<size_t>(id)];
}

bool CategoryTable::legal_for(TaskId task, int category) const {
    if (category < 0 || category >= size()) return false;
    switch (task) {
        case TaskId::T0_Detection: return category >= 10 && category <= 29;
        case TaskId::T1_SemanticSeg: return category <= 9;
        case TaskId::T2_Building: return names[static_cast<size_t>(category)] == "building";
        case TaskId::T3_Road: return names[static_cast<size_t>(category)] == "road";
        case TaskId::T4_Flood: return names[static_cast<size_t>(category)] == "flood";
    }
    return false;
}

std::vector<int> CategoryTable::legal_categories(TaskId task) const {
    std::vector<int> out;
    for (int id = 0; id < size(); ++id) {
        if (legal_for(task, id)) out.push_back(id);
    }
    return out;
}

bool BBox::valid() const {
    return x1 >= 0.0 && y1 >= 0.0 && x2 <= 1.0 && y2 <= 1.0 && x1 < x2 && y1 < y2;
}

double iou(const BBox& a, const BBox& b) {
    double ix = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
    double iy = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
    double inter = ix * iy;
    double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

Mask Mask::zeros(int height, int width) {
    if (height <= 0 || width <= 0) throw std::invalid_argument("Mask: dimensions must be positive");
    Mask m;
    m.height = height;
    m.width = width;
    m.bits.assign(static_cast<size_t>(height) * width, 0);
    return m;
}

int64_t Mask::area() const {
    int64_t n = 0;
    for (uint8_t b : bits) n += b;
    return n;
}

std::optional<BBox> Mask::tight_box() const {
    int rmin = height, rmax = -1, cmin = width, cmax = -1;
    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
            if (!at(r, c)) continue;
            rmin = std::min(rmin, r);
            rmax = std::max(rmax, r);
            cmin = std::min(cmin, c);
            cmax = std::max(cmax, c);
        }
    }
    if (rmax < 0) return std::nullopt;
    return BBox{static_cast<double>(cmin) / width, static_cast<double>(rmin) / height,
                static_cast<double>(cmax + 1) / width, static_cast<double>(rmax + 1) / height};
}

void Layout::recount_caption() {
    caption.clear();
    for (const auto& e : entities) caption[e.category] += 1;
}

Mask rasterize_box(const BBox& box, int grid_h, int grid_w) {
    Mask m = Mask::zeros(grid_h, grid_w);
    for (int r = 0; r < grid_h; ++r) {
        double cy = (r + 0.5) / grid_h;
        if (cy < box.y1 || cy >= box.y2) continue;
        for (int c = 0; c < grid_w; ++c) {
            double cx = (c + 0.5) / grid_w;
            if (cx >= box.x1 && cx < box.x2) m.at(r, c) = 1;
        }
    }
    return m;
}

std::vector<UnifiedEntity> unify(const Layout& layout, int grid_h, int grid_w) {
    if (grid_h <= 0 || grid_w <= 0) throw std::invalid_argument("unify: grid dimensions must be positive");
    std::vector<UnifiedEntity> out;
    for (const auto& e : layout.entities) {
        if (!e.box && !e.mask) throw std::invalid_argument("unify: entity with neither box nor mask");
        UnifiedEntity u;
        u.category = e.category;
        if (e.box && e.mask) {
            u.box = *e.box;
            u.mask = *e.mask;
        } else if (e.box) {
            u.box = *e.box;
            u.mask = rasterize_box(*e.box, grid_h, grid_w);
        } else {
            u.mask = *e.mask;
            auto tb = e.mask->tight_box();
            if (!tb) continue;  // empty mask: dropped
            u.box = *tb;
        }
        if (u.mask.area() == 0) continue;
        out.push_back(std::move(u));
    }
    return out;
}

namespace {

struct Affine {
    // forward map: (x', y') = (a*x + b*y + tx, c*x + d*y + ty)
    double a = 1, b = 0, c = 0, d = 1, tx = 0, ty = 0;

    std::pair<double, double> apply(double x, double y) const { return {a * x + b * y + tx, c * x + d * y + ty}; }

    Affine inverse() const {
        double det = a * d - b * c;
        if (std::abs(det) < 1e-12) throw std::runtime_error("transform: singular affine");
        Affine inv;
        inv.a = d / det;
        inv.b = -b / det;
        inv.c = -c / det;
        inv.d = a / det;
        inv.tx = -(inv.a * tx + inv.b * ty);
        inv.ty = -(inv.c * tx + inv.d * ty);
        return inv;
    }
};

Affine transform_affine(const GeoTransform& t) {
    // All maps are about the frame center (0.5, 0.5).
    Affine m;
    switch (t.kind) {
        case GeoKind::HFlip: m = {-1, 0, 0, 1, 1, 0}; break;
        case GeoKind::VFlip: m = {1, 0, 0, -1, 0, 1}; break;
        case GeoKind::Rot90:  // 90 degrees counter-clockwise in image coords
            m = {0, 1, -1, 0, 0, 1};
            break;
        case GeoKind::Rot180: m = {-1, 0, 0, -1, 1, 1}; break;
        case GeoKind::Rot270: m = {0, -1, 1, 0, 1, 0}; break;
        case GeoKind::Scale: {
            if (!(t.factor >= 0.5 && t.factor <= 1.5)) {
                throw std::invalid_argument("transform_layout: scale factor " + std::to_string(t.factor) +
                                            " outside [0.5, 1.5]");
            }
            double s = t.factor;
            m = {s, 0, 0, s, 0.5 * (1 - s), 0.5 * (1 - s)};
            break;
        }
        case GeoKind::Shear: {
            if (!(std::abs(t.factor) <= 0.3)) {
                throw std::invalid_argument("transform_layout: shear factor " + std::to_string(t.factor) +
                                            " outside [-0.3, 0.3]");
            }
            double f = t.factor;
            // x' = x + f*(y - 0.5)
            m = {1, f, 0, 1, -0.5 * f, 0};
            break;
        }
    }
    return m;
}

bool is_permutation_kind(GeoKind k) {
    return k == GeoKind::HFlip || k == GeoKind::VFlip || k == GeoKind::Rot90 || k == GeoKind::Rot180 ||
           k == GeoKind::Rot270;
}

Mask transform_mask(const Mask& src, const GeoTransform& t, const Affine& inv) {
    int H = src.height, W = src.width;
    if (is_permutation_kind(t.kind)) {
        // Exact index permutation.
        int oh = (t.kind == GeoKind::Rot90 || t.kind == GeoKind::Rot270) ? W : H;
        int ow = (t.kind == GeoKind::Rot90 || t.kind == GeoKind::Rot270) ? H : W;
        Mask dst = Mask::zeros(oh, ow);
        for (int r = 0; r < H; ++r) {
            for (int c = 0; c < W; ++c) {
                if (!src.at(r, c)) continue;
                int nr = r, nc = c;
                switch (t.kind) {
                    case GeoKind::HFlip: nc = W - 1 - c; break;
                    case GeoKind::VFlip: nr = H - 1 - r; break;
                    case GeoKind::Rot90:  // (r,c) -> (H-1-c', ...) consistent with the affine below
                        nr = W - 1 - c;
                        nc = r;
                        break;
                    case GeoKind::Rot180:
                        nr = H - 1 - r;
                        nc = W - 1 - c;
                        break;
                    case GeoKind::Rot270:
                        nr = c;
                        nc = H - 1 - r;
                        break;
                    default: break;
                }
                dst.at(nr, nc) = 1;
            }
        }
        return dst;
    }
    // Inverse-affine nearest-neighbor resampling on the same grid.
    Mask dst = Mask::zeros(H, W);
    for (int r = 0; r < H; ++r) {
        for (int c = 0; c < W; ++c) {
            double cx = (c + 0.5) / W;
            double cy = (r + 0.5) / H;
            auto [sx, sy] = inv.apply(cx, cy);
            int sc = static_cast<int>(std::floor(sx * W));
            int sr = static_cast<int>(std::floor(sy * H));
            if (sr < 0 || sr >= H || sc < 0 || sc >= W) continue;
            if (src.at(sr, sc)) dst.at(r, c) = 1;
        }
    }
    return dst;
}

BBox transform_box(const BBox& box, const Affine& m) {
    double xs[4], ys[4];
    std::pair<double, double> corners[4] = {m.apply(box.x1, box.y1), m.apply(box.x2, box.y1),
                                            m.apply(box.x1, box.y2), m.apply(box.x2, box.y2)};
    for (int i = 0; i < 4; ++i) {
        xs[i] = corners[i].first;
        ys[i] = corners[i].second;
    }
    BBox out;
    out.x1 = std::clamp(*std::min_element(xs, xs + 4), 0.0, 1.0);
    out.x2 = std::clamp(*std::max_element(xs, xs + 4), 0.0, 1.0);
    out.y1 = std::clamp(*std::min_element(ys, ys + 4), 0.0, 1.0);
    out.y2 = std::clamp(*std::max_element(ys, ys + 4), 0.0, 1.0);
    return out;
}

}  // namespace

Layout transform_layout(const Layout& layout, const GeoTransform& t) {
    Affine fwd = transform_affine(t);
    Affine inv = fwd.inverse();
    Layout out;
    out.task = layout.task;
    for (const auto& e : layout.entities) {
        LayoutEntity ne;
        ne.category = e.category;
        bool dropped = false;
        if (e.box) {
            BBox nb = transform_box(*e.box, fwd);
            if (nb.x2 - nb.x1 <= 0 || nb.y2 - nb.y1 <= 0 || nb.area() < 1e-4) {
                dropped = true;  // degenerate after clamping
            } else {
                ne.box = nb;
            }
        }
        if (!dropped && e.mask) {
            Mask nm = transform_mask(*e.mask, t, inv);
            if (nm.area() < 4) {
                dropped = true;
            } else {
                ne.mask = std::move(nm);
            }
        }
        if (dropped || (!ne.box && !ne.mask)) continue;
        out.entities.push_back(std::move(ne));
    }
    out.recount_caption();
    return out;
}

std::string issue_kind_name(IssueKind k) {
    switch (k) {
        case IssueKind::OverlappingBoxes: return "OverlappingBoxes";
        case IssueKind::BrokenRoad: return "BrokenRoad";
        case IssueKind::SemanticConflict: return "SemanticConflict";
    }
    return "?";
}

int connected_components(const Mask& mask) {
    int H = mask.height, W = mask.width;
    std::vector<uint8_t> seen(static_cast<size_t>(H) * W, 0);
    std::vector<int> stack;
    int components = 0;
    for (int start = 0; start < H * W; ++start) {
        if (!mask.bits[static_cast<size_t>(start)] || seen[static_cast<size_t>(start)]) continue;
        ++components;
        stack.push_back(start);
        seen[static_cast<size_t>(start)] = 1;
        while (!stack.empty()) {
            int cur = stack.back();
            stack.pop_back();
            int r = cur / W, c = cur % W;
            const int dr[4] = {-1, 1, 0, 0};
            const int dc[4] = {0, 0, -1, 1};
            for (int k = 0; k < 4; ++k) {
                int nr = r + dr[k], nc = c + dc[k];
                if (nr < 0 || nr >= H || nc < 0 || nc >= W) continue;
                int ni = nr * W + nc;
                if (mask.bits[static_cast<size_t>(ni)] && !seen[static_cast<size_t>(ni)]) {
                    seen[static_cast<size_t>(ni)] = 1;
                    stack.push_back(ni);
                }
            }
        }
    }
    return components;
}

std::vector<Issue> validate(const Layout& layout, const ValidateConfig& cfg) {
    std::vector<Issue> issues;
    const CategoryTable& table = categories();

    // Semantic conflicts.
    for (size_t i = 0; i < layout.entities.size(); ++i) {
        int cat = layout.entities[i].category;
        if (!table.legal_for(layout.task, cat)) {
            std::string name = (cat >= 0 && cat < table.size()) ? table.name_of(cat) : std::to_string(cat);
            issues.push_back({IssueKind::SemanticConflict,
                              "category '" + name + "' is illegal for task " + task_name(layout.task),
                              {static_cast<int>(i)}});
        }
    }

    // Overlapping same-category boxes.
    for (size_t i = 0; i < layout.entities.size(); ++i) {
        const auto& a = layout.entities[i];
        if (!a.box) continue;
        for (size_t j = i + 1; j < layout.entities.size(); ++j) {
            const auto& b = layout.entities[j];
            if (!b.box || a.category != b.category) continue;
            double v = iou(*a.box, *b.box);
            if (v > cfg.overlap_iou) {
                issues.push_back({IssueKind::OverlappingBoxes,
                                  "same-category boxes with IoU " + std::to_string(v),
                                  {static_cast<int>(i), static_cast<int>(j)}});
            }
        }
    }

    // Broken road: too many disconnected road components on T3 layouts.
    if (layout.task == TaskId::T3_Road) {
        int road_id = table.id_of("road");
        Mask uni;
        bool any = false;
        for (const auto& e : layout.entities) {
            if (e.category != road_id || !e.mask) continue;
            if (!any) {
                uni = Mask::zeros(e.mask->height, e.mask->width);
                any = true;
            }
            if (e.mask->height != uni.height || e.mask->width != uni.width) continue;
            for (size_t k = 0; k < uni.bits.size(); ++k) uni.bits[k] |= e.mask->bits[k];
        }
        if (any) {
            int comps = connected_components(uni);
            if (comps > cfg.max_road_components) {
                issues.push_back({IssueKind::BrokenRoad,
                                  "road mask has " + std::to_string(comps) + " components (max " +
                                      std::to_string(cfg.max_road_components) + ")",
                                  {}});
            }
        }
    }
    return issues;
}

}  // namespace terragen
