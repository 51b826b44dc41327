#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace terragen {

// The five supported generation tasks.
enum class TaskId { T0_Detection = 0, T1_SemanticSeg = 1, T2_Building = 2, T3_Road = 3, T4_Flood = 4 };

inline constexpr int kNumTasks = 5;

std::string task_name(TaskId t);       // "T0".."T4"
std::string task_long_name(TaskId t);  // e.g. "object-detection"
TaskId parse_task(const std::string& s);

// Global category registry: ten semantic-segmentation classes, twenty
// detection classes, and flood; building extraction and road extraction
// reuse the segmentation ids.
struct CategoryTable {
    std::vector<std::string> names;
    int id_of(const std::string& name) const;
    const std::string& name_of(int id) const;
    int size() const { return static_cast<int>(names.size()); }
    bool legal_for(TaskId task, int category) const;
    std::vector<int> legal_categories(TaskId task) const;
};

const CategoryTable& categories();

// Axis-aligned box in normalized [0,1] coordinates, x1 < x2 and y1 < y2.
struct BBox {
    double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
    double area() const { return (x2 - x1) * (y2 - y1); }
    bool valid() const;
    bool operator==(const BBox&) const = default;
};

double iou(const BBox& a, const BBox& b);

// Full-frame binary mask. Pixel (r,c) covers the normalized rectangle
// [c/W,(c+1)/W) x [r/H,(r+1)/H).
struct Mask {
    int height = 0;
    int width = 0;
    std::vector<uint8_t> bits;  // 0/1, row-major

    static Mask zeros(int height, int width);
    uint8_t& at(int r, int c) { return bits[static_cast<size_t>(r) * width + c]; }
    uint8_t at(int r, int c) const { return bits[static_cast<size_t>(r) * width + c]; }
    int64_t area() const;
    // Tight box of the nonzero pixels under the pixel-edge convention;
    // nullopt for an empty mask.
    std::optional<BBox> tight_box() const;
    bool operator==(const Mask&) const = default;
};

struct LayoutEntity {
    int category = 0;
    std::optional<BBox> box;
    std::optional<Mask> mask;  // at least one of box/mask present
    bool operator==(const LayoutEntity&) const = default;
};

struct Layout {
    TaskId task = TaskId::T0_Detection;
    std::vector<LayoutEntity> entities;
    std::map<int, int> caption;  // category id -> count

    // Recomputes the caption from the current entity list.
    void recount_caption();
    bool operator==(const Layout&) const = default;
};

// Entity with both representations present after the unified transform.
struct UnifiedEntity {
    int category = 0;
    BBox box;
    Mask mask;
    bool operator==(const UnifiedEntity&) const = default;
};

// Unified layout transform: rasterizes boxes to masks on the given grid
// (pixels whose centers fall in the box) and wraps masks with their tight
// boxes. Entities whose mask comes out empty are dropped.
std::vector<UnifiedEntity> unify(const Layout& layout, int grid_h, int grid_w);

// Rasterizes a box on a grid; set pixels are those whose centers lie in
// [x1,x2) x [y1,y2).
Mask rasterize_box(const BBox& box, int grid_h, int grid_w);

// Geometric augmentation transforms.
enum class GeoKind { HFlip, VFlip, Rot90, Rot180, Rot270, Scale, Shear };

struct GeoTransform {
    GeoKind kind = GeoKind::HFlip;
    double factor = 0.0;  // scale in [0.5,1.5] or shear in [-0.3,0.3]

    static GeoTransform hflip() { return {GeoKind::HFlip, 0.0}; }
    static GeoTransform vflip() { return {GeoKind::VFlip, 0.0}; }
    static GeoTransform rot90() { return {GeoKind::Rot90, 0.0}; }
    static GeoTransform rot180() { return {GeoKind::Rot180, 0.0}; }
    static GeoTransform rot270() { return {GeoKind::Rot270, 0.0}; }
    static GeoTransform scaled(double s) { return {GeoKind::Scale, s}; }
    static GeoTransform sheared(double f) { return {GeoKind::Shear, f}; }
};

// Applies the transform to every entity. Flips and right-angle rotations
// permute mask pixels exactly; scale and shear resample by inverse-affine
// nearest neighbor. Boxes map corner-wise to the axis-aligned hull,
// clamped to [0,1]. Entities shrinking below 4 mask pixels or 1e-4 box
// area are dropped and the caption is recounted.
Layout transform_layout(const Layout& layout, const GeoTransform& t);

// Annotation consistency checks.
enum class IssueKind { OverlappingBoxes, BrokenRoad, SemanticConflict };

struct Issue {
    IssueKind kind;
    std::string message;
    std::vector<int> entity_indices;
};

struct ValidateConfig {
    double overlap_iou = 0.9;      // same-category box IoU above this is an issue
    int max_road_components = 3;   // 4-connected components allowed in the T3 road mask
};

std::string issue_kind_name(IssueKind k);
std::vector<Issue> validate(const Layout& layout, const ValidateConfig& cfg = {});

// 4-connected component count of a binary mask.
int connected_components(const Mask& mask);

}  // namespace terragen
