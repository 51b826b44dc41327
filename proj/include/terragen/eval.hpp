#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "terragen/diffusion.hpp"
#include "terragen/image.hpp"
#include "terragen/layout.hpp"
#include "terragen/synthdata.hpp"

namespace terragen {

// Gaussian fit of image features.
struct FeatureStats {
    Tensor mu;     // (d)
    Tensor sigma;  // (d,d), symmetric PSD
    int n = 0;
};

using FeatureExtractor = std::function<std::vector<double>(const ImageU8&)>;

// Named extractor registry. "down8-proj64" (default): average-pool to
// 8x8 per channel, flatten, fixed seeded random projection to 64 dims.
FeatureExtractor get_extractor(const std::string& name);
std::vector<std::string> extractor_names();

// Ledoit-style shrinkage (lambda = 0.01) is applied when n < dim+1.
FeatureStats features(const std::vector<ImageU8>& images, const std::string& extractor = "down8-proj64");

// ||mu_r - mu_g||^2 + Tr(Sr + Sg - 2 (Sr Sg)^(1/2)); the matrix square
// root comes from the eigendecomposition of Sr^(1/2) Sg Sr^(1/2).
double fid(const FeatureStats& real, const FeatureStats& gen);

struct Detection {
    int category = 0;
    Mask mask;
    BBox box;
    double score = 0.0;  // mean color proximity in [0,1]
};

// Color-palette component detector: thresholds pixels within an L-inf
// tolerance of each palette color and keeps 4-connected components of at
// least 4 pixels.
std::vector<Detection> oracle_detect(const ImageU8& image,
                                     const std::map<int, std::array<uint8_t, 3>>& palette,
                                     int tol = 32);

struct SegResult {
    double miou = 0.0;
    double acc = 0.0;
    std::map<int, double> per_class_iou;
    int present_classes = 0;
};

// Per-class IoU over binary masks (classes with empty union excluded)
// plus overall pixel accuracy of the induced label maps (background
// counts as its own label).
SegResult seg_metrics(const std::map<int, Mask>& pred, const std::map<int, Mask>& gt, int height, int width);

struct ScoredBox {
    int category = 0;
    BBox box;
    double score = 0.0;
};

struct GtBox {
    int category = 0;
    BBox box;
};

// One image's predictions and ground truth.
struct DetInstance {
    std::vector<ScoredBox> preds;
    std::vector<GtBox> gts;
};

struct DetResult {
    double ap50 = 0.0;
    double map = 0.0;  // AP averaged over IoU 0.50:0.05:0.95 and categories
    std::map<int, double> ap50_per_class;
};

// Greedy score-descending matching, all-points precision envelope.
DetResult det_metrics(const std::vector<DetInstance>& instances);

struct EvalReport {
    double fid = 0.0;
    double noise_fid = 0.0;  // pure-noise baseline against the same real stats
    std::map<std::string, double> miou;  // per mask task T1..T4
    std::map<std::string, double> acc;
    double miou_mean = 0.0;          // matched-layout mean over mask-task samples
    double shuffled_miou_mean = 0.0; // control: same images scored against shuffled layouts
    double ap50 = 0.0;
    double map = 0.0;
    double caption_consistency = 0.0;
    int n_samples = 0;
    uint64_t seed = 0;
    std::string config_hash;

    std::string to_json() const;
    static EvalReport from_json(const std::string& text);
};

struct EvalConfig {
    SampleConfig sample;
    std::string extractor = "down8-proj64";
    int oracle_tol = 32;
    uint64_t shuffle_seed = 1234;
    int max_samples = 0;  // 0: all test samples
    int workers = 2;      // parallel sampling threads; per-sample seeds keep results exact
};

// Generates one image per test layout, scores masks/boxes with the oracle
// detector, computes FID against the real test renders plus a pure-noise
// baseline, and the shuffled-layout control.
EvalReport layout_consistency_report(const Model& model, const NoiseSchedule& schedule,
                                     const DatasetManifest& manifest, const EvalConfig& cfg);

// Scores a set of (image, layout) pairs without any model; used for the
// oracle sanity ceiling on real renders.
double oracle_miou_on(const std::vector<ImageU8>& images, const std::vector<Layout>& layouts, int tol = 32);

}  // namespace terragen
