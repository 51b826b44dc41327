#include "terragen/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>
#include <stdexcept>

#include <Eigen/Dense>
#include <json.hpp>

#include "terragen/rng.hpp"

namespace terragen {

using nlohmann::json;

namespace {

std::vector<double> down8_proj64(const ImageU8& img) {
    constexpr int kGrid = 8;
    constexpr int kOut = 64;
    // block-average each channel to kGrid x kGrid
    std::vector<double> pooled(kGrid * kGrid * 3, 0.0);
    for (int gy = 0; gy < kGrid; ++gy) {
        int y0 = gy * img.height / kGrid, y1 = (gy + 1) * img.height / kGrid;
        for (int gx = 0; gx < kGrid; ++gx) {
            int x0 = gx * img.width / kGrid, x1 = (gx + 1) * img.width / kGrid;
            double acc[3] = {0, 0, 0};
            int count = 0;
            for (int y = y0; y < std::max(y1, y0 + 1); ++y) {
                for (int x = x0; x < std::max(x1, x0 + 1); ++x) {
                    for (int c = 0; c < 3; ++c) {
                        int src = img.channels == 3 ? c : 0;
                        acc[c] += img.at(std::min(y, img.height - 1), std::min(x, img.width - 1), src);
                    }
                    ++count;
                }
            }
            for (int c = 0; c < 3; ++c) pooled[(gy * kGrid + gx) * 3 + c] = acc[c] / (count * 255.0);
        }
    }
    // fixed seeded projection
    static const std::vector<double> proj = [] {
        Rng rng(0xFEA7);
        std::vector<double> p(static_cast<size_t>(kGrid * kGrid * 3) * kOut);
        double s = 1.0 / std::sqrt(static_cast<double>(kOut));
        for (double& v : p) v = rng.normal() * s;
        return p;
    }();
    std::vector<double> out(kOut, 0.0);
    for (int i = 0; i < kGrid * kGrid * 3; ++i) {
        double v = pooled[static_cast<size_t>(i)];
        if (v == 0.0) continue;
        const double* row = proj.data() + static_cast<size_t>(i) * kOut;
        for (int j = 0; j < kOut; ++j) out[static_cast<size_t>(j)] += v * row[j];
    }
    return out;
}

std::vector<double> mean_rgb(const ImageU8& img) {
    std::vector<double> out(3, 0.0);
    int64_t n = static_cast<int64_t>(img.width) * img.height;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) out[static_cast<size_t>(c)] += img.at(y, x, img.channels == 3 ? c : 0);
    for (double& v : out) v /= (n * 255.0);
    return out;
}

}  // namespace

FeatureExtractor get_extractor(const std::string& name) {
    if (name == "down8-proj64") return down8_proj64;
    if (name == "mean-rgb") return mean_rgb;
    throw std::invalid_argument("get_extractor: unknown extractor '" + name + "'");
}

std::vector<std::string> extractor_names() { return {"down8-proj64", "mean-rgb"}; }

FeatureStats features(const std::vector<ImageU8>& images, const std::string& extractor) {
    if (images.size() < 2) throw std::invalid_argument("features: need at least 2 images");
    FeatureExtractor fx = get_extractor(extractor);
    std::vector<std::vector<double>> feats;
    feats.reserve(images.size());
    for (const auto& img : images) feats.push_back(fx(img));
    int n = static_cast<int>(feats.size());
    int d = static_cast<int>(feats[0].size());

    FeatureStats st;
    st.n = n;
    st.mu = Tensor::zeros({d});
    for (const auto& f : feats)
        for (int i = 0; i < d; ++i) st.mu[i] += f[static_cast<size_t>(i)] / n;

    st.sigma = Tensor::zeros({d, d});
    for (const auto& f : feats) {
        for (int i = 0; i < d; ++i) {
            double di = f[static_cast<size_t>(i)] - st.mu[i];
            for (int j = 0; j < d; ++j) {
                st.sigma.at(i, j) += di * (f[static_cast<size_t>(j)] - st.mu[j]) / (n - 1);
            }
        }
    }
    if (n < d + 1) {
        // Ledoit-style shrinkage toward the scaled identity
        const double lambda = 0.01;
        double tr = 0.0;
        for (int i = 0; i < d; ++i) tr += st.sigma.at(i, i);
        double target = tr / d;
        for (int i = 0; i < d; ++i) {
            for (int j = 0; j < d; ++j) {
                st.sigma.at(i, j) *= (1.0 - lambda);
                if (i == j) st.sigma.at(i, j) += lambda * target;
            }
        }
    }
    return st;
}

namespace {

Eigen::MatrixXd to_eigen(const Tensor& t) {
    int r = t.shape[0], c = t.shape[1];
    Eigen::MatrixXd m(r, c);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) m(i, j) = t.at(i, j);
    return m;
}

// Symmetric PSD square root; eigenvalues below -tol are an error, small
// negatives are clamped to zero.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, const std::string& what) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (m + m.transpose()));
    if (eig.info() != Eigen::Success) throw std::runtime_error("fid: eigendecomposition failed for " + what);
    Eigen::VectorXd vals = eig.eigenvalues();
    for (int i = 0; i < vals.size(); ++i) {
        if (vals(i) < -1e-8) {
            throw std::runtime_error("fid: " + what + " is indefinite (eigenvalue " +
                                     std::to_string(vals(i)) + ")");
        }
        vals(i) = std::sqrt(std::max(0.0, vals(i)));
    }
    return eig.eigenvectors() * vals.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

double fid(const FeatureStats& real, const FeatureStats& gen) {
    if (real.mu.shape != gen.mu.shape || real.sigma.shape != gen.sigma.shape) {
        throw std::invalid_argument("fid: dimension mismatch, " + shape_str(real.mu.shape) + " vs " +
                                    shape_str(gen.mu.shape));
    }
    int d = real.mu.shape[0];
    double mean_term = 0.0;
    for (int i = 0; i < d; ++i) {
        double diff = real.mu[i] - gen.mu[i];
        mean_term += diff * diff;
    }
    Eigen::MatrixXd sr = to_eigen(real.sigma);
    Eigen::MatrixXd sg = to_eigen(gen.sigma);
    Eigen::MatrixXd sr_half = psd_sqrt(sr, "real covariance");
    Eigen::MatrixXd inner = sr_half * sg * sr_half;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (inner + inner.transpose()));
    if (eig.info() != Eigen::Success) throw std::runtime_error("fid: eigendecomposition failed");
    double tr_sqrt = 0.0;
    for (int i = 0; i < d; ++i) {
        double v = eig.eigenvalues()(i);
        if (v < -1e-8) throw std::runtime_error("fid: product matrix indefinite beyond tolerance");
        tr_sqrt += std::sqrt(std::max(0.0, v));
    }
    return mean_term + sr.trace() + sg.trace() - 2.0 * tr_sqrt;
}

std::vector<Detection> oracle_detect(const ImageU8& image,
                                     const std::map<int, std::array<uint8_t, 3>>& palette, int tol) {
    std::vector<Detection> out;
    int H = image.height, W = image.width;
    for (const auto& [category, color] : palette) {
        // threshold map
        Mask hit = Mask::zeros(H, W);
        std::vector<int> dist(static_cast<size_t>(H) * W, 0);
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                int d = 0;
                for (int c = 0; c < 3; ++c) {
                    int src = image.channels == 3 ? c : 0;
                    d = std::max(d, std::abs(int(image.at(y, x, src)) - int(color[c])));
                }
                if (d <= tol) {
                    hit.at(y, x) = 1;
                    dist[static_cast<size_t>(y) * W + x] = d;
                }
            }
        }
        // 4-connected components of at least 4 pixels
        Mask seen = Mask::zeros(H, W);
        for (int start = 0; start < H * W; ++start) {
            if (!hit.bits[static_cast<size_t>(start)] || seen.bits[static_cast<size_t>(start)]) continue;
            std::vector<int> stack = {start};
            std::vector<int> pixels;
            seen.bits[static_cast<size_t>(start)] = 1;
            while (!stack.empty()) {
                int cur = stack.back();
                stack.pop_back();
                pixels.push_back(cur);
                int y = cur / W, x = cur % W;
                const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
                for (int k = 0; k < 4; ++k) {
                    int ny = y + dy[k], nx = x + dx[k];
                    if (ny < 0 || ny >= H || nx < 0 || nx >= W) continue;
                    int ni = ny * W + nx;
                    if (hit.bits[static_cast<size_t>(ni)] && !seen.bits[static_cast<size_t>(ni)]) {
                        seen.bits[static_cast<size_t>(ni)] = 1;
                        stack.push_back(ni);
                    }
                }
            }
            if (pixels.size() < 4) continue;
            Detection det;
            det.category = category;
            det.mask = Mask::zeros(H, W);
            double prox = 0.0;
            for (int p : pixels) {
                det.mask.bits[static_cast<size_t>(p)] = 1;
                prox += 1.0 - static_cast<double>(dist[static_cast<size_t>(p)]) / std::max(1, tol);
            }
            det.score = prox / static_cast<double>(pixels.size());
            det.box = *det.mask.tight_box();
            out.push_back(std::move(det));
        }
    }
    return out;
}

SegResult seg_metrics(const std::map<int, Mask>& pred, const std::map<int, Mask>& gt, int height,
                      int width) {
    auto check = [&](const std::map<int, Mask>& ms, const char* which) {
        for (const auto& [cat, m] : ms) {
            if (m.height != height || m.width != width) {
                throw std::invalid_argument(std::string("seg_metrics: ") + which + " mask for category " +
                                            std::to_string(cat) + " is " + std::to_string(m.height) + "x" +
                                            std::to_string(m.width) + ", expected " + std::to_string(height) +
                                            "x" + std::to_string(width));
            }
        }
    };
    check(pred, "pred");
    check(gt, "gt");

    SegResult res;
    std::vector<int> classes;
    for (const auto& [cat, m] : pred) classes.push_back(cat);
    for (const auto& [cat, m] : gt) classes.push_back(cat);
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());

    double iou_sum = 0.0;
    for (int cat : classes) {
        const Mask* pm = pred.count(cat) ? &pred.at(cat) : nullptr;
        const Mask* gm = gt.count(cat) ? &gt.at(cat) : nullptr;
        int64_t inter = 0, uni = 0;
        for (int64_t i = 0; i < static_cast<int64_t>(height) * width; ++i) {
            bool p = pm && pm->bits[static_cast<size_t>(i)];
            bool g = gm && gm->bits[static_cast<size_t>(i)];
            inter += (p && g) ? 1 : 0;
            uni += (p || g) ? 1 : 0;
        }
        if (uni == 0) continue;  // class absent everywhere: excluded
        double v = static_cast<double>(inter) / static_cast<double>(uni);
        res.per_class_iou[cat] = v;
        iou_sum += v;
        ++res.present_classes;
    }
    res.miou = res.present_classes > 0 ? iou_sum / res.present_classes : 0.0;

    // label maps; ascending category order, later categories overwrite
    std::vector<int> pl(static_cast<size_t>(height) * width, -1);
    std::vector<int> gl(pl);
    for (const auto& [cat, m] : pred) {
        for (int64_t i = 0; i < static_cast<int64_t>(height) * width; ++i) {
            if (m.bits[static_cast<size_t>(i)]) pl[static_cast<size_t>(i)] = cat;
        }
    }
    for (const auto& [cat, m] : gt) {
        for (int64_t i = 0; i < static_cast<int64_t>(height) * width; ++i) {
            if (m.bits[static_cast<size_t>(i)]) gl[static_cast<size_t>(i)] = cat;
        }
    }
    int64_t same = 0;
    for (size_t i = 0; i < pl.size(); ++i) same += pl[i] == gl[i] ? 1 : 0;
    res.acc = static_cast<double>(same) / static_cast<double>(pl.size());
    return res;
}

namespace {

double average_precision(const std::vector<DetInstance>& instances, int category, double iou_thresh) {
    struct PredRef {
        double score;
        size_t img;
        size_t idx;
    };
    std::vector<PredRef> preds;
    int npos = 0;
    for (size_t im = 0; im < instances.size(); ++im) {
        for (size_t pi = 0; pi < instances[im].preds.size(); ++pi) {
            if (instances[im].preds[pi].category == category) preds.push_back({instances[im].preds[pi].score, im, pi});
        }
        for (const auto& g : instances[im].gts) {
            if (g.category == category) ++npos;
        }
    }
    if (npos == 0) return -1.0;  // category not evaluated
    std::sort(preds.begin(), preds.end(), [](const PredRef& a, const PredRef& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.img != b.img) return a.img < b.img;
        return a.idx < b.idx;
    });

    std::vector<std::vector<bool>> gt_used(instances.size());
    for (size_t im = 0; im < instances.size(); ++im) gt_used[im].assign(instances[im].gts.size(), false);

    std::vector<double> precision, recall;
    int tp = 0;
    for (size_t k = 0; k < preds.size(); ++k) {
        const auto& pr = preds[k];
        const auto& inst = instances[pr.img];
        double best_iou = 0.0;
        int best_gt = -1;
        for (size_t gi = 0; gi < inst.gts.size(); ++gi) {
            if (inst.gts[gi].category != category || gt_used[pr.img][gi]) continue;
            double v = iou(inst.preds[pr.idx].box, inst.gts[gi].box);
            if (v > best_iou) {
                best_iou = v;
                best_gt = static_cast<int>(gi);
            }
        }
        if (best_gt >= 0 && best_iou >= iou_thresh) {
            gt_used[pr.img][static_cast<size_t>(best_gt)] = true;
            ++tp;
        }
        precision.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
        recall.push_back(static_cast<double>(tp) / npos);
    }

    // all-points interpolation: integrate the precision envelope
    double ap = 0.0;
    double pmax = 0.0;
    std::vector<double> env(precision.size());
    for (int k = static_cast<int>(precision.size()) - 1; k >= 0; --k) {
        pmax = std::max(pmax, precision[static_cast<size_t>(k)]);
        env[static_cast<size_t>(k)] = pmax;
    }
    double r_prev = 0.0;
    for (size_t k = 0; k < recall.size(); ++k) {
        if (recall[k] > r_prev) {
            ap += (recall[k] - r_prev) * env[k];
            r_prev = recall[k];
        }
    }
    return ap;
}

}  // namespace

DetResult det_metrics(const std::vector<DetInstance>& instances) {
    std::vector<int> cats;
    for (const auto& inst : instances) {
        for (const auto& g : inst.gts) cats.push_back(g.category);
    }
    std::sort(cats.begin(), cats.end());
    cats.erase(std::unique(cats.begin(), cats.end()), cats.end());

    DetResult res;
    if (cats.empty()) return res;
    double ap50_sum = 0.0, map_sum = 0.0;
    for (int cat : cats) {
        double ap50 = average_precision(instances, cat, 0.50);
        res.ap50_per_class[cat] = ap50;
        ap50_sum += ap50;
        double acc = 0.0;
        for (int k = 0; k < 10; ++k) acc += average_precision(instances, cat, 0.50 + 0.05 * k);
        map_sum += acc / 10.0;
    }
    res.ap50 = ap50_sum / static_cast<double>(cats.size());
    res.map = map_sum / static_cast<double>(cats.size());
    return res;
}

namespace {

std::map<int, Mask> class_masks_from_layout(const Layout& layout, int size) {
    std::map<int, Mask> out;
    for (const auto& u : unify(layout, size, size)) {
        auto it = out.find(u.category);
        if (it == out.end()) {
            out[u.category] = u.mask;
        } else {
            for (size_t i = 0; i < it->second.bits.size(); ++i) it->second.bits[i] |= u.mask.bits[i];
        }
    }
    return out;
}

std::map<int, Mask> class_masks_from_detections(const std::vector<Detection>& dets) {
    std::map<int, Mask> out;
    for (const auto& d : dets) {
        auto it = out.find(d.category);
        if (it == out.end()) {
            out[d.category] = d.mask;
        } else {
            for (size_t i = 0; i < it->second.bits.size(); ++i) it->second.bits[i] |= d.mask.bits[i];
        }
    }
    return out;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0, na = 0, nb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 && nb == 0.0) return 1.0;
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

double oracle_miou_on(const std::vector<ImageU8>& images, const std::vector<Layout>& layouts, int tol) {
    if (images.size() != layouts.size()) throw std::invalid_argument("oracle_miou_on: size mismatch");
    double sum = 0.0;
    int counted = 0;
    for (size_t i = 0; i < images.size(); ++i) {
        int size = images[i].height;
        auto gt = class_masks_from_layout(layouts[i], size);
        if (gt.empty()) continue;
        auto dets = oracle_detect(images[i], default_palette(), tol);
        auto pred = class_masks_from_detections(dets);
        SegResult r = seg_metrics(pred, gt, size, size);
        if (r.present_classes == 0) continue;
        sum += r.miou;
        ++counted;
    }
    return counted > 0 ? sum / counted : 0.0;
}

EvalReport layout_consistency_report(const Model& model, const NoiseSchedule& schedule,
                                     const DatasetManifest& manifest, const EvalConfig& cfg) {
    auto test = manifest.split("test");
    if (test.empty()) throw std::runtime_error("layout_consistency_report: manifest has no test split");
    if (cfg.max_samples > 0 && static_cast<int>(test.size()) > cfg.max_samples) {
        test.resize(static_cast<size_t>(cfg.max_samples));
    }
    int S = model.unet.image_size;

    std::vector<ImageU8> real_images(test.size()), gen_images(test.size());
    std::vector<Layout> layouts(test.size());
    for (size_t i = 0; i < test.size(); ++i) {
        layouts[i] = load_sample_layout(manifest, test[i]);
        real_images[i] = load_sample_image(manifest, test[i]);
    }
    // independent per-sample seeds; worker count does not change outputs
    int n_workers = std::max(1, cfg.workers);
    std::vector<std::thread> threads;
    for (int w = 0; w < n_workers; ++w) {
        threads.emplace_back([&, w]() {
            for (size_t i = static_cast<size_t>(w); i < test.size(); i += static_cast<size_t>(n_workers)) {
                SampleConfig sc = cfg.sample;
                sc.seed = Rng::mix(cfg.sample.seed, static_cast<uint64_t>(i));
                gen_images[i] = to_image_u8(ddim_sample(model, layouts[i], schedule, sc));
            }
        });
    }
    for (auto& t : threads) t.join();

    EvalReport report;
    report.n_samples = static_cast<int>(test.size());
    report.seed = cfg.sample.seed;

    // mask tasks: per-sample oracle scoring
    struct TaskAcc {
        double miou = 0, acc = 0;
        int n = 0;
    };
    std::map<std::string, TaskAcc> per_task;
    double matched_sum = 0.0;
    int matched_n = 0;
    std::vector<std::vector<Detection>> all_dets(test.size());

    for (size_t i = 0; i < test.size(); ++i) {
        all_dets[i] = oracle_detect(gen_images[i], default_palette(), cfg.oracle_tol);
        if (layouts[i].task == TaskId::T0_Detection) continue;
        auto gt = class_masks_from_layout(layouts[i], S);
        if (gt.empty()) continue;
        auto pred = class_masks_from_detections(all_dets[i]);
        SegResult r = seg_metrics(pred, gt, S, S);
        if (r.present_classes == 0) continue;
        TaskAcc& acc = per_task[task_name(layouts[i].task)];
        acc.miou += r.miou;
        acc.acc += r.acc;
        acc.n += 1;
        matched_sum += r.miou;
        ++matched_n;
    }
    for (auto& [task, acc] : per_task) {
        report.miou[task] = acc.n ? acc.miou / acc.n : 0.0;
        report.acc[task] = acc.n ? acc.acc / acc.n : 0.0;
    }
    report.miou_mean = matched_n ? matched_sum / matched_n : 0.0;

    // shuffled-layout control: same generated images, layouts permuted
    // within each task (seeded derangement)
    {
        std::map<TaskId, std::vector<size_t>> groups;
        for (size_t i = 0; i < layouts.size(); ++i) {
            if (layouts[i].task != TaskId::T0_Detection) groups[layouts[i].task].push_back(i);
        }
        Rng rng(cfg.shuffle_seed);
        double sum = 0.0;
        int n = 0;
        for (const auto& [task, idxs] : groups) {
            if (idxs.size() < 2) continue;
            std::vector<size_t> perm(idxs.size());
            std::iota(perm.begin(), perm.end(), 0);
            for (size_t k = perm.size() - 1; k > 0; --k) {
                std::swap(perm[k], perm[static_cast<size_t>(rng.uniform_int(static_cast<int>(k + 1)))]);
            }
            for (size_t k = 0; k < perm.size(); ++k) {
                if (perm[k] == k) std::swap(perm[k], perm[(k + 1) % perm.size()]);
            }
            for (size_t k = 0; k < idxs.size(); ++k) {
                size_t img_i = idxs[k];
                size_t lay_i = idxs[perm[k]];
                auto gt = class_masks_from_layout(layouts[lay_i], S);
                if (gt.empty()) continue;
                auto pred = class_masks_from_detections(all_dets[img_i]);
                SegResult r = seg_metrics(pred, gt, S, S);
                if (r.present_classes == 0) continue;
                sum += r.miou;
                ++n;
            }
        }
        report.shuffled_miou_mean = n ? sum / n : 0.0;
    }

    // detection task
    {
        std::vector<DetInstance> instances;
        for (size_t i = 0; i < test.size(); ++i) {
            if (layouts[i].task != TaskId::T0_Detection) continue;
            DetInstance inst;
            for (const auto& d : all_dets[i]) inst.preds.push_back({d.category, d.box, d.score});
            for (const auto& u : unify(layouts[i], S, S)) inst.gts.push_back({u.category, u.box});
            instances.push_back(std::move(inst));
        }
        if (!instances.empty()) {
            DetResult dr = det_metrics(instances);
            report.ap50 = dr.ap50;
            report.map = dr.map;
        }
    }

    // caption consistency: requested vs detected category counts
    {
        int ncat = categories().size();
        double sum = 0.0;
        for (size_t i = 0; i < test.size(); ++i) {
            std::vector<double> want(static_cast<size_t>(ncat), 0.0), got(static_cast<size_t>(ncat), 0.0);
            for (const auto& [cat, cnt] : layouts[i].caption) {
                if (cat >= 0 && cat < ncat) want[static_cast<size_t>(cat)] = cnt;
            }
            for (const auto& d : all_dets[i]) got[static_cast<size_t>(d.category)] += 1.0;
            sum += cosine(want, got);
        }
        report.caption_consistency = test.empty() ? 0.0 : sum / static_cast<double>(test.size());
    }

    // FID against real renders, plus the pure-noise baseline
    {
        FeatureStats real_stats = features(real_images, cfg.extractor);
        FeatureStats gen_stats = features(gen_images, cfg.extractor);
        report.fid = fid(real_stats, gen_stats);

        std::vector<ImageU8> noise_images;
        for (size_t i = 0; i < test.size(); ++i) {
            Rng rng(Rng::mix(cfg.sample.seed ^ 0xA015EULL, static_cast<uint64_t>(i)));
            ImageU8 img = ImageU8::create(S, S, 3);
            for (auto& px : img.data) px = static_cast<uint8_t>(rng.uniform_int(256));
            noise_images.push_back(std::move(img));
        }
        report.noise_fid = fid(real_stats, features(noise_images, cfg.extractor));
    }

    {
        std::ostringstream cfgs;
        cfgs << cfg.extractor << "|" << cfg.oracle_tol << "|" << cfg.sample.ddim_steps << "|"
             << cfg.sample.guidance_scale << "|" << static_cast<int>(cfg.sample.negative_mode);
        uint64_t h = 1469598103934665603ULL;
        for (unsigned char c : cfgs.str()) {
            h ^= c;
            h *= 1099511628211ULL;
        }
        char buf[17];
        std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
        report.config_hash = buf;
    }
    return report;
}

std::string EvalReport::to_json() const {
    json doc;
    doc["fid"] = fid;
    doc["noise_fid"] = noise_fid;
    doc["miou"] = miou;
    doc["acc"] = acc;
    doc["miou_mean"] = miou_mean;
    doc["shuffled_miou_mean"] = shuffled_miou_mean;
    doc["ap50"] = ap50;
    doc["map"] = map;
    doc["caption_consistency"] = caption_consistency;
    doc["n_samples"] = n_samples;
    doc["seed"] = seed;
    doc["config_hash"] = config_hash;
    return doc.dump(2);
}

EvalReport EvalReport::from_json(const std::string& text) {
    json doc = json::parse(text);
    EvalReport r;
    r.fid = doc.at("fid");
    r.noise_fid = doc.at("noise_fid");
    r.miou = doc.at("miou").get<std::map<std::string, double>>();
    r.acc = doc.at("acc").get<std::map<std::string, double>>();
    r.miou_mean = doc.at("miou_mean");
    r.shuffled_miou_mean = doc.at("shuffled_miou_mean");
    r.ap50 = doc.at("ap50");
    r.map = doc.at("map");
    r.caption_consistency = doc.at("caption_consistency");
    r.n_samples = doc.at("n_samples");
    r.seed = doc.at("seed");
    r.config_hash = doc.at("config_hash");
    return r;
}

}  // namespace terragen
