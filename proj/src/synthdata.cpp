#include "terragen/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "terragen/layout_io.hpp"

namespace terragen {

namespace fs = std::filesystem;
using nlohmann::json;

void SceneSpec::validate() const {
    if (image_size < 8) throw std::invalid_argument("SceneSpec: image_size too small");
    if (min_entities < 0 || max_entities < min_entities) {
        throw std::invalid_argument("SceneSpec: bad entity count range");
    }
    for (const auto& cs : shapes) {
        if (!palette.count(cs.category)) {
            throw std::invalid_argument("SceneSpec: category " + std::to_string(cs.category) +
                                        " missing from palette");
        }
        if (!categories().legal_for(task, cs.category)) {
            throw std::invalid_argument("SceneSpec: category " + categories().name_of(cs.category) +
                                        " illegal for task " + task_name(task));
        }
    }
    // palette separation keeps the oracle detector unambiguous
    for (auto a = palette.begin(); a != palette.end(); ++a) {
        for (auto b = std::next(a); b != palette.end(); ++b) {
            int linf = 0;
            for (int c = 0; c < 3; ++c) linf = std::max(linf, std::abs(int(a->second[c]) - int(b->second[c])));
            if (linf < 64) {
                throw std::invalid_argument("SceneSpec: palette colors for " + std::to_string(a->first) +
                                            " and " + std::to_string(b->first) + " are only " +
                                            std::to_string(linf) + " apart (need >= 64)");
            }
        }
    }
}

const std::map<int, std::array<uint8_t, 3>>& default_palette() {
    static const std::map<int, std::array<uint8_t, 3>> palette = [] {
        const CategoryTable& t = categories();
        std::map<int, std::array<uint8_t, 3>> p;
        p[t.id_of("building")] = {220, 60, 60};
        p[t.id_of("road")] = {230, 230, 60};
        p[t.id_of("water")] = {60, 90, 220};
        p[t.id_of("flood")] = {60, 200, 220};
        p[t.id_of("vehicle")] = {240, 240, 240};
        p[t.id_of("storagetank")] = {150, 60, 200};
        return p;
    }();
    return palette;
}

std::vector<SceneSpec> default_scene_specs(int image_size) {
    const CategoryTable& t = categories();
    const auto& pal = default_palette();
    auto base = [&](TaskId task, int lo, int hi, std::vector<CategoryShape> shapes) {
        SceneSpec s;
        s.task = task;
        s.min_entities = lo;
        s.max_entities = hi;
        s.shapes = std::move(shapes);
        s.image_size = image_size;
        for (const auto& cs : s.shapes) s.palette[cs.category] = pal.at(cs.category);
        s.validate();
        return s;
    };
    std::vector<SceneSpec> specs;
    specs.push_back(base(TaskId::T0_Detection, 2, 5,
                         {{t.id_of("vehicle"), ShapeKind::SmallSquare},
                          {t.id_of("storagetank"), ShapeKind::Disc}}));
    specs.push_back(base(TaskId::T1_SemanticSeg, 2, 4,
                         {{t.id_of("building"), ShapeKind::Rectangle},
                          {t.id_of("road"), ShapeKind::Stripe},
                          {t.id_of("water"), ShapeKind::Blob}}));
    specs.push_back(base(TaskId::T2_Building, 1, 4, {{t.id_of("building"), ShapeKind::Rectangle}}));
    specs.push_back(base(TaskId::T3_Road, 1, 3, {{t.id_of("road"), ShapeKind::Stripe}}));
    specs.push_back(base(TaskId::T4_Flood, 1, 3, {{t.id_of("flood"), ShapeKind::Blob}}));
    return specs;
}

namespace {

struct PlacedShape {
    int category;
    Mask mask;
};

// Occupancy with a 1-pixel ring so components never touch.
bool fits(const Mask& occupied, const Mask& shape) {
    int H = shape.height, W = shape.width;
    for (int r = 0; r < H; ++r) {
        for (int c = 0; c < W; ++c) {
            if (!shape.at(r, c)) continue;
            for (int dr = -1; dr <= 1; ++dr) {
                for (int dc = -1; dc <= 1; ++dc) {
                    int nr = r + dr, nc = c + dc;
                    if (nr < 0 || nr >= H || nc < 0 || nc >= W) continue;
                    if (occupied.at(nr, nc)) return false;
                }
            }
        }
    }
    return true;
}

Mask draw_shape(Rng& rng, ShapeKind kind, int S, bool horizontal_roads) {
    Mask m = Mask::zeros(S, S);
    switch (kind) {
        case ShapeKind::Rectangle: {
            int w = 4 + rng.uniform_int(std::max(1, S / 4));
            int h = 4 + rng.uniform_int(std::max(1, S / 4));
            w = std::min(w, S - 2);
            h = std::min(h, S - 2);
            int r0 = rng.uniform_int(S - h);
            int c0 = rng.uniform_int(S - w);
            for (int r = r0; r < r0 + h; ++r)
                for (int c = c0; c < c0 + w; ++c) m.at(r, c) = 1;
            break;
        }
        case ShapeKind::SmallSquare: {
            int side = 3 + rng.uniform_int(2);
            int r0 = rng.uniform_int(S - side);
            int c0 = rng.uniform_int(S - side);
            for (int r = r0; r < r0 + side; ++r)
                for (int c = c0; c < c0 + side; ++c) m.at(r, c) = 1;
            break;
        }
        case ShapeKind::Disc: {
            int rad = 2 + rng.uniform_int(3);
            rad = std::min(rad, S / 2 - 1);
            int cy = rad + rng.uniform_int(std::max(1, S - 2 * rad));
            int cx = rad + rng.uniform_int(std::max(1, S - 2 * rad));
            for (int r = 0; r < S; ++r)
                for (int c = 0; c < S; ++c) {
                    double dy = r - cy, dx = c - cx;
                    if (dy * dy + dx * dx <= rad * rad + 0.25) m.at(r, c) = 1;
                }
            break;
        }
        case ShapeKind::Blob: {
            // rotated ellipse: connected, irregular tight box
            double a = 3.0 + rng.uniform() * 4.0;
            double b = 2.0 + rng.uniform() * 3.0;
            a = std::min(a, S / 2.0 - 1.5);
            b = std::min(b, a);
            double theta = rng.uniform() * M_PI;
            double span = std::max(0.0, S - 2 * a - 2);
            double cy = a + 1 + rng.uniform() * span;
            double cx = a + 1 + rng.uniform() * span;
            double ct = std::cos(theta), st = std::sin(theta);
            for (int r = 0; r < S; ++r)
                for (int c = 0; c < S; ++c) {
                    double dy = r - cy, dx = c - cx;
                    double u = ct * dx + st * dy;
                    double v = -st * dx + ct * dy;
                    if ((u * u) / (a * a) + (v * v) / (b * b) <= 1.0) m.at(r, c) = 1;
                }
            break;
        }
        case ShapeKind::Stripe: {
            // border-to-border band; parallel per scene so road components
            // stay separable
            int w = 3 + rng.uniform_int(3);
            if (horizontal_roads) {
                int r0 = rng.uniform_int(S - w);
                for (int r = r0; r < r0 + w; ++r)
                    for (int c = 0; c < S; ++c) m.at(r, c) = 1;
            } else {
                int c0 = rng.uniform_int(S - w);
                for (int c = c0; c < c0 + w; ++c)
                    for (int r = 0; r < S; ++r) m.at(r, c) = 1;
            }
            break;
        }
    }
    return m;
}

}  // namespace

std::pair<ImageU8, Layout> gen_scene(Rng& rng, const SceneSpec& spec) {
    spec.validate();
    int S = spec.image_size;

    // textured background: two low-frequency waves around a dark base
    const double base[3] = {45, 55, 45};
    double fx1 = 1.0 + rng.uniform() * 2.0, fy1 = 1.0 + rng.uniform() * 2.0, p1 = rng.uniform() * 6.28;
    double fx2 = 2.0 + rng.uniform() * 3.0, fy2 = 2.0 + rng.uniform() * 3.0, p2 = rng.uniform() * 6.28;
    ImageU8 img = ImageU8::create(S, S, 3);
    for (int r = 0; r < S; ++r) {
        for (int c = 0; c < S; ++c) {
            double u = static_cast<double>(c) / S, v = static_cast<double>(r) / S;
            double tex = 0.5 * std::sin(2 * M_PI * (fx1 * u + fy1 * v) + p1) +
                         0.5 * std::sin(2 * M_PI * (fx2 * u - fy2 * v) + p2);
            for (int ch = 0; ch < 3; ++ch) {
                double val = base[ch] + spec.bg_amplitude * tex;
                img.at(r, c, ch) = static_cast<uint8_t>(std::clamp(val, 0.0, 255.0));
            }
        }
    }

    int n = spec.min_entities + rng.uniform_int(spec.max_entities - spec.min_entities + 1);
    bool horizontal_roads = rng.uniform() < 0.5;

    Mask occupied = Mask::zeros(S, S);
    std::vector<PlacedShape> placed;
    for (int i = 0; i < n; ++i) {
        const CategoryShape& cs = spec.shapes[static_cast<size_t>(rng.uniform_int(
            static_cast<int>(spec.shapes.size())))];
        bool ok = false;
        for (int attempt = 0; attempt < 40 && !ok; ++attempt) {
            Mask shape = draw_shape(rng, cs.kind, S, horizontal_roads);
            if (shape.area() < 4) continue;
            if (!fits(occupied, shape)) continue;
            for (size_t k = 0; k < occupied.bits.size(); ++k) occupied.bits[k] |= shape.bits[k];
            placed.push_back({cs.category, std::move(shape)});
            ok = true;
        }
        // crowded frame: entity skipped
    }

    Layout layout;
    layout.task = spec.task;
    for (const auto& ps : placed) {
        // paint with per-pixel noise clipped inside the oracle tolerance
        const auto& color = spec.palette.at(ps.category);
        for (int r = 0; r < S; ++r) {
            for (int c = 0; c < S; ++c) {
                if (!ps.mask.at(r, c)) continue;
                for (int ch = 0; ch < 3; ++ch) {
                    double noise = std::clamp(rng.normal() * spec.noise_sigma, -24.0, 24.0);
                    img.at(r, c, ch) = static_cast<uint8_t>(std::clamp(color[ch] + noise, 0.0, 255.0));
                }
            }
        }
        LayoutEntity e;
        e.category = ps.category;
        e.mask = ps.mask;
        e.box = ps.mask.tight_box();
        layout.entities.push_back(std::move(e));
    }
    layout.recount_caption();
    return {std::move(img), std::move(layout)};
}

std::string scene_specs_hash(const std::vector<SceneSpec>& specs) {
    // FNV-1a over a canonical rendering
    std::string repr;
    for (const auto& s : specs) {
        repr += task_name(s.task) + ";" + std::to_string(s.min_entities) + "-" + std::to_string(s.max_entities) +
                ";" + std::to_string(s.image_size) + ";";
        for (const auto& cs : s.shapes) {
            repr += std::to_string(cs.category) + ":" + std::to_string(static_cast<int>(cs.kind)) + ",";
        }
        for (const auto& [cat, rgb] : s.palette) {
            repr += std::to_string(cat) + "=" + std::to_string(rgb[0]) + "." + std::to_string(rgb[1]) + "." +
                    std::to_string(rgb[2]) + ",";
        }
    }
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : repr) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::vector<SampleRecord> DatasetManifest::split(const std::string& name) const {
    std::vector<SampleRecord> out;
    for (const auto& s : samples) {
        if (s.split == name) out.push_back(s);
    }
    return out;
}

DatasetManifest write_dataset(const std::vector<SceneSpec>& specs, int n_train, int n_val, int n_test,
                              const std::string& root, uint64_t seed) {
    if (specs.empty()) throw std::invalid_argument("write_dataset: no scene specs");
    fs::create_directories(fs::path(root) / "images");
    fs::create_directories(fs::path(root) / "layouts");

    DatasetManifest manifest;
    manifest.root = root;
    manifest.seed = seed;
    manifest.spec_hash = scene_specs_hash(specs);

    struct SplitPlan {
        const char* name;
        int count;
    };
    SplitPlan plan[3] = {{"train", n_train}, {"val", n_val}, {"test", n_test}};
    int64_t global = 0;
    for (const auto& sp : plan) {
        for (int i = 0; i < sp.count; ++i, ++global) {
            const SceneSpec& spec = specs[static_cast<size_t>(global % specs.size())];
            Rng rng(Rng::mix(seed, static_cast<uint64_t>(global)));
            auto [img, layout] = gen_scene(rng, spec);

            char name[64];
            std::snprintf(name, sizeof(name), "%s_%05d", sp.name, i);
            std::string image_rel = std::string("images/") + name + ".png";
            std::string layout_rel = std::string("layouts/") + name + ".json";
            write_png((fs::path(root) / image_rel).string(), img);
            write_layout((fs::path(root) / layout_rel).string(), layout);
            manifest.samples.push_back({image_rel, layout_rel, sp.name});
        }
    }
    write_manifest(manifest);
    return manifest;
}

void write_manifest(const DatasetManifest& manifest) {
    json doc;
    doc["seed"] = manifest.seed;
    doc["spec_hash"] = manifest.spec_hash;
    json samples = json::array();
    for (const auto& s : manifest.samples) {
        json js;
        js["layout"] = s.layout;
        js["split"] = s.split;
        if (!s.image.empty()) js["image"] = s.image;
        samples.push_back(std::move(js));
    }
    doc["samples"] = std::move(samples);
    std::ofstream f(fs::path(manifest.root) / "manifest.json");
    if (!f) throw std::runtime_error("write_manifest: cannot open " + manifest.root + "/manifest.json");
    f << doc.dump(2) << "\n";
}

DatasetManifest read_manifest(const std::string& root) {
    std::ifstream f(fs::path(root) / "manifest.json");
    if (!f) throw std::runtime_error("read_manifest: cannot open " + root + "/manifest.json");
    json doc;
    try {
        f >> doc;
    } catch (const json::exception& e) {
        throw std::runtime_error("read_manifest: corrupt manifest in " + root + ": " + e.what());
    }
    DatasetManifest m;
    m.root = root;
    m.seed = doc.at("seed").get<uint64_t>();
    m.spec_hash = doc.value("spec_hash", "");
    for (const auto& js : doc.at("samples")) {
        SampleRecord rec;
        rec.layout = js.at("layout").get<std::string>();
        rec.split = js.at("split").get<std::string>();
        rec.image = js.value("image", "");
        if (!fs::exists(fs::path(root) / rec.layout)) {
            throw std::runtime_error("read_manifest: missing layout file " + rec.layout);
        }
        if (!rec.image.empty() && !fs::exists(fs::path(root) / rec.image)) {
            throw std::runtime_error("read_manifest: missing image file " + rec.image);
        }
        m.samples.push_back(std::move(rec));
    }
    return m;
}

ImageU8 load_sample_image(const DatasetManifest& m, const SampleRecord& rec) {
    if (rec.image.empty()) throw std::runtime_error("load_sample_image: record has no image");
    return read_png((fs::path(m.root) / rec.image).string());
}

Layout load_sample_layout(const DatasetManifest& m, const SampleRecord& rec) {
    return read_layout((fs::path(m.root) / rec.layout).string());
}

}  // namespace terragen
