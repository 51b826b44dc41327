#pragma once

#include <array>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "terragen/image.hpp"
#include "terragen/layout.hpp"
#include "terragen/rng.hpp"

namespace terragen {

enum class ShapeKind { Rectangle, Stripe, Blob, SmallSquare, Disc };

struct CategoryShape {
    int category = 0;
    ShapeKind kind = ShapeKind::Rectangle;
};

// Procedural scene recipe for one task. Palette colors are pairwise
// separated by at least 64 (L-inf, 8-bit) so the oracle detector is
// unambiguous.
struct SceneSpec {
    TaskId task = TaskId::T0_Detection;
    int min_entities = 1;
    int max_entities = 4;
    std::vector<CategoryShape> shapes;
    int image_size = 32;
    double bg_amplitude = 14.0;  // background texture amplitude, 8-bit units
    double noise_sigma = 6.0;    // entity pixel noise (chi <= 8/255); clipped at 3 sigma
    std::map<int, std::array<uint8_t, 3>> palette;

    void validate() const;
};

// Shared palette used by the default specs and the oracle detector.
const std::map<int, std::array<uint8_t, 3>>& default_palette();

std::vector<SceneSpec> default_scene_specs(int image_size = 32);

// Draws a scene: disjoint colored shapes over a textured background.
// Every entity records both the exact drawn mask and its tight box; the
// emitted layout always passes validate().
std::pair<ImageU8, Layout> gen_scene(Rng& rng, const SceneSpec& spec);

struct SampleRecord {
    std::string image;   // relative to root; may be empty for layout-only sets
    std::string layout;  // relative to root
    std::string split;   // train | val | test
};

struct DatasetManifest {
    std::string root;
    uint64_t seed = 0;
    std::string spec_hash;
    std::vector<SampleRecord> samples;

    std::vector<SampleRecord> split(const std::string& name) const;
};

DatasetManifest write_dataset(const std::vector<SceneSpec>& specs, int n_train, int n_val, int n_test,
                              const std::string& root, uint64_t seed);

// Reads <root>/manifest.json and verifies every referenced file exists.
DatasetManifest read_manifest(const std::string& root);
void write_manifest(const DatasetManifest& manifest);

ImageU8 load_sample_image(const DatasetManifest& m, const SampleRecord& rec);
Layout load_sample_layout(const DatasetManifest& m, const SampleRecord& rec);

std::string scene_specs_hash(const std::vector<SceneSpec>& specs);

}  // namespace terragen
