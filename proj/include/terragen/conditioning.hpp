#pragma once

#include <optional>
#include <string>
#include <vector>

#include "terragen/layout.hpp"
#include "terragen/ops.hpp"
#include "terragen/optim.hpp"

namespace terragen {

enum class Modality { Both, BoxOnly, MaskOnly };

struct EncoderConfig {
    int embed_dim = 64;  // D (768 at paper scale)
    int fusion_heads = 4;
    int fusion_key_dim = 16;
    std::vector<int> mask_cnn_channels = {8, 16, 32, 64};  // ladder of 4, last == D
    int n_categories = 31;
    int mask_input_size = 16;  // entity masks are resampled to this square input
    double alpha_box = 1.0;    // modality mixing weights; task-adaptive at inference
    double alpha_mask = 1.0;
    Modality modality = Modality::Both;

    void validate() const;
};

// Tokens conditioning the denoiser. Stacking order is [task; caption;
// entities], matching the mask pyramid's column order. entity_tokens is
// null when there are no entities (and always for the null bundle).
struct ConditionBundle {
    Var task_token;     // (1,D)
    Var caption_token;  // (1,D)
    Var entity_tokens;  // (n,D) or null
    bool null_flag = false;

    int entity_count() const;
    int token_count() const { return entity_count() + 2; }
    Var stacked() const;  // (n+2, D)
};

// Registers all encoder parameters under "cond.*".
void init_conditioning_params(ParamStore& params, const EncoderConfig& cfg, Rng& rng);

// Box branch phi_b: (x1,y1,x2,y2) ++ category embedding -> 2-layer MLP.
// Returns null for an empty entity list.
Var encode_boxes(const std::vector<UnifiedEntity>& entities, const EncoderConfig& cfg,
                 const ParamStore& params);

// Mask branch phi_m: masks resampled to ExE, 4 stride-2 convs through the
// channel ladder, adaptive average pooling to D per entity.
Var encode_masks(const std::vector<UnifiedEntity>& entities, const EncoderConfig& cfg,
                 const ParamStore& params);

// Fusion psi: alpha_box*box + alpha_mask*CrossAttn(q=box, k/v=mask) plus a
// residual projection of the box features.
Var fuse(const Var& box_feats, const Var& mask_feats, const EncoderConfig& cfg, const ParamStore& params);

// Full conditioning path: unify -> encode -> fuse -> task FiLM, plus task
// and caption tokens. drop=true returns the learned null bundle,
// independent of the layout.
ConditionBundle condition(const Layout& layout, const EncoderConfig& cfg, const ParamStore& params,
                          bool drop, int unify_grid);

// Nearest-neighbor resample of a binary mask to an ExE grid.
Tensor resample_mask(const Mask& mask, int size);

}  // namespace terragen
