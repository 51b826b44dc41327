#pragma once

#include <string>
#include <vector>

#include "terragen/conditioning.hpp"

namespace terragen {

enum class InjectionMode { AllLevels, CoarseTwo };
enum class MaskMode { Additive, Multiplicative };

struct UNetConfig {
    int image_size = 32;
    int in_channels = 3;
    int base_channels = 32;
    int levels = 4;                                  // stride-2 down blocks / up blocks
    std::vector<int> channels = {32, 64, 64, 128};   // per level, length == levels
    std::vector<int> injection_resolutions = {16, 8, 4};
    InjectionMode injection_mode = InjectionMode::CoarseTwo;
    MaskMode mask_mode = MaskMode::Additive;
    int temb_dim = 64;
    int norm_groups = 8;
    std::vector<double> scale_weight_init = {0.1, 0.3, 0.6};  // finest to coarsest

    void validate() const;
    // Resolutions where injection is active under injection_mode.
    std::vector<int> active_injection_resolutions() const;
};

// Per-scale binary image-token x condition-token masks M_l. Column order
// is [task, caption, entities...]; task and caption columns are all-ones.
struct MaskPyramid {
    std::vector<int> resolutions;
    std::vector<Tensor> masks;  // per scale: (R*R, n+2)
    int entity_count = 0;
};

MaskPyramid build_mask_pyramid(const std::vector<UnifiedEntity>& entities, const UNetConfig& cfg);

// Nearest-resamples a pyramid scale mask (stored at resolution r) to a
// query grid of g x g tokens.
Tensor resample_scale_mask(const Tensor& mask, int r, int g);

// Learnable per-scale mixture weights, softmax-parameterized so that the
// alphas stay positive and sum to one.
struct ScaleWeights {
    Var logits;  // (K)
    Var alphas() const { return softmax(reshape(logits, {1, logits->value.shape[0]}), 1); }
};

// Logits whose softmax reproduces `targets` exactly in double precision
// (searched within a few ulps of log(target); targets must sum to 1).
Tensor exact_softmax_logits(const std::vector<double>& targets);

// Post-softmax attention weights recorded during a forward pass, used as
// gradient-detached inputs to the adaptive loss weight.
struct AttnRecorder {
    struct Site {
        int grid = 0;                   // query grid side
        std::vector<Tensor> per_scale;  // (T, n+2) weights per pyramid scale
    };
    std::vector<Site> sites;
};

// Multi-scale masked cross-attention (one head): for each scale k,
// softmax((Q K^T + bias_k)/sqrt(d)) V in additive mode or
// softmax((Q K^T / sqrt(d)) . M_k) in multiplicative mode, mixed by the
// scale weights.
Var masked_cross_attention(const Var& q, const Var& k, const Var& v,
                           const std::vector<Tensor>& scale_masks, const Var& alphas, MaskMode mode,
                           AttnRecorder::Site* record = nullptr);

// Residual injection at one feature map: f_out = f_in + Wo(MaskedAttn).
Var inject(const Var& f_in, const ConditionBundle& bundle, const MaskPyramid& pyramid,
           const ParamStore& params, const UNetConfig& cfg, const std::string& site_prefix,
           AttnRecorder* recorder = nullptr);

void init_unet_params(ParamStore& params, const UNetConfig& cfg, Rng& rng);

// Epsilon prediction for one sample: x_t (1,C,H,W), timestep t.
Var unet_forward(const Var& x_t, int t, const ConditionBundle& bundle, const MaskPyramid& pyramid,
                 const ParamStore& params, const UNetConfig& cfg, AttnRecorder* recorder = nullptr);

Tensor sinusoidal_time_embedding(int t, int dim);

}  // namespace terragen
