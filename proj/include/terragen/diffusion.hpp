#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "terragen/denoiser.hpp"
#include "terragen/image.hpp"
#include "terragen/synthdata.hpp"

namespace terragen {

struct NoiseSchedule {
    int t_train = 1000;
    double beta_start = 1e-4;
    double beta_end = 2e-2;
    std::vector<double> betas;       // linear
    std::vector<double> alpha_bars;  // cumulative product of (1 - beta)

    static NoiseSchedule linear(int t_train = 1000, double beta_start = 1e-4, double beta_end = 2e-2);
    void validate() const;
};

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps
Tensor forward_noise(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& schedule);

// Per-pixel loss weight of the adaptive mask-weighted objective:
// W = beta*M_layout + (1-beta)*minmax(sum_i A_i), rescaled into
// [floor, 1]. Attention maps are plain tensors (already detached).
// An empty entity list yields W == 1.
struct AdaptiveWeightMap {
    Tensor weights;  // (H,W) in [floor, 1]
    double beta = 0.5;
    double floor = 0.0;
};

AdaptiveWeightMap adaptive_weight(const std::vector<Mask>& layout_masks,
                                  const std::vector<Tensor>& attention_maps, double beta, double floor,
                                  int height, int width);

// Per-entity attention maps A_i at image resolution: mean over recorded
// sites and pyramid scales of the entity columns, nearest-upsampled.
std::vector<Tensor> entity_attention_maps(const AttnRecorder& recorder, int entity_count, int image_size);

// Model bundle: configs plus every trainable parameter.
struct Model {
    EncoderConfig enc;
    UNetConfig unet;
    ParamStore params;

    static Model init(const EncoderConfig& enc, const UNetConfig& unet, uint64_t seed);
};

struct TrainConfig {
    NoiseSchedule schedule = NoiseSchedule::linear();
    int stage1_steps = 2000;  // micro-batch steps; optimizer updates every `accumulation`
    int stage2_steps = 4000;
    double lr_stage1 = 1e-4;
    double lr_stage2 = 5e-5;
    int warmup_steps = 100;  // optimizer updates
    int batch_size = 8;
    int accumulation = 4;  // effective batch 32
    double dropout_prob = 0.10;
    bool maloss = true;  // stage-2 adaptive mask weighting
    double maloss_beta = 0.5;
    double maloss_floor = 0.0;
    uint64_t seed = 0;
    int checkpoint_every = 2000;  // micro steps; must be a multiple of accumulation
    int stop_after = 0;           // stop early after this many micro steps (0: run to completion)
    // Samples of a micro-batch are spread over this many threads. Results
    // are bit-reproducible for a fixed value (fixed partition and
    // reduction order); different values regroup the gradient sums.
    int workers = 2;
    std::string dataset_root;
    std::string out_dir;
    EncoderConfig enc;
    UNetConfig unet;
};

// One-sample denoising loss. Stage 1 uses the null bundle and plain MSE;
// stage 2 conditions on the layout (unless dropped) and weights the
// squared error by W. fixed_weight overrides the live W computation (the
// finite-difference harness freezes W at the base point).
struct SampleLoss {
    Var loss;
    Tensor weight_map;  // (H,W); all-ones when unweighted
};

SampleLoss sample_loss(const Model& model, const Layout& layout, const Tensor& x0, int t,
                       const Tensor& eps, int stage, bool drop, const TrainConfig& cfg,
                       const std::optional<Tensor>& fixed_weight = std::nullopt);

struct TrainResult {
    std::string checkpoint_path;
    std::string loss_log_path;
    double stage2_first100_mean = 0.0;
    double stage2_last100_mean = 0.0;
};

TrainResult train(const TrainConfig& cfg);

// Resumes from <out_dir>/last.ckpt written by a previous (partial) run;
// reproduces the unresumed run bit-exactly.
TrainResult train_resume(const TrainConfig& cfg);

enum class NegativeMode { Null, NonTargetTask };

struct SampleConfig {
    int ddim_steps = 50;
    double guidance_scale = 5.5;  // 3.0 for enhanced layout control
    NegativeMode negative_mode = NegativeMode::Null;
    uint64_t seed = 0;
    std::optional<double> alpha_box;   // default: task-adaptive
    std::optional<double> alpha_mask;
};

// Deterministic DDIM (eta = 0) over evenly spaced timesteps, driven by an
// arbitrary eps model; used directly by tests with analytic models.
using EpsFn = std::function<Tensor(const Tensor& x, int t)>;
Tensor ddim_sample_core(const EpsFn& eps_fn, const std::vector<int>& shape, const NoiseSchedule& schedule,
                        int ddim_steps, uint64_t seed);

// Full guided sampling for one layout; returns the image in [-1,1].
Tensor ddim_sample(const Model& model, const Layout& layout, const NoiseSchedule& schedule,
                   const SampleConfig& cfg);

ImageU8 to_image_u8(const Tensor& x);   // [-1,1] -> 8-bit RGB
Tensor from_image_u8(const ImageU8& img);  // 8-bit -> [-1,1], (1,C,H,W)

// Task-adaptive modality weights used at inference when the sample config
// leaves them unset: detection emphasizes boxes, segmentation masks.
std::pair<double, double> task_adaptive_alphas(TaskId task);

}  // namespace terragen
