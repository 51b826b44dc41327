#include "terragen/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <thread>
#include <stdexcept>

#include "terragen/checkpoint.hpp"

namespace terragen {

namespace fs = std::filesystem;

NoiseSchedule NoiseSchedule::linear(int t_train, double beta_start, double beta_end) {
    NoiseSchedule s;
    s.t_train = t_train;
    s.beta_start = beta_start;
    s.beta_end = beta_end;
    s.betas.resize(static_cast<size_t>(t_train));
    s.alpha_bars.resize(static_cast<size_t>(t_train));
    double abar = 1.0;
    for (int t = 0; t < t_train; ++t) {
        double beta = t_train == 1 ? beta_start
                                   : beta_start + (beta_end - beta_start) * t / (t_train - 1);
        s.betas[static_cast<size_t>(t)] = beta;
        abar *= (1.0 - beta);
        s.alpha_bars[static_cast<size_t>(t)] = abar;
    }
    s.validate();
    return s;
}

void NoiseSchedule::validate() const {
    if (t_train < 1 || static_cast<int>(betas.size()) != t_train ||
        static_cast<int>(alpha_bars.size()) != t_train) {
        throw std::invalid_argument("NoiseSchedule: inconsistent sizes");
    }
    double prev_beta = 0.0, prev_abar = 1.0;
    for (int t = 0; t < t_train; ++t) {
        double b = betas[static_cast<size_t>(t)];
        double ab = alpha_bars[static_cast<size_t>(t)];
        if (!(b > 0.0 && b < 1.0) || b < prev_beta) {
            throw std::invalid_argument("NoiseSchedule: betas must be increasing in (0,1)");
        }
        if (!(ab < prev_abar) || ab <= 0.0) {
            throw std::invalid_argument("NoiseSchedule: alpha_bar must be strictly decreasing");
        }
        prev_beta = b;
        prev_abar = ab;
    }
}

Tensor forward_noise(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& schedule) {
    if (t < 0 || t >= schedule.t_train) {
        throw std::invalid_argument("forward_noise: t " + std::to_string(t) + " outside [0, " +
                                    std::to_string(schedule.t_train) + ")");
    }
    if (!x0.same_shape(eps)) {
        throw std::invalid_argument("forward_noise: x0 " + shape_str(x0.shape) + " vs eps " +
                                    shape_str(eps.shape));
    }
    double abar = schedule.alpha_bars[static_cast<size_t>(t)];
    double a = std::sqrt(abar), b = std::sqrt(1.0 - abar);
    Tensor out = Tensor::zeros(x0.shape);
    for (int64_t i = 0; i < x0.numel(); ++i) out[i] = a * x0[i] + b * eps[i];
    return out;
}

std::vector<Tensor> entity_attention_maps(const AttnRecorder& recorder, int entity_count, int image_size) {
    std::vector<Tensor> maps(static_cast<size_t>(entity_count), Tensor::zeros({image_size, image_size}));
    if (entity_count == 0) return maps;
    int count = 0;
    for (const auto& site : recorder.sites) {
        int g = site.grid;
        for (const Tensor& w : site.per_scale) {
            if (w.shape[1] != entity_count + 2) continue;  // null-bundle sites carry no entities
            for (int i = 0; i < entity_count; ++i) {
                Tensor& acc = maps[static_cast<size_t>(i)];
                for (int y = 0; y < image_size; ++y) {
                    int sy = std::min(g - 1, y * g / image_size);
                    for (int x = 0; x < image_size; ++x) {
                        int sx = std::min(g - 1, x * g / image_size);
                        acc.at(y, x) += w.at(sy * g + sx, 2 + i);
                    }
                }
            }
            ++count;
        }
    }
    if (count > 0) {
        for (auto& m : maps) {
            for (double& v : m.data) v /= count;
        }
    }
    return maps;
}

AdaptiveWeightMap adaptive_weight(const std::vector<Mask>& layout_masks,
                                  const std::vector<Tensor>& attention_maps, double beta, double floor,
                                  int height, int width) {
    if (!(beta >= 0.0 && beta <= 1.0)) throw std::invalid_argument("adaptive_weight: beta outside [0,1]");
    if (!(floor >= 0.0 && floor < 1.0)) throw std::invalid_argument("adaptive_weight: floor outside [0,1)");
    AdaptiveWeightMap out;
    out.beta = beta;
    out.floor = floor;
    out.weights = Tensor::full({height, width}, 1.0);
    if (layout_masks.empty()) return out;  // no entities: uniform weighting

    Tensor m_layout = Tensor::zeros({height, width});
    for (const Mask& m : layout_masks) {
        if (m.height != height || m.width != width) {
            throw std::invalid_argument("adaptive_weight: mask " + std::to_string(m.height) + "x" +
                                        std::to_string(m.width) + " does not match " +
                                        std::to_string(height) + "x" + std::to_string(width));
        }
        for (int64_t i = 0; i < m_layout.numel(); ++i) {
            if (m.bits[static_cast<size_t>(i)]) m_layout[i] = 1.0;
        }
    }

    Tensor attn_sum = Tensor::zeros({height, width});
    for (const Tensor& a : attention_maps) {
        if (a.shape != attn_sum.shape) {
            throw std::invalid_argument("adaptive_weight: attention map shape " + shape_str(a.shape) +
                                        " does not match " + shape_str(attn_sum.shape));
        }
        for (int64_t i = 0; i < attn_sum.numel(); ++i) attn_sum[i] += a[i];
    }
    // per-sample min-max normalization; a constant map contributes zero
    double lo = attn_sum[0], hi = attn_sum[0];
    for (double v : attn_sum.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    double span = hi - lo;
    if (span > 1e-12) {
        for (double& v : attn_sum.data) v = (v - lo) / span;
    } else {
        for (double& v : attn_sum.data) v = 0.0;
    }

    for (int64_t i = 0; i < out.weights.numel(); ++i) {
        double w = beta * m_layout[i] + (1.0 - beta) * attn_sum[i];
        out.weights[i] = floor + (1.0 - floor) * w;
    }
    return out;
}

Model Model::init(const EncoderConfig& enc, const UNetConfig& unet, uint64_t seed) {
    Model m;
    m.enc = enc;
    m.unet = unet;
    Rng rng(Rng::mix(seed, 0xC0DEC0DEULL));
    init_conditioning_params(m.params, enc, rng);
    init_unet_params(m.params, unet, rng);
    return m;
}

SampleLoss sample_loss(const Model& model, const Layout& layout, const Tensor& x0, int t,
                       const Tensor& eps, int stage, bool drop, const TrainConfig& cfg,
                       const std::optional<Tensor>& fixed_weight) {
    if (stage != 1 && stage != 2) throw std::invalid_argument("sample_loss: stage must be 1 or 2");
    int S = model.unet.image_size;

    Tensor x_t = forward_noise(x0, t, eps, cfg.schedule);
    bool null_cond = stage == 1 || drop;
    ConditionBundle bundle = condition(layout, model.enc, model.params, null_cond, S);

    auto entities = unify(layout, S, S);
    MaskPyramid pyramid = build_mask_pyramid(null_cond ? std::vector<UnifiedEntity>{} : entities, model.unet);

    bool weighted = stage == 2 && cfg.maloss && !null_cond && !entities.empty();
    AttnRecorder recorder;
    Var eps_pred = unet_forward(constant(x_t), t, bundle, pyramid, model.params, model.unet,
                                weighted ? &recorder : nullptr);

    Var diff = sub(constant(eps), eps_pred);
    Var sq = mul(diff, diff);

    SampleLoss out;
    if (weighted) {
        Tensor w;
        if (fixed_weight) {
            w = *fixed_weight;
        } else {
            std::vector<Mask> masks;
            for (const auto& e : entities) masks.push_back(e.mask);
            auto attn = entity_attention_maps(recorder, static_cast<int>(entities.size()), S);
            w = adaptive_weight(masks, attn, cfg.maloss_beta, cfg.maloss_floor, S, S).weights;
        }
        out.weight_map = w;
        Var w_const = constant(Tensor({1, 1, S, S}, w.data));  // detached by construction
        out.loss = mean_all(mul(sq, w_const));
    } else {
        out.weight_map = Tensor::full({S, S}, 1.0);
        out.loss = mean_all(sq);
    }
    return out;
}

namespace {

struct TrainData {
    std::vector<Tensor> images;   // (1,C,S,S) in [-1,1]
    std::vector<Layout> layouts;
};

TrainData load_train_split(const TrainConfig& cfg) {
    DatasetManifest manifest = read_manifest(cfg.dataset_root);
    TrainData data;
    for (const auto& rec : manifest.split("train")) {
        data.images.push_back(from_image_u8(load_sample_image(manifest, rec)));
        data.layouts.push_back(load_sample_layout(manifest, rec));
    }
    if (data.images.empty()) throw std::runtime_error("train: dataset has no train split");
    return data;
}

struct StagePlan {
    int stage;
    int64_t begin;  // global micro-step range [begin, end)
    int64_t end;
    double lr;
};

OptimConfig stage_optim_config(const TrainConfig& cfg, const StagePlan& plan) {
    OptimConfig oc;
    oc.lr_peak = plan.lr;
    oc.lr_min = 0.0;
    oc.warmup_steps = cfg.warmup_steps;
    oc.total_steps = (plan.end - plan.begin) / cfg.accumulation;
    return oc;
}

void save_train_state(const std::string& out_dir, const Model& model, const AdamW& opt,
                      int64_t global_step, int stage) {
    save_params(fs::path(out_dir) / "last.ckpt", model.params);
    std::vector<std::pair<std::string, Tensor>> extra;
    const auto& items = model.params.items();
    AdamW& mut = const_cast<AdamW&>(opt);
    for (size_t i = 0; i < items.size(); ++i) {
        extra.push_back({"optim.m." + items[i].first, mut.first_moments()[i]});
        extra.push_back({"optim.v." + items[i].first, mut.second_moments()[i]});
    }
    extra.push_back({"optim.step", Tensor::scalar(static_cast<double>(opt.step_count()))});
    extra.push_back({"train.global_step", Tensor::scalar(static_cast<double>(global_step))});
    extra.push_back({"train.stage", Tensor::scalar(static_cast<double>(stage))});
    save_checkpoint((fs::path(out_dir) / "last.optim").string(), extra);
}

TrainResult train_loop(const TrainConfig& cfg, Model& model, int64_t start_step,
                       std::unique_ptr<AdamW> opt_in, std::ofstream& log) {
    if (cfg.stage1_steps % cfg.accumulation != 0 || cfg.stage2_steps % cfg.accumulation != 0) {
        throw std::invalid_argument("train: stage step counts must be multiples of accumulation");
    }
    if (cfg.checkpoint_every % cfg.accumulation != 0) {
        throw std::invalid_argument("train: checkpoint_every must be a multiple of accumulation");
    }
    if (cfg.workers < 1) throw std::invalid_argument("train: workers must be >= 1");
    TrainData data = load_train_split(cfg);
    int n_train = static_cast<int>(data.images.size());
    int64_t s1 = cfg.stage1_steps, total = cfg.stage1_steps + cfg.stage2_steps;

    StagePlan plans[2] = {{1, 0, s1, cfg.lr_stage1}, {2, s1, total, cfg.lr_stage2}};

    std::unique_ptr<AdamW> opt = std::move(opt_in);
    std::vector<double> stage2_losses;

    int64_t end = total;
    if (cfg.stop_after > 0) {
        if (cfg.stop_after % cfg.accumulation != 0) {
            throw std::invalid_argument("train: stop_after must be a multiple of accumulation");
        }
        end = std::min<int64_t>(total, cfg.stop_after);
    }

    // Worker models hold value clones of the master parameters; gradients
    // accumulate per worker and are reduced in fixed order at every
    // optimizer boundary, so results do not depend on thread timing.
    int n_workers = std::min(cfg.workers, cfg.batch_size);
    std::vector<Model> workers;
    auto sync_workers = [&]() {
        for (auto& w : workers) {
            for (size_t i = 0; i < model.params.size(); ++i) {
                w.params.items()[i].second->value.data = model.params.items()[i].second->value.data;
            }
        }
    };
    if (n_workers > 1) {
        for (int w = 0; w < n_workers; ++w) workers.push_back(Model::init(cfg.enc, cfg.unet, cfg.seed));
        sync_workers();
    }

    struct Draw {
        int idx;
        int t;
        Tensor eps;
        bool drop;
    };

    for (int64_t g = start_step; g < end; ++g) {
        const StagePlan& plan = plans[g < s1 ? 0 : 1];
        if (g == plan.begin && !opt) {
            opt = std::make_unique<AdamW>(stage_optim_config(cfg, plan), model.params);
            model.params.zero_grad();
            for (auto& w : workers) w.params.zero_grad();
        }
        if (!opt) {  // resumed mid-stage
            throw std::logic_error("train: optimizer not initialized");
        }

        // all randomness drawn on the main thread, in batch order
        Rng rng(Rng::mix(cfg.seed, static_cast<uint64_t>(g)));
        std::vector<Draw> draws;
        for (int b = 0; b < cfg.batch_size; ++b) {
            Draw d;
            d.idx = rng.uniform_int(n_train);
            d.t = rng.uniform_int(cfg.schedule.t_train);
            d.eps = Tensor::zeros(data.images[static_cast<size_t>(d.idx)].shape);
            for (double& v : d.eps.data) v = rng.normal();
            d.drop = plan.stage == 2 && rng.uniform() < cfg.dropout_prob;
            draws.push_back(std::move(d));
        }

        double inv_contrib = 1.0 / (static_cast<double>(cfg.batch_size) * cfg.accumulation);
        std::vector<double> losses(static_cast<size_t>(cfg.batch_size), 0.0);

        auto run_samples = [&](Model& m, int first, int step_by) -> std::string {
            try {
                for (int b = first; b < cfg.batch_size; b += step_by) {
                    const Draw& d = draws[static_cast<size_t>(b)];
                    SampleLoss sl = sample_loss(m, data.layouts[static_cast<size_t>(d.idx)],
                                                data.images[static_cast<size_t>(d.idx)], d.t, d.eps,
                                                plan.stage, d.drop, cfg);
                    if (!std::isfinite(sl.loss->value[0])) throw std::runtime_error("non-finite loss");
                    backward(scale(sl.loss, inv_contrib));
                    losses[static_cast<size_t>(b)] = sl.loss->value[0];
                }
            } catch (const std::exception& e) {
                return e.what();
            }
            return "";
        };

        if (n_workers <= 1) {
            std::string err = run_samples(model, 0, 1);
            if (!err.empty()) throw std::runtime_error("train: aborted at step " + std::to_string(g) + ": " + err);
        } else {
            std::vector<std::thread> threads;
            std::vector<std::string> errors(static_cast<size_t>(n_workers));
            for (int w = 0; w < n_workers; ++w) {
                threads.emplace_back([&, w]() { errors[static_cast<size_t>(w)] = run_samples(workers[static_cast<size_t>(w)], w, n_workers); });
            }
            for (auto& t : threads) t.join();
            for (const auto& err : errors) {
                if (!err.empty()) throw std::runtime_error("train: aborted at step " + std::to_string(g) + ": " + err);
            }
        }

        double micro_mean = 0.0;
        for (double v : losses) micro_mean += v;
        micro_mean /= cfg.batch_size;
        if (plan.stage == 2) stage2_losses.push_back(micro_mean);

        if ((g + 1 - plan.begin) % cfg.accumulation == 0) {
            if (n_workers > 1) {
                // fixed-order reduction: parameter-major, then worker index
                for (size_t i = 0; i < model.params.size(); ++i) {
                    Var p = model.params.items()[i].second;
                    p->ensure_grad();
                    for (auto& w : workers) {
                        Var wp = w.params.items()[i].second;
                        if (!wp->has_grad()) continue;
                        for (int64_t k = 0; k < p->grad.numel(); ++k) p->grad[k] += wp->grad[k];
                    }
                }
            }
            opt->step(model.params);
            model.params.zero_grad();
            for (auto& w : workers) w.params.zero_grad();
            sync_workers();
        }
        double lr = lr_schedule(opt->config(), std::min(opt->step_count(), opt->config().total_steps));
        log << g << "," << plan.stage << "," << micro_mean << "," << lr << "\n";

        if ((g + 1 == end && end < total) || ((g + 1) % cfg.checkpoint_every == 0 && g + 1 < total)) {
            log.flush();
            save_train_state(cfg.out_dir, model, *opt, g + 1, plan.stage);
        }
        if (g + 1 == plan.end) {
            opt.reset();  // next stage gets a fresh schedule
        }
    }
    if (end < total) {
        // early stop: state saved, no final checkpoint yet
        TrainResult partial;
        partial.checkpoint_path = (fs::path(cfg.out_dir) / "last.ckpt").string();
        partial.loss_log_path = (fs::path(cfg.out_dir) / "loss_log.csv").string();
        return partial;
    }

    TrainResult result;
    result.checkpoint_path = (fs::path(cfg.out_dir) / "final.ckpt").string();
    save_params(result.checkpoint_path, model.params);
    result.loss_log_path = (fs::path(cfg.out_dir) / "loss_log.csv").string();
    int n = static_cast<int>(stage2_losses.size());
    int k = std::min(100, n);
    if (k > 0) {
        for (int i = 0; i < k; ++i) result.stage2_first100_mean += stage2_losses[static_cast<size_t>(i)] / k;
        for (int i = n - k; i < n; ++i) result.stage2_last100_mean += stage2_losses[static_cast<size_t>(i)] / k;
    }
    return result;
}

}  // namespace

TrainResult train(const TrainConfig& cfg) {
    if (cfg.out_dir.empty()) throw std::invalid_argument("train: out_dir required");
    fs::create_directories(cfg.out_dir);
    Model model = Model::init(cfg.enc, cfg.unet, cfg.seed);
    std::ofstream log(fs::path(cfg.out_dir) / "loss_log.csv");
    log << "step,stage,loss,lr\n";
    auto result = train_loop(cfg, model, 0, nullptr, log);
    return result;
}

TrainResult train_resume(const TrainConfig& cfg) {
    Model model = Model::init(cfg.enc, cfg.unet, cfg.seed);
    load_params((fs::path(cfg.out_dir) / "last.ckpt").string(), model.params);
    auto extra = load_checkpoint((fs::path(cfg.out_dir) / "last.optim").string());

    std::map<std::string, Tensor> extras;
    for (auto& [name, t] : extra) extras[name] = std::move(t);
    int64_t global_step = static_cast<int64_t>(extras.at("train.global_step")[0]);
    int64_t opt_step = static_cast<int64_t>(extras.at("optim.step")[0]);

    int64_t s1 = cfg.stage1_steps;
    StagePlan plan = global_step < s1 ? StagePlan{1, 0, s1, cfg.lr_stage1}
                                      : StagePlan{2, s1, s1 + cfg.stage2_steps, cfg.lr_stage2};
    std::unique_ptr<AdamW> opt;
    if (global_step != plan.begin) {
        // mid-stage: restore the optimizer; at a stage boundary the loop
        // creates a fresh one for the new schedule
        opt = std::make_unique<AdamW>(stage_optim_config(cfg, plan), model.params);
        opt->set_step_count(opt_step);
        const auto& items = model.params.items();
        for (size_t i = 0; i < items.size(); ++i) {
            opt->first_moments()[i] = extras.at("optim.m." + items[i].first);
            opt->second_moments()[i] = extras.at("optim.v." + items[i].first);
        }
    }
    model.params.zero_grad();

    std::ofstream log(fs::path(cfg.out_dir) / "loss_log.csv", std::ios::app);
    return train_loop(cfg, model, global_step, std::move(opt), log);
}

Tensor ddim_sample_core(const EpsFn& eps_fn, const std::vector<int>& shape, const NoiseSchedule& schedule,
                        int ddim_steps, uint64_t seed) {
    if (ddim_steps < 1 || ddim_steps > schedule.t_train) {
        throw std::invalid_argument("ddim_sample: ddim_steps " + std::to_string(ddim_steps) +
                                    " outside [1, " + std::to_string(schedule.t_train) + "]");
    }
    Rng rng(Rng::mix(seed, 0xD1F0ULL));
    Tensor x = Tensor::zeros(shape);
    for (double& v : x.data) v = rng.normal();

    std::vector<int> ts(static_cast<size_t>(ddim_steps));
    for (int i = 0; i < ddim_steps; ++i) {
        ts[static_cast<size_t>(i)] = static_cast<int>(static_cast<int64_t>(i) * schedule.t_train / ddim_steps);
    }
    for (int i = ddim_steps - 1; i >= 0; --i) {
        int t = ts[static_cast<size_t>(i)];
        double abar = schedule.alpha_bars[static_cast<size_t>(t)];
        double abar_prev = i > 0 ? schedule.alpha_bars[static_cast<size_t>(ts[static_cast<size_t>(i - 1)])] : 1.0;
        Tensor eps = eps_fn(x, t);
        if (!eps.same_shape(x)) throw std::runtime_error("ddim_sample: eps shape mismatch");
        double sa = std::sqrt(abar), sb = std::sqrt(1.0 - abar);
        double pa = std::sqrt(abar_prev), pb = std::sqrt(1.0 - abar_prev);
        for (int64_t j = 0; j < x.numel(); ++j) {
            double x0 = (x[j] - sb * eps[j]) / sa;
            x[j] = pa * x0 + pb * eps[j];
        }
    }
    return x;
}

std::pair<double, double> task_adaptive_alphas(TaskId task) {
    if (task == TaskId::T0_Detection) return {0.8, 0.6};
    return {0.6, 0.9};
}

Tensor ddim_sample(const Model& model, const Layout& layout, const NoiseSchedule& schedule,
                   const SampleConfig& cfg) {
    if (!(cfg.guidance_scale >= 0.0)) throw std::invalid_argument("ddim_sample: guidance scale must be >= 0");
    int S = model.unet.image_size;

    EncoderConfig enc = model.enc;
    auto [abox, amask] = task_adaptive_alphas(layout.task);
    enc.alpha_box = cfg.alpha_box.value_or(abox);
    enc.alpha_mask = cfg.alpha_mask.value_or(amask);

    ConditionBundle cond_bundle = condition(layout, enc, model.params, false, S);
    ConditionBundle null_bundle = condition(layout, enc, model.params, true, S);
    MaskPyramid pyramid = build_mask_pyramid(unify(layout, S, S), model.unet);

    ConditionBundle neg_bundle;
    bool has_neg_task = cfg.negative_mode == NegativeMode::NonTargetTask;
    if (has_neg_task) {
        // seeded-random different task as the negative condition
        Rng task_rng(Rng::mix(cfg.seed, 0x7A5CULL));
        int cur = static_cast<int>(layout.task);
        int other = task_rng.uniform_int(kNumTasks - 1);
        if (other >= cur) ++other;
        Layout neg_layout = layout;
        neg_layout.task = static_cast<TaskId>(other);
        neg_bundle = condition(neg_layout, enc, model.params, false, S);
    }

    auto eval_eps = [&](const Tensor& x, int t, const ConditionBundle& bundle) {
        Var v = unet_forward(constant(x), t, bundle, pyramid, model.params, model.unet);
        return v->value;
    };

    double s = cfg.guidance_scale;
    EpsFn guided = [&](const Tensor& x, int t) -> Tensor {
        if (s == 0.0) return eval_eps(x, t, null_bundle);
        if (cfg.negative_mode == NegativeMode::Null) {
            if (s == 1.0) return eval_eps(x, t, cond_bundle);  // exact algebra of Eq-10-style guidance
            Tensor eu = eval_eps(x, t, null_bundle);
            Tensor ec = eval_eps(x, t, cond_bundle);
            for (int64_t i = 0; i < eu.numel(); ++i) eu[i] = eu[i] + s * (ec[i] - eu[i]);
            return eu;
        }
        Tensor eu = eval_eps(x, t, null_bundle);
        Tensor ec = eval_eps(x, t, cond_bundle);
        Tensor en = eval_eps(x, t, neg_bundle);
        for (int64_t i = 0; i < eu.numel(); ++i) eu[i] = eu[i] + s * (ec[i] - en[i]);
        return eu;
    };

    Tensor x = ddim_sample_core(guided, {1, model.unet.in_channels, S, S}, schedule, cfg.ddim_steps,
                                cfg.seed);
    for (double& v : x.data) v = std::clamp(v, -1.0, 1.0);
    return x;
}

ImageU8 to_image_u8(const Tensor& x) {
    if (x.ndim() != 4 || x.shape[0] != 1) throw std::invalid_argument("to_image_u8: expected (1,C,H,W)");
    int C = x.shape[1], H = x.shape[2], W = x.shape[3];
    if (C != 1 && C != 3) throw std::invalid_argument("to_image_u8: channels must be 1 or 3");
    ImageU8 img = ImageU8::create(W, H, C);
    for (int c = 0; c < C; ++c)
        for (int h = 0; h < H; ++h)
            for (int w = 0; w < W; ++w) {
                double v = std::round((x.at(0, c, h, w) + 1.0) * 127.5);
                img.at(h, w, c) = static_cast<uint8_t>(std::clamp(v, 0.0, 255.0));
            }
    return img;
}

Tensor from_image_u8(const ImageU8& img) {
    Tensor x = Tensor::zeros({1, img.channels, img.height, img.width});
    for (int c = 0; c < img.channels; ++c)
        for (int h = 0; h < img.height; ++h)
            for (int w = 0; w < img.width; ++w) x.at(0, c, h, w) = img.at(h, w, c) / 127.5 - 1.0;
    return x;
}

}  // namespace terragen
