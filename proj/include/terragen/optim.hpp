#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "terragen/autograd.hpp"
#include "terragen/rng.hpp"

namespace terragen {

// Named trainable leaves in registration order. Registration order is the
// canonical parameter order used by the optimizer and checkpoints.
class ParamStore {
public:
    Var add(const std::string& name, Tensor init);
    Var get(const std::string& name) const;
    bool has(const std::string& name) const { return index_.count(name) > 0; }
    const std::vector<std::pair<std::string, Var>>& items() const { return items_; }
    size_t size() const { return items_.size(); }

    void zero_grad();
    int64_t total_scalars() const;

private:
    std::vector<std::pair<std::string, Var>> items_;
    std::unordered_map<std::string, size_t> index_;
};

struct OptimConfig {
    double lr_peak = 1e-4;
    double lr_min = 0.0;
    int64_t warmup_steps = 100;
    int64_t total_steps = 1000;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 1e-2;
    double eps = 1e-8;
};

// lr_peak*(step/warmup) during warmup, then cosine down to lr_min at
// total_steps.
double lr_schedule(const OptimConfig& cfg, int64_t step);

// AdamW with decoupled weight decay. Moments are keyed by parameter order.
class AdamW {
public:
    AdamW(OptimConfig cfg, const ParamStore& params);

    // One update from the accumulated grads; increments the step counter.
    void step(const ParamStore& params);

    int64_t step_count() const { return step_; }
    const OptimConfig& config() const { return cfg_; }
    double last_lr() const { return last_lr_; }

    // Exposed for exact training resume.
    std::vector<Tensor>& first_moments() { return m_; }
    std::vector<Tensor>& second_moments() { return v_; }
    void set_step_count(int64_t s) { step_ = s; }

private:
    OptimConfig cfg_;
    int64_t step_ = 0;
    double last_lr_ = 0.0;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
};

// Gaussian init with the given stddev.
Tensor randn_init(Rng& rng, const std::vector<int>& shape, double stddev);

}  // namespace terragen
