#include "terragen/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace terragen {

Var ParamStore::add(const std::string& name, Tensor init) {
    if (index_.count(name)) throw std::invalid_argument("ParamStore: duplicate parameter " + name);
    Var v = make_leaf(std::move(init), true);
    index_[name] = items_.size();
    items_.push_back({name, v});
    return v;
}

Var ParamStore::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("ParamStore: unknown parameter " + name);
    return items_[it->second].second;
}

void ParamStore::zero_grad() {
    for (auto& [name, v] : items_) {
        if (v->has_grad()) {
            std::fill(v->grad.data.begin(), v->grad.data.end(), 0.0);
        }
    }
}

int64_t ParamStore::total_scalars() const {
    int64_t n = 0;
    for (const auto& [name, v] : items_) n += v->value.numel();
    return n;
}

double lr_schedule(const OptimConfig& cfg, int64_t step) {
    if (step < 0 || step > cfg.total_steps) {
        throw std::invalid_argument("lr_schedule: step " + std::to_string(step) + " outside [0, total]");
    }
    if (cfg.warmup_steps > 0 && step < cfg.warmup_steps) {
        return cfg.lr_peak * (static_cast<double>(step) / static_cast<double>(cfg.warmup_steps));
    }
    int64_t span = cfg.total_steps - cfg.warmup_steps;
    if (span <= 0) return cfg.lr_peak;
    double t = static_cast<double>(step - cfg.warmup_steps) / static_cast<double>(span);
    return cfg.lr_min + 0.5 * (cfg.lr_peak - cfg.lr_min) * (1.0 + std::cos(M_PI * t));
}

AdamW::AdamW(OptimConfig cfg, const ParamStore& params) : cfg_(cfg) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const auto& [name, p] : params.items()) {
        m_.push_back(Tensor::zeros(p->value.shape));
        v_.push_back(Tensor::zeros(p->value.shape));
    }
}

void AdamW::step(const ParamStore& params) {
    if (step_ >= cfg_.total_steps) {
        throw std::runtime_error("AdamW: step " + std::to_string(step_) + " >= total_steps");
    }
    if (params.size() != m_.size()) throw std::invalid_argument("AdamW: parameter set changed");
    double lr = lr_schedule(cfg_, step_);
    last_lr_ = lr;
    double t = static_cast<double>(step_ + 1);
    double bc1 = 1.0 - std::pow(cfg_.beta1, t);
    double bc2 = 1.0 - std::pow(cfg_.beta2, t);
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Var p = params.items()[pi].second;
        if (!p->value.same_shape(m_[pi])) throw std::invalid_argument("AdamW: moment shape mismatch");
        const Tensor& g = p->has_grad() ? p->grad : (p->grad = Tensor::zeros(p->value.shape));
        double* pm = m_[pi].data.data();
        double* pv = v_[pi].data.data();
        double* pp = p->value.data.data();
        const double* pg = g.data.data();
        int64_t n = p->value.numel();
        for (int64_t i = 0; i < n; ++i) {
            pm[i] = cfg_.beta1 * pm[i] + (1.0 - cfg_.beta1) * pg[i];
            pv[i] = cfg_.beta2 * pv[i] + (1.0 - cfg_.beta2) * pg[i] * pg[i];
            double mhat = pm[i] / bc1;
            double vhat = pv[i] / bc2;
            pp[i] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * pp[i]);
        }
        p->value.check_finite("adamw_step(" + params.items()[pi].first + ")");
    }
    ++step_;
}

Tensor randn_init(Rng& rng, const std::vector<int>& shape, double stddev) {
    Tensor t = Tensor::zeros(shape);
    for (double& v : t.data) v = rng.normal() * stddev;
    return t;
}

}  // namespace terragen
