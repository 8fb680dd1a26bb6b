#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmict/autodiff.hpp"

namespace mmict {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// First/second moment buffers, keyed by parameter name.
struct AdamState {
    std::map<std::string, Tensor> m;
    std::map<std::string, Tensor> v;
    long step_count = 0;
};

// One bias-corrected Adam update over all unfrozen parameters. t is the
// 1-based step index used for bias correction.
inline void adam_step(std::vector<Parameter*>& params, AdamState& state, const AdamConfig& cfg,
                      long t) {
    if (t < 1) throw std::invalid_argument("adam_step: t must be >= 1");
    double bc1 = 1.0 - std::pow(cfg.beta1, double(t));
    double bc2 = 1.0 - std::pow(cfg.beta2, double(t));
    for (Parameter* p : params) {
        if (p->frozen) continue;
        if (!p->grad.all_finite())
            throw std::runtime_error("gradient overflow in parameter '" + p->name + "'");
        auto [mit, minserted] = state.m.try_emplace(p->name, p->value.rows, p->value.cols);
        auto [vit, vinserted] = state.v.try_emplace(p->name, p->value.rows, p->value.cols);
        Tensor& m = mit->second;
        Tensor& v = vit->second;
        for (size_t i = 0; i < p->value.data.size(); ++i) {
            double g = p->grad.data[i];
            m.data[i] = cfg.beta1 * m.data[i] + (1.0 - cfg.beta1) * g;
            v.data[i] = cfg.beta2 * v.data[i] + (1.0 - cfg.beta2) * g * g;
            double mhat = m.data[i] / bc1;
            double vhat = v.data[i] / bc2;
            p->value.data[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
    state.step_count = t;
}

// Scales all gradients so their global L2 norm is at most max_norm.
// Returns the pre-clip norm.
inline double clip_grad_norm(std::vector<Parameter*>& params, double max_norm = 2.0) {
    double sq = 0.0;
    for (Parameter* p : params) {
        if (p->frozen) continue;
        for (double g : p->grad.data) sq += g * g;
    }
    double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        double s = max_norm / norm;
        for (Parameter* p : params) {
            if (p->frozen) continue;
            p->grad.scale(s);
        }
    }
    return norm;
}

enum class ScheduleKind { LinearWarmup, Constant };

inline ScheduleKind schedule_kind_from_string(const std::string& s) {
    if (s == "linear_warmup") return ScheduleKind::LinearWarmup;
    if (s == "constant") return ScheduleKind::Constant;
    throw std::invalid_argument("unknown schedule kind '" + s + "'");
}

// linear_warmup: 0 -> base_lr over warmup_steps, then linear decay to 0 at
// total_steps. constant: base_lr everywhere.
inline double lr_schedule(ScheduleKind kind, double base_lr, long warmup_steps, long total_steps,
                          long step) {
    if (step < 0) throw std::invalid_argument("lr_schedule: step must be >= 0");
    if (kind == ScheduleKind::Constant) return base_lr;
    if (warmup_steps > total_steps)
        throw std::invalid_argument("lr_schedule: warmup_steps exceeds total_steps");
    if (warmup_steps > 0 && step <= warmup_steps)
        return base_lr * double(step) / double(warmup_steps);
    if (step >= total_steps) return 0.0;
    return base_lr * double(total_steps - step) / double(total_steps - warmup_steps);
}

// Central-difference gradient check. loss_fn must rebuild the graph from
// the parameters' current values and be deterministic. Returns the max
// relative error over all unfrozen parameter entries.
inline double finite_difference_check(const std::function<Var()>& loss_fn,
                                      std::vector<Parameter*>& params, double eps = 1e-5) {
    for (Parameter* p : params) p->zero_grad();
    backward(loss_fn());
    std::map<std::string, Tensor> analytic;
    for (Parameter* p : params) analytic.emplace(p->name, p->grad);

    double max_rel = 0.0;
    for (Parameter* p : params) {
        if (p->frozen) continue;
        const Tensor& an = analytic.at(p->name);
        for (size_t i = 0; i < p->value.data.size(); ++i) {
            double orig = p->value.data[i];
            p->value.data[i] = orig + eps;
            double up = loss_fn()->value.at(0, 0);
            p->value.data[i] = orig - eps;
            double down = loss_fn()->value.at(0, 0);
            p->value.data[i] = orig;
            double fd = (up - down) / (2.0 * eps);
            double denom = std::max({std::abs(fd), std::abs(an.data[i]), 1.0});
            max_rel = std::max(max_rel, std::abs(fd - an.data[i]) / denom);
        }
    }
    return max_rel;
}

}  // namespace mmict
