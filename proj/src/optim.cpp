#include "archdiff/optim.hpp"

#include <cmath>

#include "archdiff/errors.hpp"

namespace archdiff {

VarPtr ParamMap::add(const std::string& name, Tensor init) {
    if (entries.count(name)) throw UsageError("param already exists: " + name);
    auto v = make_leaf(std::move(init), true);
    entries[name] = v;
    return v;
}

VarPtr ParamMap::at(const std::string& name) const {
    auto it = entries.find(name);
    if (it == entries.end()) throw UsageError("unknown param: " + name);
    return it->second;
}

void ParamMap::zero_grad() {
    for (auto& [name, var] : entries) var->zero_grad();
}

ParamMap ParamMap::clone(bool requires_grad) const {
    ParamMap out;
    for (const auto& [name, var] : entries) {
        out.entries[name] = make_leaf(var->value, requires_grad);
    }
    return out;
}

double clip_global_norm(const std::vector<Tensor*>& grads, double max_norm) {
    if (max_norm <= 0.0) throw UsageError("clip_global_norm: max_norm must be positive");
    double sq = 0.0;
    for (const Tensor* g : grads) sq += frobenius_norm_sq(*g);
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
        const double s = max_norm / norm;
        for (Tensor* g : grads)
            for (double& v : g->data) v *= s;
    }
    return norm;
}

StepReport adam_step(ParamMap& params, const AdamConfig& cfg, AdamState& state,
                     double clip_max_norm, double lr_scale) {
    StepReport report;

    std::vector<Tensor*> grads;
    grads.reserve(params.entries.size());
    for (auto& [name, var] : params.entries) grads.push_back(&var->grad);

    for (const Tensor* g : grads) {
        if (!g->all_finite()) {
            report.skipped = true;
            return report;
        }
    }
    report.grad_norm = clip_global_norm(grads, clip_max_norm);

    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    const double lr = cfg.lr * lr_scale;

    for (auto& [name, var] : params.entries) {
        Tensor& m = state.m.try_emplace(name, Tensor(var->value.rows, var->value.cols)).first->second;
        Tensor& v = state.v.try_emplace(name, Tensor(var->value.rows, var->value.cols)).first->second;
        for (std::size_t i = 0; i < var->value.numel(); ++i) {
            const double g = var->grad.data[i];
            m.data[i] = cfg.beta1 * m.data[i] + (1.0 - cfg.beta1) * g;
            v.data[i] = cfg.beta2 * v.data[i] + (1.0 - cfg.beta2) * g * g;
            const double mhat = m.data[i] / bc1;
            const double vhat = v.data[i] / bc2;
            var->value.data[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
    return report;
}

void Ema::init_from(const ParamMap& params) {
    shadow.clear();
    updates = 0;
    for (const auto& [name, var] : params.entries) shadow[name] = var->value;
}

void Ema::update(const ParamMap& params) {
    updates += 1;
    const double d = std::min(decay, (1.0 + static_cast<double>(updates)) /
                                         (10.0 + static_cast<double>(updates)));
    for (const auto& [name, var] : params.entries) {
        Tensor& s = shadow.at(name);
        for (std::size_t i = 0; i < s.numel(); ++i) {
            s.data[i] = d * s.data[i] + (1.0 - d) * var->value.data[i];
        }
    }
}

ParamMap Ema::snapshot(bool requires_grad) const {
    ParamMap out;
    for (const auto& [name, t] : shadow) out.entries[name] = make_leaf(t, requires_grad);
    return out;
}

}  // namespace archdiff
