#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "archdiff/tape.hpp"
#include "archdiff/tensor.hpp"

namespace archdiff {

// Named trainable parameters. std::map keeps iteration order stable so
// optimizer sweeps and checkpoints are deterministic.
struct ParamMap {
    std::map<std::string, VarPtr> entries;

    VarPtr add(const std::string& name, Tensor init);
    VarPtr at(const std::string& name) const;
    void zero_grad();
    std::size_t count() const { return entries.size(); }
    // Deep copy; requires_grad=false gives frozen eval weights safe to share
    // with per-thread graphs.
    ParamMap clone(bool requires_grad) const;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::int64_t step = 0;
    std::map<std::string, Tensor> m;
    std::map<std::string, Tensor> v;
};

struct StepReport {
    bool skipped = false;      // non-finite gradients: update skipped
    double grad_norm = 0.0;    // global L2 norm before clipping
};

// Scales all gradients by max_norm/norm when the global L2 norm exceeds
// max_norm. Returns the pre-clip norm. Applying twice equals applying once.
double clip_global_norm(const std::vector<Tensor*>& grads, double max_norm);

// One Adam update with bias correction over every entry of `params`,
// reading gradients from the Var nodes. lr_scale multiplies the base lr
// (warmup schedules). Gradients are left untouched; callers zero them.
StepReport adam_step(ParamMap& params, const AdamConfig& cfg, AdamState& state,
                     double clip_max_norm, double lr_scale = 1.0);

// Exponential moving average of parameters, used as sampling weights.
// Effective decay ramps in as min(decay, (1+n)/(10+n)) so early shadows
// track the raw weights instead of the random init.
struct Ema {
    double decay = 0.999;
    std::int64_t updates = 0;
    std::map<std::string, Tensor> shadow;

    void init_from(const ParamMap& params);
    void update(const ParamMap& params);
    ParamMap snapshot(bool requires_grad) const;
};

}  // namespace archdiff
