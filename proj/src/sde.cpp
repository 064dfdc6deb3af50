#include "archdiff/sde.hpp"

#include <cmath>

#include "archdiff/errors.hpp"

namespace archdiff {

void VeSdeConfig::check() const {
    if (!(0.0 < sigma_min && sigma_min < sigma_max)) {
        throw ConfigError("sde: need 0 < sigma_min < sigma_max");
    }
    if (num_steps < 1) throw ConfigError("sde: num_steps must be >= 1");
    if (!(0.0 < eps && eps < 1.0)) throw ConfigError("sde: eps must be in (0, 1)");
}

double marginal_std(const VeSdeConfig& cfg, double t) {
    if (t < 0.0 || t > 1.0) throw UsageError("marginal_std: t outside [0, 1]");
    return cfg.sigma_min * std::pow(cfg.sigma_max / cfg.sigma_min, t);
}

double diffusion_coeff(const VeSdeConfig& cfg, double t) {
    if (t < 0.0 || t > 1.0) throw UsageError("diffusion_coeff: t outside [0, 1]");
    const double ratio = cfg.sigma_max / cfg.sigma_min;
    return cfg.sigma_min * std::pow(ratio, t) * std::sqrt(2.0 * std::log(ratio));
}

Perturbed perturb(const VeSdeConfig& cfg, const ContinuousArchitecture& a0, double t, Rng& rng) {
    if (!(t > 0.0 && t <= 1.0)) throw UsageError("perturb: t outside (0, 1]");
    const double sigma = marginal_std(cfg, t);
    Perturbed out;
    out.a_t = a0;
    out.a_t.t = t;
    out.z_v = Tensor(a0.v.rows, a0.v.cols);
    out.z_e = Tensor(a0.e.rows, a0.e.cols);
    for (std::size_t i = 0; i < out.z_v.numel(); ++i) {
        out.z_v.data[i] = rng.normal();
        out.a_t.v.data[i] += sigma * out.z_v.data[i];
    }
    for (int i = 0; i < a0.e.rows; ++i) {
        for (int j = i + 1; j < a0.e.cols; ++j) {
            const double z = rng.normal();
            out.z_e.at(i, j) = z;
            out.a_t.e.at(i, j) += sigma * z;
        }
    }
    return out;
}

ContinuousArchitecture prior_sample(const VeSdeConfig& cfg, const SpacePtr& space, Rng& rng) {
    ContinuousArchitecture a;
    a.space = space;
    a.t = 1.0;
    a.v = Tensor(space->num_nodes, space->num_ops());
    a.e = Tensor(space->num_nodes, space->num_nodes);
    for (double& v : a.v.data) v = cfg.sigma_max * rng.normal();
    for (int i = 0; i < a.e.rows; ++i)
        for (int j = i + 1; j < a.e.cols; ++j) a.e.at(i, j) = cfg.sigma_max * rng.normal();
    return a;
}

VarPtr dsm_loss(Tape& tape, const VeSdeConfig& cfg, const VarPtr& score_v, const VarPtr& score_e,
                const Perturbed& p, double t) {
    if (!(t > 0.0 && t <= 1.0)) throw UsageError("dsm_loss: t outside (0, 1]");
    if (score_v->value.rows != p.z_v.rows || score_v->value.cols != p.z_v.cols ||
        score_e->value.rows != p.z_e.rows || score_e->value.cols != p.z_e.cols) {
        throw DimensionError("dsm_loss: score shapes do not match state");
    }
    const double sigma = marginal_std(cfg, t);
    const int n = p.z_e.rows;
    const double count =
        static_cast<double>(p.z_v.numel()) + static_cast<double>(n) * (n - 1) / 2.0;

    auto rv = tape.add_const(tape.scale(score_v, sigma), p.z_v);
    auto re = tape.add_const(tape.scale(score_e, sigma), p.z_e);
    auto sq = tape.add(tape.sum_all(tape.mul(rv, rv)), tape.sum_all(tape.mul(re, re)));
    return tape.scale(sq, 1.0 / count);
}

}  // namespace archdiff
