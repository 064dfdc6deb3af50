#pragma once

#include <utility>

#include "archdiff/archspace.hpp"
#include "archdiff/rng.hpp"
#include "archdiff/tape.hpp"

namespace archdiff {

// Variance-exploding SDE: zero drift, geometric noise scale from sigma_min
// at t=0 to sigma_max at t=1. Transition kernel is N(A_0, sigma_t^2 I).
struct VeSdeConfig {
    double sigma_min = 0.1;
    double sigma_max = 5.0;
    int num_steps = 1000;
    double eps = 1e-5;

    void check() const;
};

double marginal_std(const VeSdeConfig& cfg, double t);
double diffusion_coeff(const VeSdeConfig& cfg, double t);

struct Perturbed {
    ContinuousArchitecture a_t;
    Tensor z_v;  // noise drawn for v
    Tensor z_e;  // noise drawn for the strict upper triangle of e (rest zero)
};

// a_t = a0 + sigma_t * z applied to v and the strict upper triangle of e.
Perturbed perturb(const VeSdeConfig& cfg, const ContinuousArchitecture& a0, double t, Rng& rng);

// State at t=1: entries ~ N(0, sigma_max^2) on v and strict upper e.
ContinuousArchitecture prior_sample(const VeSdeConfig& cfg, const SpacePtr& space, Rng& rng);

// Denoising score-matching loss with lambda(t) = sigma_t^2:
//   mean over perturbed entries of (sigma_t * score_pred + z)^2.
// score_v/score_e are tape nodes so the loss backpropagates into the net.
VarPtr dsm_loss(Tape& tape, const VeSdeConfig& cfg, const VarPtr& score_v, const VarPtr& score_e,
                const Perturbed& p, double t);

}  // namespace archdiff
