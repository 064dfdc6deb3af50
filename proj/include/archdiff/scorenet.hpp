#pragma once

#include <string>
#include <vector>

#include "archdiff/archspace.hpp"
#include "archdiff/optim.hpp"
#include "archdiff/sde.hpp"
#include "archdiff/tape.hpp"

namespace archdiff {

// Masked-transformer score network s_theta(A_t, t). Nodes are embedded as
// Emb_ops(v_i) + Emb_pos(i) + Emb_time(t); L attention blocks run with an
// additive mask derived from the adjacency (0 on edges and the diagonal,
// -1e9 elsewhere); the blocks use no layer norm and no residuals. Heads:
// a per-node MLP for the v-score and a pairwise bilinear gate/bias head
// that is affine in e_t for the e-score. Raw outputs are scaled by
// 1/sigma_t so the denoising regression target is unit-scale.
struct ScoreNetConfig {
    int num_blocks = 12;
    int num_heads = 8;
    int model_dim = 64;
    int ffn_dim = 128;
    double dropout = 0.1;
    bool use_pos_emb = true;

    // training (warmup then constant lr, global-norm clipping, EMA weights)
    double lr = 2e-5;
    int batch_size = 256;
    int warmup = 1000;
    double grad_clip = 1.0;
    double ema_decay = 0.999;
    int train_steps = 100000;

    static ScoreNetConfig paper();
    static ScoreNetConfig desk();
    void check() const;
};

// M_ij = 0 where e_ij = 1, -1e9 where e_ij = 0; the diagonal is treated as
// e_ii = 1 so a node always attends to itself.
Tensor build_mask(const Tensor& e_binary);

struct ScorePair {
    VarPtr v;
    VarPtr e;
};

class ScoreNet {
  public:
    ScoreNet(SpacePtr space, ScoreNetConfig cfg, VeSdeConfig sde, Rng init_rng);
    ScoreNet(SpacePtr space, ScoreNetConfig cfg, VeSdeConfig sde, ParamMap params);

    const SpacePtr& space() const { return space_; }
    const ScoreNetConfig& config() const { return cfg_; }
    const VeSdeConfig& sde() const { return sde_; }
    ParamMap& params() { return params_; }
    const ParamMap& params() const { return params_; }

    // H^0, one row per node
    VarPtr embed(Tape& tape, const VarPtr& v_in, double t) const;

    // Full score; mask comes from the space template or the current e_t.
    // train_mode enables dropout, which draws from rng.
    ScorePair forward(Tape& tape, const VarPtr& v_in, const VarPtr& e_in, double t,
                      const Tensor& mask, bool train_mode = false, Rng* rng = nullptr) const;

    // Eval-mode convenience on plain tensors.
    std::pair<Tensor, Tensor> score(const ContinuousArchitecture& a_t, double t,
                                    const Tensor& mask) const;

    Tensor sampling_mask(const ContinuousArchitecture& a_t) const;

    // Frozen deep copy safe to use from another thread.
    ScoreNet clone_eval() const;

    void save(const std::string& path) const;
    static ScoreNet load(const std::string& path);

  private:
    void init_params(Rng& rng);

    SpacePtr space_;
    ScoreNetConfig cfg_;
    VeSdeConfig sde_;
    ParamMap params_;
};

struct ScoreTrainResult {
    ScoreNet net;                    // EMA weights, ready for sampling
    std::vector<double> loss_curve;  // one entry per step
};

// Denoising score-matching training: per step sample a batch with
// replacement, t ~ U(eps, 1], perturb, regress, Adam + clip + EMA.
ScoreTrainResult train_scorenet(const SpacePtr& space, const std::vector<Architecture>& dataset,
                                const ScoreNetConfig& cfg, const VeSdeConfig& sde, Rng rng);

}  // namespace archdiff
