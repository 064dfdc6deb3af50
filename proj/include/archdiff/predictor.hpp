#pragma once

#include <string>
#include <utility>
#include <vector>

#include "archdiff/archspace.hpp"
#include "archdiff/optim.hpp"
#include "archdiff/sde.hpp"
#include "archdiff/tape.hpp"

namespace archdiff {

// Time-conditioned property predictor f_phi(y | A_t): a bidirectional
// directed-graph convolution encoder over the architecture plus an optional
// hierarchical mean-pooling dataset encoder, with a sigmoid-bounded head.
struct PredictorConfig {
    int num_layers = 4;
    int hidden = 144;
    int mlp_hidden = 32;
    int dataset_hidden = 56;
    int instances_per_class = 20;
    int feature_dim = 8;       // dataset instance feature dim (dataset-aware only)
    bool dataset_aware = false;

    double lr = 1e-3;
    int batch_size = 256;
    int warmup = 1000;
    double grad_clip = 1.0;
    int train_steps = 20000;

    static PredictorConfig paper();
    static PredictorConfig desk();
    void check() const;
};

// Plain task dataset: per-class lists of {1, feature_dim} instance rows.
struct TaskDataset {
    std::vector<std::vector<Tensor>> classes;

    void check(int instances_per_class) const;
};

// D^-1 (E + I) with D the out-degree-plus-one diagonal; rows sum to 1.
Tensor normalize_adjacency(const Tensor& e_binary);

// One bidirectional layer: 0.5*ReLU(Ehat H Wf) + 0.5*ReLU(Ehat^T H Wr).
VarPtr digcn_layer(Tape& tape, const VarPtr& ehat, const VarPtr& h, const VarPtr& w_fwd,
                   const VarPtr& w_rev);

class Predictor {
  public:
    Predictor(SpacePtr space, PredictorConfig cfg, VeSdeConfig sde, Rng init_rng);
    Predictor(SpacePtr space, PredictorConfig cfg, VeSdeConfig sde, ParamMap params);

    const SpacePtr& space() const { return space_; }
    const PredictorConfig& config() const { return cfg_; }
    const VeSdeConfig& sde() const { return sde_; }
    ParamMap& params() { return params_; }
    const ParamMap& params() const { return params_; }

    // Architecture latent z_A: DiGCN stack, mean-pool, MLP.
    VarPtr encode_arch(Tape& tape, const VarPtr& v_in, const VarPtr& e_in, double t) const;

    // Dataset latent z_D; exactly permutation invariant at both levels
    // (instances are reduced in a canonical order).
    VarPtr encode_dataset(Tape& tape, const TaskDataset& dataset) const;

    // y_hat in (0, 1); differentiable wrt v_in/e_in entries.
    VarPtr predict_on_tape(Tape& tape, const VarPtr& v_in, const VarPtr& e_in, double t,
                           const TaskDataset* dataset = nullptr) const;

    double predict(const ContinuousArchitecture& a_t, double t,
                   const TaskDataset* dataset = nullptr) const;

    double sigma_sq() const;  // exp(logvar) for the Gaussian likelihood

    Predictor clone_eval() const;
    void save(const std::string& path) const;
    static Predictor load(const std::string& path);

  private:
    void init_params(Rng& rng);

    SpacePtr space_;
    PredictorConfig cfg_;
    VeSdeConfig sde_;
    ParamMap params_;
};

using LabeledArch = std::pair<Architecture, double>;

struct PredictorTrainResult {
    Predictor model;
    std::vector<double> loss_curve;
};

// MSE training on (architecture, y) pairs with y in [0, 1]. noise_aware
// perturbs each example at fresh t ~ U(eps, 1]; otherwise t is pinned to
// eps. Dataset-aware models take one TaskDataset per example.
PredictorTrainResult train_predictor(const SpacePtr& space, const std::vector<LabeledArch>& population,
                                     const PredictorConfig& cfg, bool noise_aware,
                                     const VeSdeConfig& sde, Rng rng,
                                     const std::vector<const TaskDataset*>* datasets = nullptr);

// Gaussian-likelihood fit: jointly trains the mean head (noise-aware) and a
// single learned log-variance by minimizing the negative log likelihood.
PredictorTrainResult gaussian_fit(const SpacePtr& space, const std::vector<LabeledArch>& population,
                                  const PredictorConfig& cfg, const VeSdeConfig& sde, Rng rng);

struct PredictorEnsemble {
    std::vector<Predictor> members;
};

// M members trained from independent seed streams on the same population;
// members train on separate threads when threads > 1.
PredictorEnsemble train_ensemble(const SpacePtr& space, const std::vector<LabeledArch>& population,
                                 const PredictorConfig& cfg, int m, bool noise_aware,
                                 const VeSdeConfig& sde, Rng rng, int threads = 1);

struct EnsembleStats {
    double mu = 0.0;
    double sigma = 0.0;  // Bessel-corrected sample std
};

EnsembleStats stats_from_values(const std::vector<double>& values);
EnsembleStats ensemble_stats(const PredictorEnsemble& ensemble, const Architecture& a);

}  // namespace archdiff
