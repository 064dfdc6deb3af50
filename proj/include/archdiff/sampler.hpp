#pragma once

#include <optional>
#include <vector>

#include "archdiff/archspace.hpp"
#include "archdiff/predictor.hpp"
#include "archdiff/scorenet.hpp"

namespace archdiff {

struct GuidanceConfig {
    enum class Mode { kLogProb, kValue, kGaussian };

    double k = 1.0;       // guidance scale; constant over t
    Mode mode = Mode::kLogProb;
    double target = 1.0;  // y* for the gaussian mode

    void check() const;
};

GuidanceConfig::Mode guidance_mode_from_string(const std::string& s);
std::string guidance_mode_to_string(GuidanceConfig::Mode m);

struct SamplerConfig {
    int num_steps = 1000;
    bool corrector = false;
    double corrector_snr = 0.16;
    int batch = 16;   // number of chains
    int threads = 1;

    void check() const;
};

// One Euler-Maruyama step of the reverse-time VE SDE (zero drift):
//   a_{t-dt} = a_t + g_t^2 * score * dt + g_t * sqrt(dt) * z.
// Noise is drawn for v and the strict upper triangle of e; a null rng is
// the deterministic test hook (z = 0).
ContinuousArchitecture reverse_step(const ContinuousArchitecture& a_t, double t, double dt,
                                    const Tensor& score_v, const Tensor& score_e, double g_t,
                                    Rng* rng);

// One Langevin correction with step size eps_L = 2 (snr ||z|| / ||score||)^2;
// no-op when the score vanishes.
ContinuousArchitecture corrector_step(const ContinuousArchitecture& a_t, const Tensor& score_v,
                                      const Tensor& score_e, double snr, Rng& rng);

// A predictor attached to the reverse drift with a combination weight;
// dataset-aware members carry their conditioning dataset.
struct GuidedPredictor {
    const Predictor* model = nullptr;
    double weight = 1.0;
    const TaskDataset* dataset = nullptr;
};

struct GeneratedSample {
    ContinuousArchitecture state;       // at t = eps
    int chain = 0;
    std::optional<double> pred_y;       // predictor value at the end, when guided
};

// Unconditional reverse-diffusion sampling; chain i uses rng.substream(i),
// so results are deterministic for any thread count.
std::vector<GeneratedSample> sample_batch(const ScoreNet& net, const SamplerConfig& cfg, Rng rng);

// Predictor-guided sampling: the drift uses
//   score + k * sum_j w_j * grad_{A_t} G_j(A_t, t)
// where G is log(y_hat), y_hat, or the Gaussian log-likelihood toward the
// target, per mode. k = 0 is bit-identical to sample_batch.
std::vector<GeneratedSample> guided_sample_batch(const ScoreNet& net,
                                                 const std::vector<GuidedPredictor>& predictors,
                                                 const GuidanceConfig& guidance,
                                                 const SamplerConfig& cfg, Rng rng);

}  // namespace archdiff
