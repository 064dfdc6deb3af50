#pragma once

#include <functional>
#include <set>
#include <string>
#include <vector>

#include "archdiff/oracle.hpp"
#include "archdiff/predictor.hpp"
#include "archdiff/sampler.hpp"

namespace archdiff {

enum class AcqKind { kPI, kEI, kITS, kUCB };
enum class AoStrategy { kRandom, kMutation, kMutationRandom, kGuided };

AcqKind acq_from_string(const std::string& s);
std::string acq_to_string(AcqKind k);
AoStrategy strategy_from_string(const std::string& s);
std::string strategy_to_string(AoStrategy s);

// Ensemble-estimate acquisition functions:
//   PI  = Phi((mu - y_max) / sigma)
//   EI  = (mu - y_max) Phi(z) + sigma phi(z),  z = (mu - y_max) / sigma
//   ITS = draw from N(mu, sigma^2)
//   UCB = mu + beta sigma
// sigma = 0 limits: PI -> 1{mu > y_max}, EI -> max(mu - y_max, 0), ITS -> mu.
double acquisition(AcqKind kind, double mu, double sigma, double y_max, double beta, Rng& rng);

// Evaluated (architecture, y) pairs; grows by one per BO iteration.
struct Population {
    std::vector<LabeledArch> entries;
    std::set<std::string> keys;

    void add(const Architecture& a, double y);
    double y_max() const;
    const Architecture& best() const;
    bool contains(const std::string& key) const { return keys.count(key) > 0; }
};

struct BoConfig {
    int n0 = 10;          // initial uniform draws
    int budget = 40;      // total oracle evaluations N
    int candidates = 16;  // c per iteration
    AcqKind acq = AcqKind::kPI;
    double beta = 1.0;    // UCB only
    AoStrategy strategy = AoStrategy::kGuided;
    int ensemble = 5;     // M
    int threads = 1;

    PredictorConfig surrogate;   // ensemble members (MSE on the population)
    PredictorConfig fit;         // gaussian_fit model used for guidance
    SamplerConfig sampler;       // guided candidate generation
    GuidanceConfig guidance;     // gaussian mode toward target by default

    static BoConfig desk();
    void check() const;
};

// Candidate proposal per acquisition-optimization strategy. Candidates
// duplicating already-evaluated architectures are dropped and topped up
// with fresh uniform draws; the result always has exactly c entries.
std::vector<Architecture> propose_candidates(AoStrategy strategy, const Population& population,
                                             int c, const SpacePtr& space, const BoConfig& cfg,
                                             const ScoreNet* scorenet, const VeSdeConfig& sde,
                                             Rng& rng);

struct BoHistoryEntry {
    int iteration = 0;
    std::string chosen_key;
    double y = 0.0;
    double best_so_far = 0.0;
    long long wallclock_ms = 0;
};

struct BoResult {
    Architecture best;
    double best_y = 0.0;
    std::vector<BoHistoryEntry> history;  // one row per oracle evaluation
    Population population;
};

using OracleFn = std::function<double(const Architecture&)>;

// Ensemble-surrogate Bayesian optimization. Per iteration: train M fresh
// surrogates on the population, propose c candidates by the strategy,
// pick the acquisition argmax, evaluate it, grow the population. The
// guided strategy fits a Gaussian-likelihood predictor on the population
// and samples candidates through the reverse diffusion with its gradient.
BoResult bo_loop(const SpacePtr& space, const OracleFn& h, const BoConfig& cfg,
                 const ScoreNet* scorenet, Rng rng);

}  // namespace archdiff
