#include "archdiff/bo.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "archdiff/errors.hpp"

namespace archdiff {

namespace {

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }
double norm_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * 3.141592653589793); }

long long now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

}  // namespace

AcqKind acq_from_string(const std::string& s) {
    if (s == "pi") return AcqKind::kPI;
    if (s == "ei") return AcqKind::kEI;
    if (s == "its") return AcqKind::kITS;
    if (s == "ucb") return AcqKind::kUCB;
    throw ConfigError("unknown acquisition: " + s);
}

std::string acq_to_string(AcqKind k) {
    switch (k) {
        case AcqKind::kPI: return "pi";
        case AcqKind::kEI: return "ei";
        case AcqKind::kITS: return "its";
        case AcqKind::kUCB: return "ucb";
    }
    throw ConfigError("bad acquisition kind");
}

AoStrategy strategy_from_string(const std::string& s) {
    if (s == "random") return AoStrategy::kRandom;
    if (s == "mutation") return AoStrategy::kMutation;
    if (s == "mutation+random") return AoStrategy::kMutationRandom;
    if (s == "guided") return AoStrategy::kGuided;
    throw ConfigError("unknown strategy: " + s);
}

std::string strategy_to_string(AoStrategy s) {
    switch (s) {
        case AoStrategy::kRandom: return "random";
        case AoStrategy::kMutation: return "mutation";
        case AoStrategy::kMutationRandom: return "mutation+random";
        case AoStrategy::kGuided: return "guided";
    }
    throw ConfigError("bad strategy");
}

double acquisition(AcqKind kind, double mu, double sigma, double y_max, double beta, Rng& rng) {
    if (sigma < 0.0) throw UsageError("acquisition: sigma must be >= 0");
    switch (kind) {
        case AcqKind::kPI:
            if (sigma == 0.0) return mu > y_max ? 1.0 : 0.0;
            return norm_cdf((mu - y_max) / sigma);
        case AcqKind::kEI: {
            if (sigma == 0.0) return std::max(mu - y_max, 0.0);
            const double z = (mu - y_max) / sigma;
            return (mu - y_max) * norm_cdf(z) + sigma * norm_pdf(z);
        }
        case AcqKind::kITS:
            return mu + sigma * rng.normal();
        case AcqKind::kUCB:
            return mu + beta * sigma;
    }
    throw ConfigError("acquisition: unknown kind");
}

void Population::add(const Architecture& a, double y) {
    entries.emplace_back(a, y);
    keys.insert(canonical_key(a));
}

double Population::y_max() const {
    if (entries.empty()) throw UsageError("population: empty");
    double best = entries[0].second;
    for (const auto& [a, y] : entries) best = std::max(best, y);
    return best;
}

const Architecture& Population::best() const {
    if (entries.empty()) throw UsageError("population: empty");
    std::size_t best = 0;
    for (std::size_t i = 1; i < entries.size(); ++i) {
        if (entries[i].second > entries[best].second) best = i;
    }
    return entries[best].first;
}

BoConfig BoConfig::desk() {
    BoConfig cfg;
    cfg.surrogate = PredictorConfig::desk();
    cfg.surrogate.batch_size = 16;
    cfg.surrogate.train_steps = 400;
    cfg.surrogate.warmup = 50;
    cfg.fit = PredictorConfig::desk();
    cfg.fit.batch_size = 16;
    cfg.fit.train_steps = 600;
    cfg.fit.warmup = 50;
    cfg.sampler.num_steps = 300;
    cfg.guidance.mode = GuidanceConfig::Mode::kGaussian;
    cfg.guidance.k = 1.0;
    cfg.guidance.target = 1.0;
    return cfg;
}

void BoConfig::check() const {
    if (n0 < 1) throw ConfigError("bo: n0 must be >= 1");
    if (budget <= n0) throw ConfigError("bo: budget must exceed n0");
    if (candidates < 1) throw ConfigError("bo: candidates must be >= 1");
    if (ensemble < 2) throw ConfigError("bo: ensemble must be >= 2");
}

std::vector<Architecture> propose_candidates(AoStrategy strategy, const Population& population,
                                             int c, const SpacePtr& space, const BoConfig& cfg,
                                             const ScoreNet* scorenet, const VeSdeConfig& sde,
                                             Rng& rng) {
    if (strategy != AoStrategy::kRandom && population.entries.empty()) {
        throw UsageError("propose_candidates: strategy needs a nonempty population");
    }
    std::vector<Architecture> raw;
    switch (strategy) {
        case AoStrategy::kRandom:
            for (int i = 0; i < c; ++i) raw.push_back(random_arch(space, rng));
            break;
        case AoStrategy::kMutation: {
            const Architecture& best = population.best();
            for (int i = 0; i < c; ++i) raw.push_back(mutate(best, rng));
            break;
        }
        case AoStrategy::kMutationRandom: {
            const Architecture& best = population.best();
            const int mut = (c + 1) / 2;
            for (int i = 0; i < mut; ++i) raw.push_back(mutate(best, rng));
            for (int i = mut; i < c; ++i) raw.push_back(random_arch(space, rng));
            break;
        }
        case AoStrategy::kGuided: {
            if (scorenet == nullptr) {
                throw UsageError("propose_candidates: guided strategy needs a score network");
            }
            auto fit = gaussian_fit(space, population.entries, cfg.fit, sde, rng.substream(11));
            SamplerConfig sampler_cfg = cfg.sampler;
            sampler_cfg.batch = c;
            sampler_cfg.threads = cfg.threads;
            std::vector<GuidedPredictor> guides{GuidedPredictor{&fit.model, 1.0, nullptr}};
            auto samples = guided_sample_batch(*scorenet, guides, cfg.guidance, sampler_cfg,
                                               rng.substream(12));
            for (const auto& s : samples) {
                Architecture a = discretize(s.state, DiscretizeMode::kSnap);
                if (validate(a).valid) raw.push_back(std::move(a));
            }
            break;
        }
    }

    // drop duplicates of already-evaluated architectures, then top up with
    // uniform draws; always return exactly c
    std::vector<Architecture> out;
    auto push_unique = [&](const Architecture& a) {
        if (static_cast<int>(out.size()) >= c) return;
        if (population.contains(canonical_key(a))) return;
        out.push_back(a);
    };
    for (const auto& a : raw) push_unique(a);
    int attempts = 0;
    while (static_cast<int>(out.size()) < c && attempts < 200 * c) {
        push_unique(random_arch(space, rng));
        ++attempts;
    }
    while (static_cast<int>(out.size()) < c) {
        out.push_back(random_arch(space, rng));  // space exhausted: allow repeats
    }
    return out;
}

BoResult bo_loop(const SpacePtr& space, const OracleFn& h, const BoConfig& cfg,
                 const ScoreNet* scorenet, Rng rng) {
    cfg.check();
    const long long start_ms = now_ms();
    const VeSdeConfig sde = scorenet != nullptr ? scorenet->sde() : VeSdeConfig{};

    BoResult result;
    Rng init_rng = rng.substream(1);
    for (int i = 0; i < cfg.n0; ++i) {
        Architecture a = random_arch(space, init_rng);
        const double y = h(a);
        result.population.add(a, y);
        result.history.push_back(BoHistoryEntry{i, canonical_key(a), y,
                                                result.population.y_max(), now_ms() - start_ms});
    }

    for (int n = cfg.n0; n < cfg.budget; ++n) {
        Rng iter_rng = rng.substream(100 + static_cast<std::uint64_t>(n));
        auto ensemble = train_ensemble(space, result.population.entries, cfg.surrogate,
                                       cfg.ensemble, false, sde, iter_rng.substream(1),
                                       cfg.threads);
        Rng cand_rng = iter_rng.substream(2);
        auto candidates = propose_candidates(cfg.strategy, result.population, cfg.candidates,
                                             space, cfg, scorenet, sde, cand_rng);
        Rng acq_rng = iter_rng.substream(3);
        const double y_max = result.population.y_max();
        int best_idx = 0;
        double best_score = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            const auto stats = ensemble_stats(ensemble, candidates[i]);
            const double score =
                acquisition(cfg.acq, stats.mu, stats.sigma, y_max, cfg.beta, acq_rng);
            if (score > best_score) {
                best_score = score;
                best_idx = static_cast<int>(i);
            }
        }
        const Architecture& chosen = candidates[best_idx];
        const double y = h(chosen);
        result.population.add(chosen, y);
        result.history.push_back(BoHistoryEntry{n, canonical_key(chosen), y,
                                                result.population.y_max(), now_ms() - start_ms});
    }

    result.best = result.population.best();
    result.best_y = result.population.y_max();
    return result;
}

}  // namespace archdiff
