#include "archdiff/sampler.hpp"

#include <cmath>
#include <memory>

#include "archdiff/errors.hpp"
#include "archdiff/parallel.hpp"

namespace archdiff {

namespace {

void zero_structural(Tensor& e_like) {
    for (int i = 0; i < e_like.rows; ++i)
        for (int j = 0; j <= i && j < e_like.cols; ++j) e_like.at(i, j) = 0.0;
}

double state_norm(const Tensor& v, const Tensor& e) {
    double sq = frobenius_norm_sq(v);
    for (int i = 0; i < e.rows; ++i)
        for (int j = i + 1; j < e.cols; ++j) sq += e.at(i, j) * e.at(i, j);
    return std::sqrt(sq);
}

struct GuidanceGrad {
    Tensor v;
    Tensor e;
    double pred_y = 0.0;
};

// d/dA of the guidance objective at (a_t, t), restricted to the entries the
// diffusion perturbs.
GuidanceGrad guidance_gradient(const Predictor& model, const TaskDataset* dataset,
                               const ContinuousArchitecture& a_t, double t,
                               const GuidanceConfig& guidance) {
    Tape tape;
    auto v_in = make_leaf(a_t.v, true);
    auto e_in = make_leaf(a_t.e, true);
    auto yhat = model.predict_on_tape(tape, v_in, e_in, t, dataset);
    VarPtr objective;
    switch (guidance.mode) {
        case GuidanceConfig::Mode::kLogProb:
            objective = tape.log(yhat);
            break;
        case GuidanceConfig::Mode::kValue:
            objective = yhat;
            break;
        case GuidanceConfig::Mode::kGaussian: {
            // log N(y*; y_hat, sigma^2) up to an A-independent constant
            auto diff = tape.add_const(yhat, Tensor::scalar(-guidance.target));
            objective = tape.scale(tape.mul(diff, diff), -0.5 / model.sigma_sq());
            break;
        }
    }
    tape.backward(objective);
    GuidanceGrad g;
    g.v = v_in->grad;
    g.e = e_in->grad;
    zero_structural(g.e);
    g.pred_y = yhat->value.item();
    return g;
}

struct ChainContext {
    const ScoreNet* net = nullptr;
    const std::vector<GuidedPredictor>* predictors = nullptr;
    const GuidanceConfig* guidance = nullptr;
    bool guided = false;
};

GeneratedSample run_chain(const ChainContext& ctx, const SamplerConfig& cfg, int chain, Rng rng) {
    const auto& net = *ctx.net;
    const auto& sde = net.sde();
    const double dt = (1.0 - sde.eps) / static_cast<double>(cfg.num_steps);

    ContinuousArchitecture state = prior_sample(sde, net.space(), rng);

    for (int step = 0; step < cfg.num_steps; ++step) {
        const double t = 1.0 - static_cast<double>(step) * dt;
        const Tensor mask = net.sampling_mask(state);
        auto [score_v, score_e] = net.score(state, t, mask);

        if (ctx.guided && ctx.guidance->k != 0.0) {
            for (const auto& gp : *ctx.predictors) {
                auto grad = guidance_gradient(*gp.model, gp.dataset, state, t, *ctx.guidance);
                if (!grad.v.all_finite() || !grad.e.all_finite()) {
                    throw NumericError("guided sampling: non-finite guidance gradient at step " +
                                       std::to_string(step));
                }
                const double w = ctx.guidance->k * gp.weight;
                for (std::size_t i = 0; i < score_v.numel(); ++i)
                    score_v.data[i] += w * grad.v.data[i];
                for (std::size_t i = 0; i < score_e.numel(); ++i)
                    score_e.data[i] += w * grad.e.data[i];
            }
        }

        const double g = diffusion_coeff(sde, t);
        state = reverse_step(state, t, dt, score_v, score_e, g, &rng);

        if (cfg.corrector) {
            const double t_next = 1.0 - static_cast<double>(step + 1) * dt;
            const Tensor mask2 = net.sampling_mask(state);
            auto [cv, ce] = net.score(state, t_next, mask2);
            state = corrector_step(state, cv, ce, cfg.corrector_snr, rng);
            state.t = t_next;
        }
    }
    state.t = sde.eps;

    GeneratedSample out;
    out.state = std::move(state);
    out.chain = chain;
    if (ctx.guided && !ctx.predictors->empty()) {
        // final predictor value at eps (also filled when k = 0 is not guided)
        const auto& gp = ctx.predictors->front();
        out.pred_y = gp.model->predict(out.state, sde.eps, gp.dataset);
    }
    return out;
}

std::vector<GeneratedSample> run_batch(const ChainContext& ctx, const SamplerConfig& cfg,
                                       Rng rng) {
    cfg.check();
    std::vector<GeneratedSample> out(cfg.batch);

    // frozen per-thread copies: predictors' params are read concurrently
    // through cloned leaves, never through the training graph
    parallel_for(cfg.batch, cfg.threads, [&](int chain) {
        ScoreNet local = ctx.net->clone_eval();
        std::vector<Predictor> local_models;
        std::vector<GuidedPredictor> local_guided;
        if (ctx.guided) {
            local_models.reserve(ctx.predictors->size());
            for (const auto& gp : *ctx.predictors) {
                local_models.push_back(gp.model->clone_eval());
            }
            for (std::size_t i = 0; i < ctx.predictors->size(); ++i) {
                local_guided.push_back(GuidedPredictor{&local_models[i],
                                                       (*ctx.predictors)[i].weight,
                                                       (*ctx.predictors)[i].dataset});
            }
        }
        ChainContext local_ctx = ctx;
        local_ctx.net = &local;
        local_ctx.predictors = &local_guided;
        out[chain] = run_chain(local_ctx, cfg, chain, rng.substream(static_cast<std::uint64_t>(chain)));
    });
    return out;
}

}  // namespace

void GuidanceConfig::check() const {
    if (k < 0.0) throw ConfigError("guidance: k must be >= 0");
    if (!std::isfinite(k) || !std::isfinite(target)) throw ConfigError("guidance: non-finite value");
}

GuidanceConfig::Mode guidance_mode_from_string(const std::string& s) {
    if (s == "log_prob") return GuidanceConfig::Mode::kLogProb;
    if (s == "value") return GuidanceConfig::Mode::kValue;
    if (s == "gaussian") return GuidanceConfig::Mode::kGaussian;
    throw ConfigError("guidance: unknown mode " + s);
}

std::string guidance_mode_to_string(GuidanceConfig::Mode m) {
    switch (m) {
        case GuidanceConfig::Mode::kLogProb: return "log_prob";
        case GuidanceConfig::Mode::kValue: return "value";
        case GuidanceConfig::Mode::kGaussian: return "gaussian";
    }
    throw ConfigError("guidance: bad mode");
}

void SamplerConfig::check() const {
    if (num_steps < 1) throw ConfigError("sampler: num_steps must be >= 1");
    if (batch < 1) throw ConfigError("sampler: batch must be >= 1");
    if (corrector_snr <= 0.0) throw ConfigError("sampler: corrector_snr must be positive");
}

ContinuousArchitecture reverse_step(const ContinuousArchitecture& a_t, double t, double dt,
                                    const Tensor& score_v, const Tensor& score_e, double g_t,
                                    Rng* rng) {
    if (dt <= 0.0) throw UsageError("reverse_step: dt must be positive");
    if (!score_v.same_shape(a_t.v) || !score_e.same_shape(a_t.e)) {
        throw DimensionError("reverse_step: score shape mismatch");
    }
    ContinuousArchitecture next = a_t;
    next.t = t - dt;
    const double drift = g_t * g_t * dt;
    const double noise = g_t * std::sqrt(dt);
    for (std::size_t i = 0; i < next.v.numel(); ++i) {
        const double z = rng ? rng->normal() : 0.0;
        next.v.data[i] += drift * score_v.data[i] + noise * z;
    }
    for (int i = 0; i < next.e.rows; ++i) {
        for (int j = i + 1; j < next.e.cols; ++j) {
            const double z = rng ? rng->normal() : 0.0;
            next.e.at(i, j) += drift * score_e.at(i, j) + noise * z;
        }
    }
    return next;
}

ContinuousArchitecture corrector_step(const ContinuousArchitecture& a_t, const Tensor& score_v,
                                      const Tensor& score_e, double snr, Rng& rng) {
    if (snr <= 0.0) throw UsageError("corrector_step: snr must be positive");
    const double score_norm = state_norm(score_v, score_e);
    if (score_norm == 0.0) return a_t;

    ContinuousArchitecture next = a_t;
    Tensor z_v(a_t.v.rows, a_t.v.cols);
    Tensor z_e(a_t.e.rows, a_t.e.cols);
    for (double& z : z_v.data) z = rng.normal();
    for (int i = 0; i < z_e.rows; ++i)
        for (int j = i + 1; j < z_e.cols; ++j) z_e.at(i, j) = rng.normal();

    const double z_norm = state_norm(z_v, z_e);
    const double eps_l = 2.0 * std::pow(snr * z_norm / score_norm, 2);
    const double noise = std::sqrt(2.0 * eps_l);
    for (std::size_t i = 0; i < next.v.numel(); ++i) {
        next.v.data[i] += eps_l * score_v.data[i] + noise * z_v.data[i];
    }
    for (int i = 0; i < next.e.rows; ++i) {
        for (int j = i + 1; j < next.e.cols; ++j) {
            next.e.at(i, j) += eps_l * score_e.at(i, j) + noise * z_e.at(i, j);
        }
    }
    return next;
}

std::vector<GeneratedSample> sample_batch(const ScoreNet& net, const SamplerConfig& cfg, Rng rng) {
    ChainContext ctx;
    ctx.net = &net;
    ctx.guided = false;
    return run_batch(ctx, cfg, rng);
}

std::vector<GeneratedSample> guided_sample_batch(const ScoreNet& net,
                                                 const std::vector<GuidedPredictor>& predictors,
                                                 const GuidanceConfig& guidance,
                                                 const SamplerConfig& cfg, Rng rng) {
    guidance.check();
    for (const auto& gp : predictors) {
        if (gp.model == nullptr) throw UsageError("guided sampling: null predictor");
        if (!std::isfinite(gp.weight)) throw ConfigError("guided sampling: non-finite weight");
    }
    ChainContext ctx;
    ctx.net = &net;
    ctx.predictors = &predictors;
    ctx.guidance = &guidance;
    ctx.guided = true;
    return run_batch(ctx, cfg, rng);
}

}  // namespace archdiff
