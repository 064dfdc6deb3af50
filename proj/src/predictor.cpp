#include "archdiff/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include <nlohmann/json.hpp>

#include "archdiff/checkpoint.hpp"
#include "archdiff/errors.hpp"
#include "archdiff/parallel.hpp"
#include "archdiff/timeemb.hpp"

namespace archdiff {

namespace {

using json = nlohmann::json;

constexpr double kHalfLog2Pi = 0.9189385332046727;  // 0.5 * log(2*pi)

Tensor normal_init(int r, int c, double std, Rng& rng) {
    Tensor t(r, c);
    for (double& v : t.data) v = std * rng.normal();
    return t;
}

// Order-canonical mean: sums each column in sorted-value order so the
// result is exactly invariant to row permutations.
Tensor canonical_mean_rows(const std::vector<const Tensor*>& rows) {
    const int dim = rows[0]->cols;
    Tensor out(1, dim);
    std::vector<double> column(rows.size());
    for (int j = 0; j < dim; ++j) {
        for (std::size_t i = 0; i < rows.size(); ++i) column[i] = rows[i]->at(0, j);
        std::sort(column.begin(), column.end());
        double s = 0.0;
        for (double v : column) s += v;
        out.at(0, j) = s / static_cast<double>(rows.size());
    }
    return out;
}

json predictor_config_json(const PredictorConfig& cfg, const VeSdeConfig& sde,
                           const std::string& space_name) {
    json j;
    j["kind"] = "predictor";
    j["space"] = space_name;
    j["num_layers"] = cfg.num_layers;
    j["hidden"] = cfg.hidden;
    j["mlp_hidden"] = cfg.mlp_hidden;
    j["dataset_hidden"] = cfg.dataset_hidden;
    j["instances_per_class"] = cfg.instances_per_class;
    j["feature_dim"] = cfg.feature_dim;
    j["dataset_aware"] = cfg.dataset_aware;
    j["lr"] = cfg.lr;
    j["batch_size"] = cfg.batch_size;
    j["warmup"] = cfg.warmup;
    j["grad_clip"] = cfg.grad_clip;
    j["train_steps"] = cfg.train_steps;
    j["sigma_min"] = sde.sigma_min;
    j["sigma_max"] = sde.sigma_max;
    j["num_steps"] = sde.num_steps;
    j["eps"] = sde.eps;
    return j;
}

struct TrainOptions {
    bool noise_aware = false;
    bool gaussian_nll = false;
};

PredictorTrainResult train_impl(const SpacePtr& space, const std::vector<LabeledArch>& population,
                                const PredictorConfig& cfg, const VeSdeConfig& sde, Rng rng,
                                const TrainOptions& opts,
                                const std::vector<const TaskDataset*>* datasets) {
    if (population.empty()) throw UsageError("train_predictor: empty population");
    if (opts.gaussian_nll && population.size() < 2) {
        throw UsageError("gaussian_fit: need at least two observations");
    }
    for (const auto& [arch, y] : population) {
        (void)arch;
        if (y < 0.0 || y > 1.0) throw UsageError("train_predictor: y outside [0, 1]");
    }
    if (cfg.dataset_aware) {
        if (datasets == nullptr || datasets->size() != population.size()) {
            throw UsageError("train_predictor: dataset-aware model needs one dataset per example");
        }
        for (const auto* d : *datasets) d->check(cfg.instances_per_class);
    }

    Rng init_rng = rng.substream(1);
    Rng batch_rng = rng.substream(2);
    Rng noise_rng = rng.substream(3);

    Predictor model(space, cfg, sde, init_rng);
    AdamConfig adam;
    adam.lr = cfg.lr;
    AdamState adam_state;

    const int batch = std::min<int>(cfg.batch_size, static_cast<int>(population.size()));
    std::vector<double> curve;
    curve.reserve(cfg.train_steps);

    for (int step = 0; step < cfg.train_steps; ++step) {
        Tape tape;
        VarPtr total;
        for (int b = 0; b < batch; ++b) {
            const int idx = batch_rng.uniform_int(static_cast<int>(population.size()));
            const auto& [arch, y] = population[idx];
            const double t =
                opts.noise_aware ? sde.eps + (1.0 - sde.eps) * noise_rng.uniform() : sde.eps;
            auto p = perturb(sde, to_continuous(arch), t, noise_rng);
            auto v_in = make_leaf(p.a_t.v, false);
            auto e_in = make_leaf(p.a_t.e, false);
            const TaskDataset* ds = cfg.dataset_aware ? (*datasets)[idx] : nullptr;
            auto yhat = model.predict_on_tape(tape, v_in, e_in, t, ds);
            auto diff = tape.add_const(yhat, Tensor::scalar(-y));
            auto sq = tape.mul(diff, diff);
            VarPtr item;
            if (opts.gaussian_nll) {
                auto s = model.params().at("logvar");
                auto prec = tape.exp(tape.scale(s, -1.0));
                item = tape.add_const(tape.add(tape.scale(s, 0.5), tape.scale(tape.mul(sq, prec), 0.5)),
                                      Tensor::scalar(kHalfLog2Pi));
            } else {
                item = sq;
            }
            total = total ? tape.add(total, item) : item;
        }
        auto loss = tape.scale(total, 1.0 / batch);
        model.params().zero_grad();
        tape.backward(loss);
        const double lr_scale =
            cfg.warmup > 0 ? std::min(1.0, static_cast<double>(step + 1) / cfg.warmup) : 1.0;
        adam_step(model.params(), adam, adam_state, cfg.grad_clip, lr_scale);
        curve.push_back(loss->value.item());
    }
    return PredictorTrainResult{std::move(model), std::move(curve)};
}

}  // namespace

PredictorConfig PredictorConfig::paper() { return PredictorConfig{}; }

PredictorConfig PredictorConfig::desk() {
    PredictorConfig cfg;
    cfg.num_layers = 2;
    cfg.hidden = 32;
    cfg.batch_size = 32;
    cfg.warmup = 100;
    cfg.train_steps = 2000;
    return cfg;
}

void PredictorConfig::check() const {
    if (num_layers < 1 || hidden < 1 || mlp_hidden < 1 || dataset_hidden < 1 ||
        instances_per_class < 1 || feature_dim < 1) {
        throw ConfigError("predictor: dimensions must be positive");
    }
}

void TaskDataset::check(int instances_per_class) const {
    if (classes.empty()) throw UsageError("task dataset: no classes");
    for (const auto& cls : classes) {
        if (cls.empty()) throw UsageError("task dataset: empty class");
        if (static_cast<int>(cls.size()) != instances_per_class) {
            throw UsageError("task dataset: class size != instances_per_class");
        }
        for (const auto& inst : cls) {
            if (inst.rows != 1 || inst.cols != classes[0][0].cols) {
                throw UsageError("task dataset: inconsistent instance shapes");
            }
        }
    }
}

Tensor normalize_adjacency(const Tensor& e_binary) {
    if (e_binary.rows != e_binary.cols) throw DimensionError("normalize_adjacency: not square");
    const int n = e_binary.rows;
    Tensor out(n, n);
    for (int i = 0; i < n; ++i) {
        double degree = 1.0;  // self-cycle
        for (int j = 0; j < n; ++j) degree += e_binary.at(i, j);
        for (int j = 0; j < n; ++j) out.at(i, j) = e_binary.at(i, j) / degree;
        out.at(i, i) += 1.0 / degree;
    }
    return out;
}

VarPtr digcn_layer(Tape& tape, const VarPtr& ehat, const VarPtr& h, const VarPtr& w_fwd,
                   const VarPtr& w_rev) {
    auto fwd = tape.relu(tape.matmul(tape.matmul(ehat, h), w_fwd));
    auto rev = tape.relu(tape.matmul(tape.matmul(tape.transpose(ehat), h), w_rev));
    return tape.scale(tape.add(fwd, rev), 0.5);
}

Predictor::Predictor(SpacePtr space, PredictorConfig cfg, VeSdeConfig sde, Rng init_rng)
    : space_(std::move(space)), cfg_(cfg), sde_(sde) {
    cfg_.check();
    sde_.check();
    init_params(init_rng);
}

Predictor::Predictor(SpacePtr space, PredictorConfig cfg, VeSdeConfig sde, ParamMap params)
    : space_(std::move(space)), cfg_(cfg), sde_(sde), params_(std::move(params)) {
    cfg_.check();
    sde_.check();
}

void Predictor::init_params(Rng& rng) {
    const int f = space_->num_ops();
    params_.add("time_w", normal_init(kTimeFeatureDim, f, 1.0 / std::sqrt(kTimeFeatureDim), rng));
    params_.add("time_b", Tensor(1, f));
    int in_dim = f;
    for (int l = 0; l < cfg_.num_layers; ++l) {
        const std::string name = "digcn" + std::to_string(l) + ".";
        params_.add(name + "w_fwd", normal_init(in_dim, cfg_.hidden, 1.0 / std::sqrt(in_dim), rng));
        params_.add(name + "w_rev", normal_init(in_dim, cfg_.hidden, 1.0 / std::sqrt(in_dim), rng));
        in_dim = cfg_.hidden;
    }
    params_.add("pool.w", normal_init(cfg_.hidden, cfg_.mlp_hidden, 1.0 / std::sqrt(cfg_.hidden), rng));
    params_.add("pool.b", Tensor(1, cfg_.mlp_hidden));
    if (cfg_.dataset_aware) {
        params_.add("dsenc.w", normal_init(cfg_.feature_dim, cfg_.dataset_hidden,
                                           1.0 / std::sqrt(cfg_.feature_dim), rng));
        params_.add("dsenc.b", Tensor(1, cfg_.dataset_hidden));
    }
    const int head_in = cfg_.mlp_hidden + (cfg_.dataset_aware ? cfg_.dataset_hidden : 0);
    params_.add("head.w1", normal_init(head_in, cfg_.mlp_hidden, 1.0 / std::sqrt(head_in), rng));
    params_.add("head.b1", Tensor(1, cfg_.mlp_hidden));
    params_.add("head.w2", normal_init(cfg_.mlp_hidden, 1, 1.0 / std::sqrt(cfg_.mlp_hidden), rng));
    params_.add("head.b2", Tensor(1, 1));
    params_.add("logvar", Tensor::full(1, 1, -3.0));
}

VarPtr Predictor::encode_arch(Tape& tape, const VarPtr& v_in, const VarPtr& e_in, double t) const {
    const int n = space_->num_nodes;
    if (v_in->value.rows != n || v_in->value.cols != space_->num_ops() ||
        e_in->value.rows != n || e_in->value.cols != n) {
        throw DimensionError("predictor: input shapes do not match space");
    }
    // row-normalized adjacency, differentiable in e; the degree uses |e| so
    // perturbed states keep positive row sums
    auto e_plus_i = tape.add_const(e_in, Tensor::identity(n));
    auto degree = tape.matmul(tape.abs(e_plus_i), constant(Tensor::full(n, 1, 1.0)));
    auto ehat = tape.matmul(tape.make_diag(tape.recip(degree)), e_plus_i);

    auto tf = constant(time_features(t));
    auto time_row = tape.add_rowvec(tape.matmul(tf, params_.at("time_w")), params_.at("time_b"));
    auto h = tape.add(v_in, tape.matmul(constant(Tensor::full(n, 1, 1.0)), time_row));

    for (int l = 0; l < cfg_.num_layers; ++l) {
        const std::string name = "digcn" + std::to_string(l) + ".";
        h = digcn_layer(tape, ehat, h, params_.at(name + "w_fwd"), params_.at(name + "w_rev"));
    }
    auto pooled = tape.matmul(constant(Tensor::full(1, n, 1.0 / n)), h);
    return tape.swish(tape.add_rowvec(tape.matmul(pooled, params_.at("pool.w")),
                                      params_.at("pool.b")));
}

VarPtr Predictor::encode_dataset(Tape& tape, const TaskDataset& dataset) const {
    if (!cfg_.dataset_aware) throw UsageError("predictor: model is not dataset-aware");
    dataset.check(cfg_.instances_per_class);
    if (dataset.classes[0][0].cols != cfg_.feature_dim) {
        throw DimensionError("predictor: dataset feature dim mismatch");
    }
    std::vector<Tensor> prototypes;
    prototypes.reserve(dataset.classes.size());
    for (const auto& cls : dataset.classes) {
        std::vector<const Tensor*> rows;
        rows.reserve(cls.size());
        for (const auto& inst : cls) rows.push_back(&inst);
        prototypes.push_back(canonical_mean_rows(rows));
    }
    std::vector<const Tensor*> proto_rows;
    proto_rows.reserve(prototypes.size());
    for (const auto& p : prototypes) proto_rows.push_back(&p);
    const Tensor pooled = canonical_mean_rows(proto_rows);
    return tape.swish(tape.add_rowvec(tape.matmul(constant(pooled), params_.at("dsenc.w")),
                                      params_.at("dsenc.b")));
}

VarPtr Predictor::predict_on_tape(Tape& tape, const VarPtr& v_in, const VarPtr& e_in, double t,
                                  const TaskDataset* dataset) const {
    if (cfg_.dataset_aware != (dataset != nullptr)) {
        throw UsageError("predictor: dataset conditioning mismatch");
    }
    auto z = encode_arch(tape, v_in, e_in, t);
    if (dataset != nullptr) {
        z = tape.concat_cols({z, encode_dataset(tape, *dataset)});
    }
    auto hidden = tape.swish(tape.add_rowvec(tape.matmul(z, params_.at("head.w1")),
                                             params_.at("head.b1")));
    auto logit = tape.add_rowvec(tape.matmul(hidden, params_.at("head.w2")), params_.at("head.b2"));
    return tape.sigmoid(logit);
}

double Predictor::predict(const ContinuousArchitecture& a_t, double t,
                          const TaskDataset* dataset) const {
    Tape tape;
    auto v_in = make_leaf(a_t.v, false);
    auto e_in = make_leaf(a_t.e, false);
    return predict_on_tape(tape, v_in, e_in, t, dataset)->value.item();
}

double Predictor::sigma_sq() const { return std::exp(params_.at("logvar")->value.item()); }

Predictor Predictor::clone_eval() const {
    return Predictor(space_, cfg_, sde_, params_.clone(false));
}

void Predictor::save(const std::string& path) const {
    save_checkpoint(path, params_, predictor_config_json(cfg_, sde_, space_->name).dump());
}

Predictor Predictor::load(const std::string& path) {
    auto ck = load_checkpoint(path, true);
    json j = json::parse(ck.config_json);
    if (j.at("kind").get<std::string>() != "predictor") {
        throw UsageError("checkpoint is not a predictor: " + path);
    }
    PredictorConfig cfg;
    cfg.num_layers = j.at("num_layers").get<int>();
    cfg.hidden = j.at("hidden").get<int>();
    cfg.mlp_hidden = j.at("mlp_hidden").get<int>();
    cfg.dataset_hidden = j.at("dataset_hidden").get<int>();
    cfg.instances_per_class = j.at("instances_per_class").get<int>();
    cfg.feature_dim = j.at("feature_dim").get<int>();
    cfg.dataset_aware = j.at("dataset_aware").get<bool>();
    cfg.lr = j.at("lr").get<double>();
    cfg.batch_size = j.at("batch_size").get<int>();
    cfg.warmup = j.at("warmup").get<int>();
    cfg.grad_clip = j.at("grad_clip").get<double>();
    cfg.train_steps = j.at("train_steps").get<int>();
    VeSdeConfig sde;
    sde.sigma_min = j.at("sigma_min").get<double>();
    sde.sigma_max = j.at("sigma_max").get<double>();
    sde.num_steps = j.at("num_steps").get<int>();
    sde.eps = j.at("eps").get<double>();
    return Predictor(make_space(j.at("space").get<std::string>()), cfg, sde, std::move(ck.params));
}

PredictorTrainResult train_predictor(const SpacePtr& space, const std::vector<LabeledArch>& population,
                                     const PredictorConfig& cfg, bool noise_aware,
                                     const VeSdeConfig& sde, Rng rng,
                                     const std::vector<const TaskDataset*>* datasets) {
    TrainOptions opts;
    opts.noise_aware = noise_aware;
    return train_impl(space, population, cfg, sde, rng, opts, datasets);
}

PredictorTrainResult gaussian_fit(const SpacePtr& space, const std::vector<LabeledArch>& population,
                                  const PredictorConfig& cfg, const VeSdeConfig& sde, Rng rng) {
    TrainOptions opts;
    opts.noise_aware = true;
    opts.gaussian_nll = true;
    return train_impl(space, population, cfg, sde, rng, opts, nullptr);
}

PredictorEnsemble train_ensemble(const SpacePtr& space, const std::vector<LabeledArch>& population,
                                 const PredictorConfig& cfg, int m, bool noise_aware,
                                 const VeSdeConfig& sde, Rng rng, int threads) {
    if (m < 2) throw UsageError("train_ensemble: need M >= 2");
    std::vector<std::unique_ptr<Predictor>> slots(m);
    parallel_for(m, threads, [&](int i) {
        auto result = train_predictor(space, population, cfg, noise_aware, sde,
                                      rng.substream(1000 + static_cast<std::uint64_t>(i)));
        slots[i] = std::make_unique<Predictor>(std::move(result.model));
    });
    PredictorEnsemble ensemble;
    for (auto& s : slots) ensemble.members.push_back(std::move(*s));
    return ensemble;
}

EnsembleStats stats_from_values(const std::vector<double>& values) {
    const auto m = values.size();
    if (m < 2) throw UsageError("ensemble_stats: need M >= 2");
    EnsembleStats stats;
    for (double p : values) stats.mu += p;
    stats.mu /= static_cast<double>(m);
    double ss = 0.0;
    for (double p : values) ss += (p - stats.mu) * (p - stats.mu);
    stats.sigma = std::sqrt(ss / static_cast<double>(m - 1));
    return stats;
}

EnsembleStats ensemble_stats(const PredictorEnsemble& ensemble, const Architecture& a) {
    if (ensemble.members.size() < 2) throw UsageError("ensemble_stats: need M >= 2");
    const double eps = ensemble.members[0].sde().eps;
    std::vector<double> preds;
    preds.reserve(ensemble.members.size());
    for (const auto& member : ensemble.members) {
        preds.push_back(member.predict(to_continuous(a, eps), eps));
    }
    return stats_from_values(preds);
}

}  // namespace archdiff
