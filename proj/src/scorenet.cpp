#include "archdiff/scorenet.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "archdiff/checkpoint.hpp"
#include "archdiff/errors.hpp"
#include "archdiff/timeemb.hpp"

namespace archdiff {

namespace {

using json = nlohmann::json;

Tensor normal_init(int r, int c, double std, Rng& rng) {
    Tensor t(r, c);
    for (double& v : t.data) v = std * rng.normal();
    return t;
}

Tensor strict_upper_ones(int n) {
    Tensor m(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) m.at(i, j) = 1.0;
    return m;
}

json scorenet_config_json(const ScoreNetConfig& cfg, const VeSdeConfig& sde,
                          const std::string& space_name) {
    json j;
    j["kind"] = "scorenet";
    j["space"] = space_name;
    j["num_blocks"] = cfg.num_blocks;
    j["num_heads"] = cfg.num_heads;
    j["model_dim"] = cfg.model_dim;
    j["ffn_dim"] = cfg.ffn_dim;
    j["dropout"] = cfg.dropout;
    j["use_pos_emb"] = cfg.use_pos_emb;
    j["lr"] = cfg.lr;
    j["batch_size"] = cfg.batch_size;
    j["warmup"] = cfg.warmup;
    j["grad_clip"] = cfg.grad_clip;
    j["ema_decay"] = cfg.ema_decay;
    j["train_steps"] = cfg.train_steps;
    j["sigma_min"] = sde.sigma_min;
    j["sigma_max"] = sde.sigma_max;
    j["num_steps"] = sde.num_steps;
    j["eps"] = sde.eps;
    return j;
}

}  // namespace

ScoreNetConfig ScoreNetConfig::paper() { return ScoreNetConfig{}; }

ScoreNetConfig ScoreNetConfig::desk() {
    ScoreNetConfig cfg;
    cfg.num_blocks = 3;
    cfg.num_heads = 4;
    cfg.model_dim = 32;
    cfg.ffn_dim = 64;
    cfg.lr = 1e-3;
    cfg.batch_size = 64;
    cfg.warmup = 200;
    cfg.train_steps = 3000;
    return cfg;
}

void ScoreNetConfig::check() const {
    if (num_blocks < 1 || num_heads < 1 || model_dim < 1 || ffn_dim < 1) {
        throw ConfigError("scorenet: dimensions must be positive");
    }
    if (model_dim % num_heads != 0) {
        throw ConfigError("scorenet: model_dim must be divisible by num_heads");
    }
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("scorenet: dropout outside [0, 1)");
}

Tensor build_mask(const Tensor& e_binary) {
    Tensor m(e_binary.rows, e_binary.cols);
    for (int i = 0; i < m.rows; ++i) {
        for (int j = 0; j < m.cols; ++j) {
            const bool connected = i == j || e_binary.at(i, j) == 1.0;
            m.at(i, j) = connected ? 0.0 : -1e9;
        }
    }
    return m;
}

ScoreNet::ScoreNet(SpacePtr space, ScoreNetConfig cfg, VeSdeConfig sde, Rng init_rng)
    : space_(std::move(space)), cfg_(cfg), sde_(sde) {
    cfg_.check();
    sde_.check();
    init_params(init_rng);
}

ScoreNet::ScoreNet(SpacePtr space, ScoreNetConfig cfg, VeSdeConfig sde, ParamMap params)
    : space_(std::move(space)), cfg_(cfg), sde_(sde), params_(std::move(params)) {
    cfg_.check();
    sde_.check();
}

void ScoreNet::init_params(Rng& rng) {
    const int n = space_->num_nodes;
    const int f = space_->num_ops();
    const int d = cfg_.model_dim;
    const int dh = d / cfg_.num_heads;

    params_.add("ops_w", normal_init(f, d, 1.0 / std::sqrt(f), rng));
    params_.add("pos", normal_init(n, d, 1.0 / std::sqrt(d), rng));
    params_.add("time_w", normal_init(kTimeFeatureDim, d, 1.0 / std::sqrt(kTimeFeatureDim), rng));
    params_.add("time_b", Tensor(1, d));
    for (int l = 0; l < cfg_.num_blocks; ++l) {
        const std::string blk = "blk" + std::to_string(l) + ".";
        for (int p = 0; p < cfg_.num_heads; ++p) {
            const std::string head = blk + "h" + std::to_string(p) + ".";
            params_.add(head + "wq", normal_init(d, dh, 1.0 / std::sqrt(d), rng));
            params_.add(head + "wk", normal_init(d, dh, 1.0 / std::sqrt(d), rng));
            params_.add(head + "wv", normal_init(d, dh, 1.0 / std::sqrt(d), rng));
        }
        params_.add(blk + "ffn_w1", normal_init(d, cfg_.ffn_dim, 1.0 / std::sqrt(d), rng));
        params_.add(blk + "ffn_b1", Tensor(1, cfg_.ffn_dim));
        params_.add(blk + "ffn_w2", normal_init(cfg_.ffn_dim, d, 1.0 / std::sqrt(cfg_.ffn_dim), rng));
        params_.add(blk + "ffn_b2", Tensor(1, d));
    }
    params_.add("vhead.w1", normal_init(d, d, 1.0 / std::sqrt(d), rng));
    params_.add("vhead.b1", Tensor(1, d));
    // heads predict the denoised state; zero init makes the initial score
    // the pure kernel score -a_t/sigma^2, and one factor of the bilinear
    // form stays random so gradients flow into the zero one
    params_.add("vhead.w2", Tensor(d, f));
    params_.add("vhead.b2", Tensor(1, f));
    params_.add("ehead.u", normal_init(d, d, 1.0 / std::sqrt(d), rng));
    params_.add("ehead.w", Tensor(d, d));
}

VarPtr ScoreNet::embed(Tape& tape, const VarPtr& v_in, double t) const {
    const int n = space_->num_nodes;
    // variance-preserving input scale: A_t entries grow like sigma_t, and
    // with no layer norm in the blocks the raw scale would swing the
    // attention logits by sigma_max^2 across t
    const double sigma = marginal_std(sde_, t);
    const double inv_scale = 1.0 / std::sqrt(1.0 + sigma * sigma);
    auto h = tape.matmul(tape.scale(v_in, inv_scale), params_.at("ops_w"));
    if (cfg_.use_pos_emb) {
        h = tape.add(h, params_.at("pos"));
    }
    auto tf = constant(time_features(t));
    auto time_row = tape.add_rowvec(tape.matmul(tf, params_.at("time_w")), params_.at("time_b"));
    // broadcast the single time row to every node
    auto ones = constant(Tensor::full(n, 1, 1.0));
    return tape.add(h, tape.matmul(ones, time_row));
}

ScorePair ScoreNet::forward(Tape& tape, const VarPtr& v_in, const VarPtr& e_in, double t,
                            const Tensor& mask, bool train_mode, Rng* rng) const {
    const int n = space_->num_nodes;
    if (v_in->value.rows != n || v_in->value.cols != space_->num_ops() ||
        e_in->value.rows != n || e_in->value.cols != n) {
        throw DimensionError("scorenet forward: input shapes do not match space");
    }
    if (train_mode && cfg_.dropout > 0.0 && rng == nullptr) {
        throw UsageError("scorenet forward: train mode needs an rng for dropout");
    }
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(cfg_.model_dim));

    auto h = embed(tape, v_in, t);
    for (int l = 0; l < cfg_.num_blocks; ++l) {
        const std::string blk = "blk" + std::to_string(l) + ".";
        std::vector<VarPtr> heads;
        heads.reserve(cfg_.num_heads);
        for (int p = 0; p < cfg_.num_heads; ++p) {
            const std::string head = blk + "h" + std::to_string(p) + ".";
            auto q = tape.matmul(h, params_.at(head + "wq"));
            auto k = tape.matmul(h, params_.at(head + "wk"));
            auto v = tape.matmul(h, params_.at(head + "wv"));
            auto scores = tape.scale(tape.matmul(q, tape.transpose(k)), inv_sqrt_d);
            auto attn = tape.softmax_masked(scores, mask);
            heads.push_back(tape.matmul(attn, v));
        }
        auto hhat = tape.concat_cols(heads);
        if (train_mode && cfg_.dropout > 0.0) hhat = tape.dropout(hhat, cfg_.dropout, *rng);
        auto mid = tape.relu(tape.add_rowvec(tape.matmul(hhat, params_.at(blk + "ffn_w1")),
                                             params_.at(blk + "ffn_b1")));
        if (train_mode && cfg_.dropout > 0.0) mid = tape.dropout(mid, cfg_.dropout, *rng);
        h = tape.add_rowvec(tape.matmul(mid, params_.at(blk + "ffn_w2")),
                            params_.at(blk + "ffn_b2"));
    }

    // denoised-state parameterization: the heads predict A_0 and the score
    // follows the transition kernel, s = (A0_hat - A_t) / sigma_t^2
    const double sigma = marginal_std(sde_, t);
    const double inv_var = 1.0 / (sigma * sigma);
    auto vh = tape.swish(tape.add_rowvec(tape.matmul(h, params_.at("vhead.w1")),
                                         params_.at("vhead.b1")));
    auto v_denoised =
        tape.add_rowvec(tape.matmul(vh, params_.at("vhead.w2")), params_.at("vhead.b2"));
    ScorePair out;
    out.v = tape.scale(tape.sub(v_denoised, v_in), inv_var);

    // pairwise bilinear head on (H_i, H_j) for the denoised adjacency
    auto e_denoised = tape.matmul(tape.matmul(h, params_.at("ehead.u")),
                                  tape.transpose(tape.matmul(h, params_.at("ehead.w"))));
    const Tensor upper = strict_upper_ones(n);
    auto e_raw = tape.mul_const(tape.sub(e_denoised, e_in), upper);
    out.e = tape.scale(e_raw, inv_var);
    return out;
}

std::pair<Tensor, Tensor> ScoreNet::score(const ContinuousArchitecture& a_t, double t,
                                          const Tensor& mask) const {
    Tape tape;
    auto v_in = make_leaf(a_t.v, false);
    auto e_in = make_leaf(a_t.e, false);
    auto s = forward(tape, v_in, e_in, t, mask, false, nullptr);
    return {s.v->value, s.e->value};
}

Tensor ScoreNet::sampling_mask(const ContinuousArchitecture& a_t) const {
    if (space_->is_template()) {
        return build_mask(*space_->adjacency_template);
    }
    Tensor binary(a_t.e.rows, a_t.e.cols);
    for (int i = 0; i < binary.rows; ++i)
        for (int j = i + 1; j < binary.cols; ++j)
            binary.at(i, j) = a_t.e.at(i, j) > 0.5 ? 1.0 : 0.0;
    return build_mask(binary);
}

ScoreNet ScoreNet::clone_eval() const {
    return ScoreNet(space_, cfg_, sde_, params_.clone(false));
}

void ScoreNet::save(const std::string& path) const {
    save_checkpoint(path, params_, scorenet_config_json(cfg_, sde_, space_->name).dump());
}

ScoreNet ScoreNet::load(const std::string& path) {
    auto ck = load_checkpoint(path, true);
    json j = json::parse(ck.config_json);
    if (j.at("kind").get<std::string>() != "scorenet") {
        throw UsageError("checkpoint is not a score network: " + path);
    }
    ScoreNetConfig cfg;
    cfg.num_blocks = j.at("num_blocks").get<int>();
    cfg.num_heads = j.at("num_heads").get<int>();
    cfg.model_dim = j.at("model_dim").get<int>();
    cfg.ffn_dim = j.at("ffn_dim").get<int>();
    cfg.dropout = j.at("dropout").get<double>();
    cfg.use_pos_emb = j.at("use_pos_emb").get<bool>();
    cfg.lr = j.at("lr").get<double>();
    cfg.batch_size = j.at("batch_size").get<int>();
    cfg.warmup = j.at("warmup").get<int>();
    cfg.grad_clip = j.at("grad_clip").get<double>();
    cfg.ema_decay = j.at("ema_decay").get<double>();
    cfg.train_steps = j.at("train_steps").get<int>();
    VeSdeConfig sde;
    sde.sigma_min = j.at("sigma_min").get<double>();
    sde.sigma_max = j.at("sigma_max").get<double>();
    sde.num_steps = j.at("num_steps").get<int>();
    sde.eps = j.at("eps").get<double>();
    return ScoreNet(make_space(j.at("space").get<std::string>()), cfg, sde,
                    std::move(ck.params));
}

ScoreTrainResult train_scorenet(const SpacePtr& space, const std::vector<Architecture>& dataset,
                                const ScoreNetConfig& cfg, const VeSdeConfig& sde, Rng rng) {
    if (dataset.empty()) throw UsageError("train_scorenet: empty dataset");
    cfg.check();
    sde.check();

    Rng init_rng = rng.substream(1);
    Rng batch_rng = rng.substream(2);
    Rng noise_rng = rng.substream(3);
    Rng dropout_rng = rng.substream(4);

    ScoreNet net(space, cfg, sde, init_rng);
    Tensor template_mask;
    if (space->is_template()) template_mask = build_mask(*space->adjacency_template);

    AdamConfig adam;
    adam.lr = cfg.lr;
    AdamState adam_state;
    Ema ema;
    ema.decay = cfg.ema_decay;
    ema.init_from(net.params());

    std::vector<double> curve;
    curve.reserve(cfg.train_steps);

    for (int step = 0; step < cfg.train_steps; ++step) {
        Tape tape;
        VarPtr total;
        for (int b = 0; b < cfg.batch_size; ++b) {
            const auto& arch = dataset[batch_rng.uniform_int(static_cast<int>(dataset.size()))];
            const double t = sde.eps + (1.0 - sde.eps) * noise_rng.uniform();
            auto p = perturb(sde, to_continuous(arch), t, noise_rng);
            auto v_in = make_leaf(p.a_t.v, false);
            auto e_in = make_leaf(p.a_t.e, false);
            // mask source matches sampling: template if one exists, else
            // thresholded current state
            const Tensor m = space->is_template() ? template_mask : net.sampling_mask(p.a_t);
            auto s = net.forward(tape, v_in, e_in, t, m, true, &dropout_rng);
            auto item_loss = dsm_loss(tape, sde, s.v, s.e, p, t);
            total = total ? tape.add(total, item_loss) : item_loss;
        }
        auto loss = tape.scale(total, 1.0 / cfg.batch_size);
        net.params().zero_grad();
        tape.backward(loss);
        const double lr_scale =
            cfg.warmup > 0 ? std::min(1.0, static_cast<double>(step + 1) / cfg.warmup) : 1.0;
        adam_step(net.params(), adam, adam_state, cfg.grad_clip, lr_scale);
        ema.update(net.params());
        curve.push_back(loss->value.item());
    }

    ScoreTrainResult out{ScoreNet(space, cfg, sde, ema.snapshot(true)), std::move(curve)};
    return out;
}

}  // namespace archdiff
