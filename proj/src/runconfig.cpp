#include "archdiff/runconfig.hpp"

#include <chrono>
#include <fstream>

#include "archdiff/errors.hpp"

namespace archdiff {

namespace {

using json = nlohmann::json;

void require_known_keys(const json& j, std::initializer_list<const char*> known,
                        const std::string& section) {
    for (const auto& [key, value] : j.items()) {
        (void)value;
        bool ok = false;
        for (const char* k : known) ok = ok || key == k;
        if (!ok) throw ConfigError("config: unknown key '" + key + "' in " + section);
    }
}

template <typename T>
void read_into(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

RunConfig RunConfig::desk() { return RunConfig{}; }

RunConfig RunConfig::paper() {
    RunConfig cfg;
    cfg.scorenet = ScoreNetConfig::paper();
    cfg.predictor = PredictorConfig::paper();
    cfg.bo = BoConfig::desk();  // Algorithm 1 leaves n0/N/c/M free; desk defaults stay
    cfg.bo.surrogate = PredictorConfig::paper();
    cfg.bo.fit = PredictorConfig::paper();
    return cfg;
}

void RunConfig::apply_json(const json& j) {
    require_known_keys(j, {"space", "seed", "out_dir", "threads", "sde", "scorenet", "predictor",
                           "sampler", "guidance", "bo"},
                       "top level");
    read_into(j, "space", space);
    read_into(j, "seed", seed);
    read_into(j, "out_dir", out_dir);
    read_into(j, "threads", threads);

    if (j.contains("sde")) {
        const auto& s = j.at("sde");
        require_known_keys(s, {"sigma_min", "sigma_max", "num_steps", "eps"}, "sde");
        read_into(s, "sigma_min", sde.sigma_min);
        read_into(s, "sigma_max", sde.sigma_max);
        read_into(s, "num_steps", sde.num_steps);
        read_into(s, "eps", sde.eps);
    }
    if (j.contains("scorenet")) {
        const auto& s = j.at("scorenet");
        require_known_keys(s,
                           {"num_blocks", "num_heads", "model_dim", "ffn_dim", "dropout",
                            "use_pos_emb", "lr", "batch_size", "warmup", "grad_clip", "ema_decay",
                            "train_steps"},
                           "scorenet");
        read_into(s, "num_blocks", scorenet.num_blocks);
        read_into(s, "num_heads", scorenet.num_heads);
        read_into(s, "model_dim", scorenet.model_dim);
        read_into(s, "ffn_dim", scorenet.ffn_dim);
        read_into(s, "dropout", scorenet.dropout);
        read_into(s, "use_pos_emb", scorenet.use_pos_emb);
        read_into(s, "lr", scorenet.lr);
        read_into(s, "batch_size", scorenet.batch_size);
        read_into(s, "warmup", scorenet.warmup);
        read_into(s, "grad_clip", scorenet.grad_clip);
        read_into(s, "ema_decay", scorenet.ema_decay);
        read_into(s, "train_steps", scorenet.train_steps);
    }
    if (j.contains("predictor")) {
        const auto& s = j.at("predictor");
        require_known_keys(s,
                           {"num_layers", "hidden", "mlp_hidden", "dataset_hidden",
                            "instances_per_class", "feature_dim", "dataset_aware", "lr",
                            "batch_size", "warmup", "grad_clip", "train_steps"},
                           "predictor");
        read_into(s, "num_layers", predictor.num_layers);
        read_into(s, "hidden", predictor.hidden);
        read_into(s, "mlp_hidden", predictor.mlp_hidden);
        read_into(s, "dataset_hidden", predictor.dataset_hidden);
        read_into(s, "instances_per_class", predictor.instances_per_class);
        read_into(s, "feature_dim", predictor.feature_dim);
        read_into(s, "dataset_aware", predictor.dataset_aware);
        read_into(s, "lr", predictor.lr);
        read_into(s, "batch_size", predictor.batch_size);
        read_into(s, "warmup", predictor.warmup);
        read_into(s, "grad_clip", predictor.grad_clip);
        read_into(s, "train_steps", predictor.train_steps);
    }
    if (j.contains("sampler")) {
        const auto& s = j.at("sampler");
        require_known_keys(s, {"num_steps", "corrector", "corrector_snr", "batch"}, "sampler");
        read_into(s, "num_steps", sampler.num_steps);
        read_into(s, "corrector", sampler.corrector);
        read_into(s, "corrector_snr", sampler.corrector_snr);
        read_into(s, "batch", sampler.batch);
    }
    if (j.contains("guidance")) {
        const auto& s = j.at("guidance");
        require_known_keys(s, {"k", "mode", "target"}, "guidance");
        read_into(s, "k", guidance.k);
        if (s.contains("mode")) guidance.mode = guidance_mode_from_string(s.at("mode").get<std::string>());
        read_into(s, "target", guidance.target);
    }
    if (j.contains("bo")) {
        const auto& s = j.at("bo");
        require_known_keys(s,
                           {"n0", "budget", "candidates", "acq", "beta", "strategy", "ensemble",
                            "surrogate_train_steps", "fit_train_steps", "sampler_num_steps"},
                           "bo");
        read_into(s, "n0", bo.n0);
        read_into(s, "budget", bo.budget);
        read_into(s, "candidates", bo.candidates);
        if (s.contains("acq")) bo.acq = acq_from_string(s.at("acq").get<std::string>());
        read_into(s, "beta", bo.beta);
        if (s.contains("strategy")) bo.strategy = strategy_from_string(s.at("strategy").get<std::string>());
        read_into(s, "ensemble", bo.ensemble);
        read_into(s, "surrogate_train_steps", bo.surrogate.train_steps);
        read_into(s, "fit_train_steps", bo.fit.train_steps);
        read_into(s, "sampler_num_steps", bo.sampler.num_steps);
    }
}

RunConfig RunConfig::from_file(const std::string& path, const std::string& preset) {
    RunConfig cfg;
    if (preset == "desk") {
        cfg = desk();
    } else if (preset == "paper") {
        cfg = paper();
    } else {
        throw ConfigError("unknown preset: " + preset);
    }
    if (!path.empty()) {
        std::ifstream f(path);
        if (!f) throw UsageError("config: cannot open " + path);
        json j;
        try {
            f >> j;
        } catch (const json::exception& e) {
            throw ConfigError("config: parse error in " + path + ": " + e.what());
        }
        cfg.apply_json(j);
    }
    return cfg;
}

nlohmann::json RunConfig::to_json() const {
    json j;
    j["space"] = space;
    j["seed"] = seed;
    j["out_dir"] = out_dir;
    j["threads"] = threads;
    j["sde"] = {{"sigma_min", sde.sigma_min},
                {"sigma_max", sde.sigma_max},
                {"num_steps", sde.num_steps},
                {"eps", sde.eps}};
    j["scorenet"] = {{"num_blocks", scorenet.num_blocks},
                     {"num_heads", scorenet.num_heads},
                     {"model_dim", scorenet.model_dim},
                     {"ffn_dim", scorenet.ffn_dim},
                     {"dropout", scorenet.dropout},
                     {"use_pos_emb", scorenet.use_pos_emb},
                     {"lr", scorenet.lr},
                     {"batch_size", scorenet.batch_size},
                     {"warmup", scorenet.warmup},
                     {"grad_clip", scorenet.grad_clip},
                     {"ema_decay", scorenet.ema_decay},
                     {"train_steps", scorenet.train_steps}};
    j["predictor"] = {{"num_layers", predictor.num_layers},
                      {"hidden", predictor.hidden},
                      {"mlp_hidden", predictor.mlp_hidden},
                      {"dataset_hidden", predictor.dataset_hidden},
                      {"instances_per_class", predictor.instances_per_class},
                      {"feature_dim", predictor.feature_dim},
                      {"dataset_aware", predictor.dataset_aware},
                      {"lr", predictor.lr},
                      {"batch_size", predictor.batch_size},
                      {"warmup", predictor.warmup},
                      {"grad_clip", predictor.grad_clip},
                      {"train_steps", predictor.train_steps}};
    j["sampler"] = {{"num_steps", sampler.num_steps},
                    {"corrector", sampler.corrector},
                    {"corrector_snr", sampler.corrector_snr},
                    {"batch", sampler.batch}};
    j["guidance"] = {{"k", guidance.k},
                     {"mode", guidance_mode_to_string(guidance.mode)},
                     {"target", guidance.target}};
    j["bo"] = {{"n0", bo.n0},
               {"budget", bo.budget},
               {"candidates", bo.candidates},
               {"acq", acq_to_string(bo.acq)},
               {"beta", bo.beta},
               {"strategy", strategy_to_string(bo.strategy)},
               {"ensemble", bo.ensemble},
               {"surrogate_train_steps", bo.surrogate.train_steps},
               {"fit_train_steps", bo.fit.train_steps},
               {"sampler_num_steps", bo.sampler.num_steps}};
    return j;
}

void write_resolved_config(const RunConfig& cfg, const std::string& command,
                           const std::string& path) {
    json j;
    j["config"] = cfg.to_json();
    const auto now = std::chrono::system_clock::now().time_since_epoch();
    j["meta"] = {{"command", command},
                 {"timestamp_utc",
                  std::chrono::duration_cast<std::chrono::seconds>(now).count()}};
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw UsageError("cannot write resolved config: " + path);
    f << j.dump(2) << "\n";
}

}  // namespace archdiff
