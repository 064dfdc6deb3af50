#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "archdiff/commands.hpp"
#include "archdiff/errors.hpp"

namespace {

using namespace archdiff;

struct CommonFlags {
    std::string config_path;
    std::string preset = "desk";
    std::string space;
    std::string out_dir;
    std::int64_t seed = -1;
    int threads = -1;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON config file");
        cmd->add_option("--preset", preset, "base preset: desk|paper")
            ->check(CLI::IsMember({"desk", "paper"}));
        cmd->add_option("--space", space, "search space name");
        cmd->add_option("--out-dir", out_dir, "output directory");
        cmd->add_option("--seed", seed, "run seed (fallback: ARCHDIFF_SEED)");
        cmd->add_option("--threads", threads, "worker threads");
    }

    RunConfig resolve() const {
        RunConfig cfg = RunConfig::from_file(config_path, preset);
        bool file_has_seed = false;
        if (!config_path.empty()) {
            std::ifstream f(config_path);
            nlohmann::json j;
            f >> j;
            file_has_seed = j.contains("seed");
        }
        if (seed >= 0) {
            cfg.seed = static_cast<std::uint64_t>(seed);
        } else if (!file_has_seed) {
            if (const char* env = std::getenv("ARCHDIFF_SEED")) {
                cfg.seed = std::strtoull(env, nullptr, 10);
            }
        }
        if (!space.empty()) cfg.space = space;
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        if (threads > 0) cfg.threads = threads;
        return cfg;
    }
};

int dispatch(int argc, char** argv) {
    CLI::App app{"archdiff: diffusion-based architecture generation over synthetic benchmarks"};
    app.require_subcommand(1);

    auto* train_score = app.add_subcommand("train-score", "train the score network");
    CommonFlags ts_common;
    ts_common.attach(train_score);
    double fraction = 1.0;
    std::int64_t ts_steps = -1;
    bool no_pos_emb = false;
    train_score->add_option("--fraction", fraction, "fraction of the space used for training");
    train_score->add_option("--steps", ts_steps, "training steps");
    train_score->add_flag("--no-pos-emb", no_pos_emb, "ablate the positional embedding");

    auto* train_pred = app.add_subcommand("train-predictor", "train a property predictor");
    CommonFlags tp_common;
    tp_common.attach(train_pred);
    std::string population_path, tp_table_path;
    bool clean = false, nll = false;
    std::int64_t tp_steps = -1;
    train_pred->add_option("--population", population_path, "population JSONL of {arch, y}");
    train_pred->add_option("--table", tp_table_path, "oracle table; trains on all entries");
    train_pred->add_flag("--clean", clean, "disable noise-aware perturbation during training");
    train_pred->add_flag("--nll", nll, "fit a Gaussian likelihood (mean + learned variance)");
    train_pred->add_option("--steps", tp_steps, "training steps");

    auto* generate = app.add_subcommand("generate", "sample architectures from a checkpoint");
    CommonFlags gen_common;
    gen_common.attach(generate);
    std::string ckpt, guide_ckpt, gen_mode = "threshold", train_keys, gen_table;
    int n = 64;
    double k_flag = -1.0;
    std::string guide_mode_flag;
    double target_flag = std::numeric_limits<double>::quiet_NaN();
    std::int64_t gen_steps = -1;
    generate->add_option("--ckpt", ckpt, "score network checkpoint")->required();
    generate->add_option("--n", n, "number of samples");
    generate->add_option("--guide", guide_ckpt, "predictor checkpoint for guided sampling");
    generate->add_option("--k", k_flag, "guidance scale");
    generate->add_option("--guide-mode", guide_mode_flag, "log_prob|value|gaussian");
    generate->add_option("--target", target_flag, "target property for gaussian mode");
    generate->add_option("--mode", gen_mode, "discretization: threshold|snap");
    generate->add_option("--train-keys", train_keys, "training keys file for novelty");
    generate->add_option("--table", gen_table, "oracle table for accuracy annotation");
    generate->add_option("--sampler-steps", gen_steps, "reverse diffusion steps");

    auto* bo = app.add_subcommand("bo", "run Bayesian-optimization search");
    CommonFlags bo_common;
    bo_common.attach(bo);
    std::string bo_table, score_ckpt, strategy_flag, acq_flag, seeds_flag = "0";
    std::int64_t budget_flag = -1, n0_flag = -1, cand_flag = -1, ens_flag = -1;
    bo->add_option("--table", bo_table, "oracle table (the h function)")->required();
    bo->add_option("--score-ckpt", score_ckpt, "score network for the guided strategy");
    bo->add_option("--strategy", strategy_flag, "random|mutation|mutation+random|guided");
    bo->add_option("--acq", acq_flag, "pi|ei|its|ucb");
    bo->add_option("--budget", budget_flag, "total oracle evaluations N");
    bo->add_option("--n0", n0_flag, "initial uniform draws");
    bo->add_option("--candidates", cand_flag, "candidates per iteration");
    bo->add_option("--ensemble", ens_flag, "ensemble size M");
    bo->add_option("--seeds", seeds_flag, "comma-separated seed list");

    auto* oracle = app.add_subcommand("oracle", "synthetic benchmark tables");
    auto* build = oracle->add_subcommand("build-table", "enumerate a space into a table");
    CommonFlags or_common;
    or_common.attach(build);
    std::string table_out;
    build->add_option("--out", table_out, "output table path");

    auto* eval = app.add_subcommand("eval-metrics", "validity/uniqueness/novelty of a sample file");
    CommonFlags ev_common;
    ev_common.attach(eval);
    std::string eval_samples, eval_keys;
    eval->add_option("--samples", eval_samples, "samples JSONL")->required();
    eval->add_option("--train-keys", eval_keys, "training keys file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;  // usage errors exit 2
    }

    if (train_score->parsed()) {
        RunConfig cfg = ts_common.resolve();
        if (ts_steps > 0) cfg.scorenet.train_steps = static_cast<int>(ts_steps);
        if (no_pos_emb) cfg.scorenet.use_pos_emb = false;
        auto out = cmd_train_score(cfg, fraction);
        std::printf("trained on %d architectures; final loss %s\ncheckpoint: %s\n",
                    out.dataset_size, format_double(out.final_loss).c_str(),
                    out.checkpoint_path.c_str());
    } else if (train_pred->parsed()) {
        RunConfig cfg = tp_common.resolve();
        if (tp_steps > 0) cfg.predictor.train_steps = static_cast<int>(tp_steps);
        auto out = cmd_train_predictor(cfg, population_path, tp_table_path, !clean, nll);
        std::printf("trained on %d examples; final loss %s\ncheckpoint: %s\n",
                    out.population_size, format_double(out.final_loss).c_str(),
                    out.checkpoint_path.c_str());
    } else if (generate->parsed()) {
        RunConfig cfg = gen_common.resolve();
        if (k_flag >= 0.0) cfg.guidance.k = k_flag;
        if (!guide_mode_flag.empty()) cfg.guidance.mode = guidance_mode_from_string(guide_mode_flag);
        if (!std::isnan(target_flag)) cfg.guidance.target = target_flag;
        if (gen_steps > 0) cfg.sampler.num_steps = static_cast<int>(gen_steps);
        auto out = cmd_generate(cfg, ckpt, n, guide_ckpt, gen_mode, train_keys, gen_table);
        std::printf("samples: %s\nvalidity %.2f%%", out.samples_path.c_str(), out.metrics.validity);
        if (out.metrics.uniqueness) std::printf("  uniqueness %.2f%%", *out.metrics.uniqueness);
        if (out.metrics.novelty) std::printf("  novelty %.2f%%", *out.metrics.novelty);
        if (out.mean_oracle_acc) std::printf("  mean oracle acc %.4f", *out.mean_oracle_acc);
        std::printf("\n");
    } else if (bo->parsed()) {
        RunConfig cfg = bo_common.resolve();
        if (!strategy_flag.empty()) cfg.bo.strategy = strategy_from_string(strategy_flag);
        if (!acq_flag.empty()) cfg.bo.acq = acq_from_string(acq_flag);
        if (budget_flag > 0) cfg.bo.budget = static_cast<int>(budget_flag);
        if (n0_flag > 0) cfg.bo.n0 = static_cast<int>(n0_flag);
        if (cand_flag > 0) cfg.bo.candidates = static_cast<int>(cand_flag);
        if (ens_flag > 0) cfg.bo.ensemble = static_cast<int>(ens_flag);
        std::vector<std::uint64_t> seeds;
        std::stringstream ss(seeds_flag);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            if (!tok.empty()) seeds.push_back(std::strtoull(tok.c_str(), nullptr, 10));
        }
        auto out = cmd_bo(cfg, bo_table, score_ckpt, seeds);
        std::printf("summary: %s\n", out.summary_path.c_str());
        for (std::size_t i = 0; i < seeds.size(); ++i) {
            std::printf("seed %llu best %s\n", static_cast<unsigned long long>(seeds[i]),
                        format_double(out.best_per_seed[i]).c_str());
        }
    } else if (build->parsed()) {
        RunConfig cfg = or_common.resolve();
        auto out = cmd_oracle_build(cfg, table_out);
        std::printf("%zu entries\ntable: %s\n", out.entries, out.table_path.c_str());
    } else if (eval->parsed()) {
        RunConfig cfg = ev_common.resolve();
        auto out = cmd_eval_metrics(cfg, eval_samples, eval_keys);
        std::printf("report: %s\nvalidity %.2f%%\n", out.report_path.c_str(),
                    out.metrics.validity);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return dispatch(argc, argv);
    } catch (const archdiff::NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return 3;
    } catch (const archdiff::CapacityError& e) {
        std::fprintf(stderr, "capacity error: %s\n", e.what());
        return 4;
    } catch (const archdiff::UsageError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
