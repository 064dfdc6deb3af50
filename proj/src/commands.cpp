#include "archdiff/commands.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <set>

#include "archdiff/errors.hpp"
#include "archdiff/oracle.hpp"

namespace archdiff {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw UsageError("cannot create output directory: " + dir);
}

std::ofstream open_out(const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw UsageError("cannot open for writing: " + path);
    return f;
}

void write_loss_csv(const std::string& path, const std::vector<double>& curve) {
    auto f = open_out(path);
    f << "step,loss\n";
    for (std::size_t i = 0; i < curve.size(); ++i) {
        f << i << "," << format_double(curve[i]) << "\n";
    }
}

std::vector<LabeledArch> read_population(const std::string& path, const SpacePtr& space) {
    std::vector<LabeledArch> population;
    for (const auto& line : read_lines(path)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        Architecture a = arch_from_json(j.at("arch").dump(), space);
        population.emplace_back(std::move(a), j.at("y").get<double>());
    }
    return population;
}

std::set<std::string> read_key_set(const std::string& path) {
    std::set<std::string> keys;
    for (const auto& line : read_lines(path)) {
        if (!line.empty()) keys.insert(line);
    }
    return keys;
}

std::string continuous_to_json(const ContinuousArchitecture& c) {
    json j;
    j["space"] = c.space->name;
    j["t"] = c.t;
    std::vector<std::vector<double>> v(c.v.rows), e(c.e.rows);
    for (int i = 0; i < c.v.rows; ++i)
        for (int k = 0; k < c.v.cols; ++k) v[i].push_back(c.v.at(i, k));
    for (int i = 0; i < c.e.rows; ++i)
        for (int k = 0; k < c.e.cols; ++k) e[i].push_back(c.e.at(i, k));
    j["v"] = v;
    j["e"] = e;
    return j.dump();
}

}  // namespace

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw UsageError("cannot open: " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(f, line)) lines.push_back(line);
    return lines;
}

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

TrainScoreOutcome cmd_train_score(RunConfig cfg, double fraction) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw UsageError("--fraction outside (0, 1]");
    ensure_dir(cfg.out_dir);
    auto space = make_space(cfg.space);
    auto all = enumerate_space(space);

    Rng rng(cfg.seed, 0);
    std::vector<Architecture> dataset;
    if (fraction < 1.0) {
        std::vector<std::size_t> idx(all.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        Rng split = rng.substream(900);
        for (std::size_t i = idx.size(); i > 1; --i) {
            std::swap(idx[i - 1], idx[split.uniform_int(static_cast<int>(i))]);
        }
        const auto take = static_cast<std::size_t>(
            std::max<double>(1.0, std::ceil(fraction * static_cast<double>(all.size()))));
        for (std::size_t i = 0; i < take; ++i) dataset.push_back(all[idx[i]]);
    } else {
        dataset = all;
    }

    auto result = train_scorenet(space, dataset, cfg.scorenet, cfg.sde, rng);

    TrainScoreOutcome out;
    out.dataset_size = static_cast<int>(dataset.size());
    out.checkpoint_path = cfg.out_dir + "/score.ckpt";
    out.train_keys_path = cfg.out_dir + "/train_keys.txt";
    result.net.save(out.checkpoint_path);
    write_loss_csv(cfg.out_dir + "/loss.csv", result.loss_curve);
    {
        std::vector<std::string> keys;
        keys.reserve(dataset.size());
        for (const auto& a : dataset) keys.push_back(canonical_key(a));
        std::sort(keys.begin(), keys.end());
        auto f = open_out(out.train_keys_path);
        for (const auto& k : keys) f << k << "\n";
    }
    write_resolved_config(cfg, "train-score", cfg.out_dir + "/resolved_config.json");
    out.final_loss = result.loss_curve.empty() ? 0.0 : result.loss_curve.back();
    return out;
}

TrainPredictorOutcome cmd_train_predictor(RunConfig cfg, const std::string& population_path,
                                          const std::string& table_path, bool noise_aware,
                                          bool nll) {
    if (population_path.empty() == table_path.empty()) {
        throw UsageError("train-predictor: pass exactly one of --population / --table");
    }
    ensure_dir(cfg.out_dir);
    auto space = make_space(cfg.space);

    std::vector<LabeledArch> population;
    if (!population_path.empty()) {
        population = read_population(population_path, space);
    } else {
        auto table = load_table(table_path);
        if (table.space_name != space->name) throw UsageError("table space mismatch");
        for (const auto& [key, entry] : table.entries) {
            population.emplace_back(arch_from_key(key, space), entry.acc);
        }
    }

    Rng rng(cfg.seed, 1);
    auto result = nll ? gaussian_fit(space, population, cfg.predictor, cfg.sde, rng)
                      : train_predictor(space, population, cfg.predictor, noise_aware, cfg.sde, rng);

    TrainPredictorOutcome out;
    out.population_size = static_cast<int>(population.size());
    out.checkpoint_path = cfg.out_dir + "/predictor.ckpt";
    result.model.save(out.checkpoint_path);
    write_loss_csv(cfg.out_dir + "/loss.csv", result.loss_curve);
    write_resolved_config(cfg, "train-predictor", cfg.out_dir + "/resolved_config.json");
    out.final_loss = result.loss_curve.empty() ? 0.0 : result.loss_curve.back();
    return out;
}

GenerateOutcome cmd_generate(RunConfig cfg, const std::string& ckpt_path, int n,
                             const std::string& guide_ckpt_path, const std::string& discretize_mode,
                             const std::string& train_keys_path, const std::string& table_path) {
    if (n < 1) throw UsageError("generate: --n must be >= 1");
    ensure_dir(cfg.out_dir);
    ScoreNet net = ScoreNet::load(ckpt_path);
    if (net.space()->name != cfg.space) {
        throw UsageError("generate: checkpoint space '" + net.space()->name +
                         "' does not match --space " + cfg.space);
    }
    DiscretizeMode mode;
    if (discretize_mode == "threshold") {
        mode = DiscretizeMode::kThreshold;
    } else if (discretize_mode == "snap") {
        mode = DiscretizeMode::kSnap;
    } else {
        throw UsageError("generate: unknown discretize mode " + discretize_mode);
    }

    SamplerConfig sampler_cfg = cfg.sampler;
    sampler_cfg.batch = n;
    sampler_cfg.threads = cfg.threads;

    std::optional<Predictor> guide;
    std::vector<GeneratedSample> samples;
    Rng rng(cfg.seed, 2);
    if (!guide_ckpt_path.empty()) {
        guide = Predictor::load(guide_ckpt_path);
        if (guide->space()->name != cfg.space) {
            throw UsageError("generate: predictor space mismatch");
        }
        std::vector<GuidedPredictor> guides{GuidedPredictor{&*guide, 1.0, nullptr}};
        samples = guided_sample_batch(net, guides, cfg.guidance, sampler_cfg, rng);
    } else {
        samples = sample_batch(net, sampler_cfg, rng);
    }

    GenerateOutcome out;
    out.samples_path = cfg.out_dir + "/samples.jsonl";
    out.continuous_path = cfg.out_dir + "/continuous.jsonl";
    out.meta_path = cfg.out_dir + "/samples_meta.jsonl";
    out.report_path = cfg.out_dir + "/report.json";

    std::optional<BenchmarkTable> table;
    if (!table_path.empty()) table = load_table(table_path);

    std::vector<Architecture> discretized;
    {
        auto fs_samples = open_out(out.samples_path);
        auto fs_cont = open_out(out.continuous_path);
        auto fs_meta = open_out(out.meta_path);
        for (const auto& s : samples) {
            Architecture a = discretize(s.state, mode);
            fs_samples << arch_to_json(a) << "\n";
            fs_cont << continuous_to_json(s.state) << "\n";
            json meta;
            meta["chain"] = s.chain;
            meta["k"] = guide_ckpt_path.empty() ? 0.0 : cfg.guidance.k;
            if (s.pred_y) {
                meta["pred_y"] = *s.pred_y;
            } else {
                meta["pred_y"] = nullptr;
            }
            fs_meta << meta.dump() << "\n";
            discretized.push_back(std::move(a));
        }
    }

    std::set<std::string> train_keys;
    if (!train_keys_path.empty()) train_keys = read_key_set(train_keys_path);
    out.metrics = sample_metrics(discretized, train_keys);

    json report;
    report["n"] = n;
    report["metrics"] = {{"validity", out.metrics.validity},
                         {"uniqueness", out.metrics.uniqueness
                                            ? json(*out.metrics.uniqueness)
                                            : json(nullptr)},
                         {"novelty", out.metrics.novelty ? json(*out.metrics.novelty)
                                                         : json(nullptr)}};
    if (table) {
        double acc_sum = 0.0;
        int acc_count = 0;
        for (const auto& a : discretized) {
            if (!validate(a).valid) continue;
            acc_sum += table->acc_of(canonical_key(a));
            ++acc_count;
        }
        out.mean_oracle_acc =
            acc_count > 0 ? std::optional<double>(acc_sum / acc_count) : std::nullopt;
        report["oracle"] = {{"mean_acc", out.mean_oracle_acc ? json(*out.mean_oracle_acc)
                                                             : json(nullptr)},
                            {"evaluated", acc_count}};
    }
    {
        auto f = open_out(out.report_path);
        f << report.dump(2) << "\n";
    }
    write_resolved_config(cfg, "generate", cfg.out_dir + "/resolved_config.json");
    return out;
}

BoOutcome cmd_bo(RunConfig cfg, const std::string& table_path, const std::string& score_ckpt_path,
                 const std::vector<std::uint64_t>& seeds) {
    if (seeds.empty()) throw UsageError("bo: need at least one seed");
    ensure_dir(cfg.out_dir);
    auto space = make_space(cfg.space);
    auto table = load_table(table_path);
    if (table.space_name != space->name) throw UsageError("bo: table space mismatch");
    OracleFn h = [&](const Architecture& a) { return table.acc_of(canonical_key(a)); };

    std::optional<ScoreNet> net;
    if (cfg.bo.strategy == AoStrategy::kGuided) {
        if (score_ckpt_path.empty()) throw UsageError("bo: guided strategy needs --score-ckpt");
        net = ScoreNet::load(score_ckpt_path);
        if (net->space()->name != space->name) throw UsageError("bo: checkpoint space mismatch");
    }

    BoConfig bo_cfg = cfg.bo;
    bo_cfg.threads = cfg.threads;
    bo_cfg.guidance = cfg.guidance;
    bo_cfg.sampler.corrector = cfg.sampler.corrector;
    bo_cfg.sampler.corrector_snr = cfg.sampler.corrector_snr;

    BoOutcome out;
    std::vector<std::vector<double>> best_curves;
    for (const auto seed : seeds) {
        auto result = bo_loop(space, h, bo_cfg, net ? &*net : nullptr, Rng(seed, 3));
        const std::string path = cfg.out_dir + "/history_" + std::to_string(seed) + ".csv";
        auto f = open_out(path);
        f << "iteration,chosen_key,y,best_so_far,wallclock_ms\n";
        std::vector<double> curve;
        for (const auto& row : result.history) {
            f << row.iteration << "," << row.chosen_key << "," << format_double(row.y) << ","
              << format_double(row.best_so_far) << "," << row.wallclock_ms << "\n";
            curve.push_back(row.best_so_far);
        }
        out.history_paths.push_back(path);
        out.best_per_seed.push_back(result.best_y);
        best_curves.push_back(std::move(curve));
    }

    out.summary_path = cfg.out_dir + "/summary.csv";
    {
        auto f = open_out(out.summary_path);
        f << "iteration,median_best_so_far\n";
        for (int it = 0; it < cfg.bo.budget; ++it) {
            std::vector<double> vals;
            for (const auto& curve : best_curves) {
                if (it < static_cast<int>(curve.size())) vals.push_back(curve[it]);
            }
            std::sort(vals.begin(), vals.end());
            const std::size_t m = vals.size();
            const double median =
                m % 2 == 1 ? vals[m / 2] : 0.5 * (vals[m / 2 - 1] + vals[m / 2]);
            f << it << "," << format_double(median) << "\n";
        }
    }
    write_resolved_config(cfg, "bo", cfg.out_dir + "/resolved_config.json");
    return out;
}

OracleOutcome cmd_oracle_build(RunConfig cfg, const std::string& out_path) {
    auto space = make_space(cfg.space);
    auto table = build_table(space);
    const std::string path = out_path.empty() ? cfg.space + "_table.jsonl" : out_path;
    if (path.find('/') != std::string::npos) {
        ensure_dir(fs::path(path).parent_path().string());
    }
    save_table(table, path);
    return OracleOutcome{path, table.entries.size()};
}

EvalMetricsOutcome cmd_eval_metrics(RunConfig cfg, const std::string& samples_path,
                                    const std::string& train_keys_path) {
    ensure_dir(cfg.out_dir);
    auto space = make_space(cfg.space);
    std::vector<Architecture> samples;
    for (const auto& line : read_lines(samples_path)) {
        if (!line.empty()) samples.push_back(arch_from_json(line, space));
    }
    std::set<std::string> train_keys;
    if (!train_keys_path.empty()) train_keys = read_key_set(train_keys_path);

    EvalMetricsOutcome out;
    out.metrics = sample_metrics(samples, train_keys);
    out.report_path = cfg.out_dir + "/metrics.json";
    json report;
    report["samples"] = samples.size();
    report["metrics"] = {{"validity", out.metrics.validity},
                         {"uniqueness", out.metrics.uniqueness
                                            ? json(*out.metrics.uniqueness)
                                            : json(nullptr)},
                         {"novelty", out.metrics.novelty ? json(*out.metrics.novelty)
                                                         : json(nullptr)}};
    auto f = open_out(out.report_path);
    f << report.dump(2) << "\n";
    return out;
}

}  // namespace archdiff
