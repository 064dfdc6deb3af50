#pragma once

#include <optional>
#include <string>
#include <vector>

#include "archdiff/runconfig.hpp"

namespace archdiff {

// Command implementations shared by the CLI, the acceptance suite, and the
// python module. Each writes its outputs under cfg.out_dir together with
// the resolved config, and returns a small summary.

struct TrainScoreOutcome {
    std::string checkpoint_path;
    std::string train_keys_path;
    double final_loss = 0.0;
    int dataset_size = 0;
};

TrainScoreOutcome cmd_train_score(RunConfig cfg, double fraction = 1.0);

struct TrainPredictorOutcome {
    std::string checkpoint_path;
    double final_loss = 0.0;
    int population_size = 0;
};

// Population source: a JSONL population file of {"arch":..., "y":...}
// lines, or an oracle benchmark table (trains on every entry).
TrainPredictorOutcome cmd_train_predictor(RunConfig cfg, const std::string& population_path,
                                          const std::string& table_path, bool noise_aware,
                                          bool nll);

struct GenerateOutcome {
    std::string samples_path;     // discretized archspace JSONL
    std::string continuous_path;  // continuous states
    std::string meta_path;        // {"chain", "k", "pred_y"} per sample
    std::string report_path;      // metrics (+ oracle annotation)
    SampleMetrics metrics;
    std::optional<double> mean_oracle_acc;
};

GenerateOutcome cmd_generate(RunConfig cfg, const std::string& ckpt_path, int n,
                             const std::string& guide_ckpt_path, const std::string& discretize_mode,
                             const std::string& train_keys_path, const std::string& table_path);

struct BoOutcome {
    std::vector<std::string> history_paths;
    std::string summary_path;
    std::vector<double> best_per_seed;
};

BoOutcome cmd_bo(RunConfig cfg, const std::string& table_path, const std::string& score_ckpt_path,
                 const std::vector<std::uint64_t>& seeds);

struct OracleOutcome {
    std::string table_path;
    std::size_t entries = 0;
};

OracleOutcome cmd_oracle_build(RunConfig cfg, const std::string& out_path);

struct EvalMetricsOutcome {
    std::string report_path;
    SampleMetrics metrics;
};

EvalMetricsOutcome cmd_eval_metrics(RunConfig cfg, const std::string& samples_path,
                                    const std::string& train_keys_path);

// helpers shared with tests
std::vector<std::string> read_lines(const std::string& path);
std::string format_double(double v);  // shortest round-trip decimal

}  // namespace archdiff
