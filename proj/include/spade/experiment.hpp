#pragma once

#include "spade/evaluation.hpp"
#include "spade/scenarios.hpp"
#include "spade/trainer.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace spade {

struct DatasetSpec {
    std::filesystem::path path;
    CsvSchema schema;
    std::set<int> normal_classes;
    std::optional<std::filesystem::path> test_path;  // predefined split, else test_frac applies
    double test_frac = 0.5;
};

struct ScenarioSpec {
    std::string kind = "new_anomalies";  // new_anomalies | easiness | pu | high_risk | temporal
    std::set<int> given_types;
    double label_frac = 0.05;
    double top_frac = 0.10;
    double risk_frac = 0.02;
    double label_frac_of_risky = 0.5;
};

struct ExperimentConfig {
    DatasetSpec dataset;
    ScenarioSpec scenario;
    std::string method = "spade";
    TrainConfig train;
    std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
    std::filesystem::path out_dir = "spade_out";
};

/// Flat-key-path JSON ("dataset.path", "train.alpha", ...). Unknown keys are
/// rejected so typos fail loudly.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Table-style method/scenario compatibility: occ needs labeled normals,
/// supervised needs both labeled classes, so neither runs on PU splits.
void validate_method_for_split(const std::string& method, const ScenarioSplit& split);

/// Loads + converts the dataset, carves out the test set, and runs the
/// configured generator. Deterministic in (config, seed).
ScenarioSplit build_scenario(const ExperimentConfig& cfg, std::uint64_t seed);

AnyModel train_method(const ScenarioSplit& split, const std::string& method, TrainConfig cfg);

EvalReport evaluate_model(const AnyModel& model, const ScenarioSplit& split, bool with_curves = false);

struct RunResult {
    std::uint64_t seed = 0;
    EvalReport report;
};

/// Full prepare/train/evaluate pipeline over cfg.seeds (fanned out across up
/// to SPADE_THREADS workers); returns the aggregate report.
EvalReport run_experiment(const ExperimentConfig& cfg, std::vector<RunResult>* per_seed = nullptr);

unsigned max_worker_threads(std::size_t jobs);

// CLI entry points; they print progress and return a process exit code.
int cmd_prepare(const ExperimentConfig& cfg);
int cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& scenario_dir,
              const std::filesystem::path& out_dir);
int cmd_evaluate(const std::vector<std::filesystem::path>& checkpoints,
                 const std::vector<std::filesystem::path>& scenario_dirs,
                 const std::filesystem::path& out_dir);

struct SweepRow {
    std::string value;
    EvalReport aggregate;
    std::vector<RunResult> runs;
};

int cmd_sweep(const ExperimentConfig& cfg, const std::string& parameter,
              const std::vector<std::string>& values, const std::filesystem::path& out_dir,
              std::vector<SweepRow>* rows_out = nullptr);

}  // namespace spade
