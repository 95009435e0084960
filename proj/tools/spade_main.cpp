#include "spade/experiment.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

struct Overrides {
    std::vector<std::uint64_t> seeds;
    std::string method;
    std::string scenario;
    std::string out;
    double alpha = -1.0, beta = -1.0;
    int k = -1;
    bool no_partial_matching = false;
    bool no_ensemble = false;
    bool no_normals_in_occ = false;
    bool majority_vote = false;
};

void add_override_flags(CLI::App* cmd, std::string& config_path, Overrides& ov) {
    cmd->add_option("--config", config_path, "JSON experiment config (flat key paths)");
    cmd->add_option("--seed", ov.seeds, "Seed(s); overrides the config's seed list");
    cmd->add_option("--method", ov.method, "spade | supervised | negative_supervised | occ | negative_occ");
    cmd->add_option("--scenario", ov.scenario, "new_anomalies | easiness | pu | high_risk | temporal");
    cmd->add_option("--alpha", ov.alpha, "Pseudo-label loss weight");
    cmd->add_option("--beta", ov.beta, "Reconstruction loss weight");
    cmd->add_option("--k", ov.k, "OCC ensemble size");
    cmd->add_option("--out", ov.out, "Output directory");
    cmd->add_flag("--no-partial-matching", ov.no_partial_matching,
                  "Fixed percentile thresholds instead of partial matching");
    cmd->add_flag("--no-ensemble", ov.no_ensemble, "Single OCC (K=1)");
    cmd->add_flag("--no-normals-in-occ", ov.no_normals_in_occ,
                  "Fit each OCC on its unlabeled subset only");
    cmd->add_flag("--majority-vote", ov.majority_vote, "Majority instead of unanimous consensus");
}

spade::ExperimentConfig resolve(const std::string& config_path, const Overrides& ov) {
    spade::ExperimentConfig cfg =
        config_path.empty() ? spade::ExperimentConfig{} : spade::load_config(config_path);
    if (!ov.seeds.empty()) cfg.seeds = ov.seeds;
    if (!ov.method.empty()) cfg.method = ov.method;
    if (!ov.scenario.empty()) cfg.scenario.kind = ov.scenario;
    if (!ov.out.empty()) cfg.out_dir = ov.out;
    if (ov.alpha >= 0.0) cfg.train.alpha = ov.alpha;
    if (ov.beta >= 0.0) cfg.train.beta = ov.beta;
    if (ov.k >= 1) cfg.train.k = ov.k;
    if (ov.no_partial_matching) cfg.train.labeler.use_partial_matching = false;
    if (ov.no_ensemble) cfg.train.k = 1;
    if (ov.no_normals_in_occ) cfg.train.labeler.include_negatives_in_occ = false;
    if (ov.majority_vote) cfg.train.labeler.majority_vote = true;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"SPADE: semi-supervised anomaly detection experiments"};
    app.require_subcommand(1);

    std::string config_path;
    Overrides ov;

    auto* prepare = app.add_subcommand("prepare", "Generate scenario splits (3 CSVs + manifest per seed)");
    add_override_flags(prepare, config_path, ov);

    auto* train = app.add_subcommand("train", "Train a method on a prepared scenario directory");
    std::string scenario_dir;
    add_override_flags(train, config_path, ov);
    train->add_option("--scenario-dir", scenario_dir, "Directory written by prepare")->required();

    auto* evaluate = app.add_subcommand("evaluate", "Evaluate checkpoint(s) against scenario dir(s)");
    std::vector<std::string> checkpoints, scenario_dirs;
    std::string eval_out = "eval_out";
    evaluate->add_option("--checkpoint", checkpoints, "Checkpoint JSON (repeatable)")->required();
    evaluate->add_option("--scenario-dir", scenario_dirs, "Scenario directory (repeatable)")->required();
    evaluate->add_option("--out", eval_out, "Output directory");

    auto* sweep = app.add_subcommand("sweep", "Run the pipeline across parameter values");
    std::string parameter = "alpha";
    std::vector<std::string> values;
    add_override_flags(sweep, config_path, ov);
    sweep->add_option("--parameter", parameter, "alpha | beta | k | ablation");
    sweep->add_option("--values", values, "Values to sweep (repeatable or comma-separated)")
        ->required()
        ->delimiter(',');

    CLI11_PARSE(app, argc, argv);

    try {
        if (prepare->parsed()) return spade::cmd_prepare(resolve(config_path, ov));
        if (train->parsed()) {
            spade::ExperimentConfig cfg = resolve(config_path, ov);
            std::filesystem::path out = ov.out.empty() ? std::filesystem::path("train_out") : std::filesystem::path(ov.out);
            return spade::cmd_train(cfg, scenario_dir, out);
        }
        if (evaluate->parsed()) {
            std::vector<std::filesystem::path> cps(checkpoints.begin(), checkpoints.end());
            std::vector<std::filesystem::path> dirs(scenario_dirs.begin(), scenario_dirs.end());
            return spade::cmd_evaluate(cps, dirs, eval_out);
        }
        if (sweep->parsed()) {
            spade::ExperimentConfig cfg = resolve(config_path, ov);
            std::filesystem::path out = ov.out.empty() ? std::filesystem::path("sweep_out") : std::filesystem::path(ov.out);
            return spade::cmd_sweep(cfg, parameter, values, out);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
