#include "spade/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <thread>

namespace spade {

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string opt_str(const std::optional<double>& v) { return v ? fmt(*v) : ""; }

const std::vector<std::string> kMethods = {"spade", "supervised", "negative_supervised", "occ",
                                           "negative_occ"};
const std::vector<std::string> kScenarios = {"new_anomalies", "easiness", "pu", "high_risk", "temporal"};

}  // namespace

ExperimentConfig config_from_json(const nlohmann::json& j) {
    static const std::set<std::string> known = {
        "dataset.path",        "dataset.class_column",  "dataset.timestamp_column",
        "dataset.feature_columns", "dataset.normal_classes", "dataset.test_path",
        "dataset.test_frac",   "scenario.kind",         "scenario.given_types",
        "scenario.label_frac", "scenario.top_frac",     "scenario.risk_frac",
        "scenario.label_frac_of_risky", "method",       "train.alpha",
        "train.beta",          "train.k",               "train.patience",
        "train.max_epochs",    "train.batch_size",      "train.learning_rate",
        "train.use_partial_matching", "train.include_negatives_in_occ", "train.majority_vote",
        "train.warm_start_raw_features", "train.min_improvement", "seeds", "out"};
    for (const auto& [key, _] : j.items())
        if (!known.count(key)) throw std::invalid_argument("config: unknown key '" + key + "'");

    ExperimentConfig c;
    c.dataset.path = j.value("dataset.path", std::string{});
    c.dataset.schema.class_column = j.value("dataset.class_column", std::string{"class"});
    c.dataset.schema.timestamp_column = j.value("dataset.timestamp_column", std::string{});
    if (j.contains("dataset.feature_columns"))
        c.dataset.schema.feature_columns = j.at("dataset.feature_columns").get<std::vector<std::string>>();
    if (j.contains("dataset.normal_classes"))
        for (int v : j.at("dataset.normal_classes").get<std::vector<int>>()) c.dataset.normal_classes.insert(v);
    if (j.contains("dataset.test_path")) c.dataset.test_path = j.at("dataset.test_path").get<std::string>();
    c.dataset.test_frac = j.value("dataset.test_frac", c.dataset.test_frac);

    c.scenario.kind = j.value("scenario.kind", c.scenario.kind);
    if (j.contains("scenario.given_types"))
        for (int v : j.at("scenario.given_types").get<std::vector<int>>()) c.scenario.given_types.insert(v);
    c.scenario.label_frac = j.value("scenario.label_frac", c.scenario.label_frac);
    c.scenario.top_frac = j.value("scenario.top_frac", c.scenario.top_frac);
    c.scenario.risk_frac = j.value("scenario.risk_frac", c.scenario.risk_frac);
    c.scenario.label_frac_of_risky = j.value("scenario.label_frac_of_risky", c.scenario.label_frac_of_risky);

    c.method = j.value("method", c.method);
    c.train.alpha = j.value("train.alpha", c.train.alpha);
    c.train.beta = j.value("train.beta", c.train.beta);
    c.train.k = j.value("train.k", c.train.k);
    c.train.patience = j.value("train.patience", c.train.patience);
    c.train.max_epochs = j.value("train.max_epochs", c.train.max_epochs);
    c.train.batch_size = j.value("train.batch_size", c.train.batch_size);
    c.train.learning_rate = j.value("train.learning_rate", c.train.learning_rate);
    c.train.min_improvement = j.value("train.min_improvement", c.train.min_improvement);
    c.train.labeler.use_partial_matching = j.value("train.use_partial_matching", true);
    c.train.labeler.include_negatives_in_occ = j.value("train.include_negatives_in_occ", true);
    c.train.labeler.majority_vote = j.value("train.majority_vote", false);
    c.train.warm_start_raw_features = j.value("train.warm_start_raw_features", false);
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    c.out_dir = j.value("out", c.out_dir.string());

    if (std::find(kMethods.begin(), kMethods.end(), c.method) == kMethods.end())
        throw std::invalid_argument("config: unknown method '" + c.method + "'");
    if (std::find(kScenarios.begin(), kScenarios.end(), c.scenario.kind) == kScenarios.end())
        throw std::invalid_argument("config: unknown scenario kind '" + c.scenario.kind + "'");
    if (c.seeds.empty()) throw std::invalid_argument("config: seeds must be nonempty");
    return c;
}

nlohmann::json config_to_json(const ExperimentConfig& c) {
    nlohmann::json j;
    j["dataset.path"] = c.dataset.path.string();
    j["dataset.class_column"] = c.dataset.schema.class_column;
    j["dataset.timestamp_column"] = c.dataset.schema.timestamp_column;
    if (!c.dataset.schema.feature_columns.empty())
        j["dataset.feature_columns"] = c.dataset.schema.feature_columns;
    j["dataset.normal_classes"] = std::vector<int>(c.dataset.normal_classes.begin(), c.dataset.normal_classes.end());
    if (c.dataset.test_path) j["dataset.test_path"] = c.dataset.test_path->string();
    j["dataset.test_frac"] = c.dataset.test_frac;
    j["scenario.kind"] = c.scenario.kind;
    j["scenario.given_types"] = std::vector<int>(c.scenario.given_types.begin(), c.scenario.given_types.end());
    j["scenario.label_frac"] = c.scenario.label_frac;
    j["scenario.top_frac"] = c.scenario.top_frac;
    j["scenario.risk_frac"] = c.scenario.risk_frac;
    j["scenario.label_frac_of_risky"] = c.scenario.label_frac_of_risky;
    j["method"] = c.method;
    nlohmann::json train = c.train.to_json();
    for (auto& [k, v] : train.items())
        if (k != "seed") j["train." + k] = v;
    j["seeds"] = c.seeds;
    j["out"] = c.out_dir.string();
    return j;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_config: cannot open '" + path.string() + "'");
    return config_from_json(nlohmann::json::parse(in));
}

void validate_method_for_split(const std::string& method, const ScenarioSplit& split) {
    bool has_normals = false, has_anomalies = false;
    for (const auto& s : split.labeled.samples) {
        has_normals |= s.label == kLabelNormal;
        has_anomalies |= s.label == kLabelAnomalous;
    }
    if (method == "occ" && !has_normals)
        throw std::invalid_argument("method 'occ' needs labeled normal samples (none in this scenario)");
    if (method == "supervised" && (!has_normals || !has_anomalies))
        throw std::invalid_argument("method 'supervised' needs both labeled classes (missing in this scenario)");
    if (method == "negative_supervised" && !has_anomalies)
        throw std::invalid_argument("method 'negative_supervised' needs labeled anomalies");
    if ((method == "spade" || method == "negative_occ" || method == "negative_supervised") &&
        split.unlabeled.empty())
        throw std::invalid_argument("method '" + method + "' needs unlabeled data");
}

ScenarioSplit build_scenario(const ExperimentConfig& cfg, std::uint64_t seed) {
    Dataset raw = load_csv(cfg.dataset.path, cfg.dataset.schema);
    Dataset full = to_anomaly_labels(raw, cfg.dataset.normal_classes);

    if (cfg.scenario.kind == "temporal") {
        ScenarioSplit split = temporal_split(full, cfg.dataset.test_frac, cfg.scenario.label_frac);
        split.seed = seed;
        return split;
    }

    Dataset train, test;
    if (cfg.dataset.test_path) {
        Dataset raw_test = load_csv(*cfg.dataset.test_path, cfg.dataset.schema);
        test = to_anomaly_labels(raw_test, cfg.dataset.normal_classes);
        train = full;
    } else {
        std::tie(train, test) = split_train_test(full, cfg.dataset.test_frac, seed);
    }

    ScenarioSplit split;
    if (cfg.scenario.kind == "new_anomalies") {
        split = scenario_new_anomalies(train, cfg.scenario.given_types, cfg.scenario.label_frac, seed);
    } else if (cfg.scenario.kind == "pu") {
        split = scenario_pu(train, cfg.scenario.given_types, cfg.scenario.label_frac, seed);
    } else if (cfg.scenario.kind == "easiness") {
        split = scenario_easiness(train, cfg.scenario.top_frac, seed);
    } else if (cfg.scenario.kind == "high_risk") {
        split = scenario_high_risk(train, cfg.scenario.risk_frac, cfg.scenario.label_frac_of_risky, seed);
    } else {
        throw std::invalid_argument("build_scenario: unknown kind '" + cfg.scenario.kind + "'");
    }
    split.test = std::move(test);
    return split;
}

AnyModel train_method(const ScenarioSplit& split, const std::string& method, TrainConfig cfg) {
    validate_method_for_split(method, split);
    // Shared preprocessing across methods: z-score fit on all training
    // features (labeled ∪ unlabeled), applied everywhere downstream.
    Scaler scaler = Scaler::fit(vstack(split.labeled.feature_matrix(), split.unlabeled.feature_matrix()));

    AnyModel out;
    if (method == "spade") {
        out.impl = train_spade(split, cfg);
    } else if (method == "supervised") {
        out.impl = train_supervised(split.labeled, cfg, scaler);
    } else if (method == "negative_supervised") {
        out.impl = train_negative_supervised(split.labeled, split.unlabeled, cfg, scaler);
    } else if (method == "occ") {
        std::vector<std::size_t> normal_idx;
        for (std::size_t i = 0; i < split.labeled.size(); ++i)
            if (split.labeled[i].label == kLabelNormal) normal_idx.push_back(i);
        out.impl = occ_baseline(split.labeled.subset(normal_idx), scaler);
    } else if (method == "negative_occ") {
        std::vector<std::size_t> normal_idx;
        for (std::size_t i = 0; i < split.labeled.size(); ++i)
            if (split.labeled[i].label == kLabelNormal) normal_idx.push_back(i);
        out.impl = negative_occ_baseline(split.labeled.subset(normal_idx), split.unlabeled, scaler);
    } else {
        throw std::invalid_argument("train_method: unknown method '" + method + "'");
    }
    return out;
}

EvalReport evaluate_model(const AnyModel& model, const ScenarioSplit& split, bool with_curves) {
    if (split.test.empty()) throw std::invalid_argument("evaluate_model: scenario has no test set");
    Vector scores = model.predict_scores(split.test.feature_matrix());
    EvalReport report = evaluate_splits(scores, split.test, split.given_types);

    if (with_curves) {
        if (const auto* sm = std::get_if<SpadeModel>(&model.impl); sm && sm->final_labeler) {
            Matrix xu = sm->scaler.transform(split.unlabeled.feature_matrix());
            Matrix rep = sm->encoder.forward(xu);
            Matrix occ_scores = sm->final_labeler->score_matrix(rep);
            report.curves = precision_curve(occ_scores, split.unlabeled_true_labels,
                                            sm->final_labeler->eta_p(), sm->final_labeler->eta_n());
        }
    }
    return report;
}

unsigned max_worker_threads(std::size_t jobs) {
    unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("SPADE_THREADS")) {
        long v = std::strtol(env, nullptr, 10);
        if (v >= 1) hw = static_cast<unsigned>(v);
    }
    return std::min<unsigned>(hw, static_cast<unsigned>(std::max<std::size_t>(1, jobs)));
}

EvalReport run_experiment(const ExperimentConfig& cfg, std::vector<RunResult>* per_seed) {
    const std::size_t n = cfg.seeds.size();
    std::vector<RunResult> results(n);
    std::vector<std::exception_ptr> errors(n);

    unsigned workers = max_worker_threads(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        while (true) {
            std::size_t i = next.fetch_add(1);
            if (i >= n) break;
            try {
                std::uint64_t seed = cfg.seeds[i];
                ExperimentConfig run_cfg = cfg;
                run_cfg.train.seed = seed;
                ScenarioSplit split = build_scenario(run_cfg, seed);
                AnyModel model = train_method(split, run_cfg.method, run_cfg.train);
                results[i] = {seed, evaluate_model(model, split)};
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < workers; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    std::vector<EvalReport> reports;
    reports.reserve(n);
    for (const auto& r : results) reports.push_back(r.report);
    if (per_seed) *per_seed = results;
    return aggregate_runs(reports);
}

// ---------------------------------------------------------------------------
// Commands

int cmd_prepare(const ExperimentConfig& cfg) {
    std::filesystem::create_directories(cfg.out_dir);
    {
        std::ofstream out(cfg.out_dir / "config.json");
        out << config_to_json(cfg).dump(2) << '\n';
    }
    for (std::uint64_t seed : cfg.seeds) {
        ScenarioSplit split = build_scenario(cfg, seed);
        std::filesystem::path dir = cfg.out_dir / ("seed_" + std::to_string(seed));
        save_scenario(split, dir);
        std::cout << "prepared " << dir.string() << " (labeled=" << split.labeled.size()
                  << ", unlabeled=" << split.unlabeled.size() << ", test=" << split.test.size() << ")\n";
    }
    return 0;
}

int cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& scenario_dir,
              const std::filesystem::path& out_dir) {
    ScenarioSplit split = load_scenario(scenario_dir);
    TrainConfig train_cfg = cfg.train;
    train_cfg.seed = cfg.seeds.front();
    AnyModel model = train_method(split, cfg.method, train_cfg);

    std::filesystem::create_directories(out_dir);
    {
        std::ofstream out(out_dir / "checkpoint.json");
        if (!out) throw std::runtime_error("cmd_train: cannot write checkpoint in '" + out_dir.string() + "'");
        out << model.to_json().dump() << '\n';
    }
    if (const auto* sm = std::get_if<SpadeModel>(&model.impl))
        write_trace_csv(out_dir / "trace.csv", *sm);
    std::cout << "trained " << cfg.method << " -> " << (out_dir / "checkpoint.json").string() << "\n";
    return 0;
}

int cmd_evaluate(const std::vector<std::filesystem::path>& checkpoints,
                 const std::vector<std::filesystem::path>& scenario_dirs,
                 const std::filesystem::path& out_dir) {
    if (checkpoints.empty() || checkpoints.size() != scenario_dirs.size())
        throw std::invalid_argument("cmd_evaluate: need matching --checkpoint/--scenario-dir lists");
    std::filesystem::create_directories(out_dir);

    std::vector<EvalReport> reports;
    std::ofstream csv(out_dir / "report.csv");
    csv << "run,overall_auc,given_auc,missed_auc\n";
    for (std::size_t i = 0; i < checkpoints.size(); ++i) {
        std::ifstream in(checkpoints[i]);
        if (!in) throw std::runtime_error("cmd_evaluate: cannot open '" + checkpoints[i].string() + "'");
        AnyModel model = AnyModel::from_json(nlohmann::json::parse(in));
        ScenarioSplit split = load_scenario(scenario_dirs[i]);
        EvalReport r = evaluate_model(model, split, /*with_curves=*/true);
        csv << i << ',' << opt_str(r.overall_auc) << ',' << opt_str(r.given_auc) << ','
            << opt_str(r.missed_auc) << '\n';
        std::ofstream jout(out_dir / ("report_run" + std::to_string(i) + ".json"));
        jout << r.to_json().dump(2) << '\n';
        if (r.curves) {
            std::ofstream pc(out_dir / ("precision_run" + std::to_string(i) + ".csv"));
            pc << "class,percentile,precision,support\n";
            for (const auto& p : r.curves->anomalous)
                pc << "anomalous," << fmt(p.percentile) << ',' << fmt(p.precision) << ',' << p.support << '\n';
            for (const auto& p : r.curves->normal)
                pc << "normal," << fmt(p.percentile) << ',' << fmt(p.precision) << ',' << p.support << '\n';
        }
        reports.push_back(std::move(r));
    }

    EvalReport agg = aggregate_runs(reports);
    std::ofstream jout(out_dir / "report.json");
    jout << agg.to_json().dump(2) << '\n';
    std::cout << "evaluated " << reports.size() << " run(s): overall=" << opt_str(agg.overall_auc);
    if (agg.overall_std) std::cout << " +/- " << *agg.overall_std;
    std::cout << "\n";
    return 0;
}

namespace {

void apply_sweep_value(ExperimentConfig& cfg, const std::string& parameter, const std::string& value) {
    if (parameter == "alpha") {
        cfg.train.alpha = std::stod(value);
    } else if (parameter == "beta") {
        cfg.train.beta = std::stod(value);
    } else if (parameter == "k") {
        cfg.train.k = std::stoi(value);
    } else if (parameter == "ablation") {
        if (value == "full") {
            // baseline configuration, nothing to change
        } else if (value == "no_partial_matching") {
            cfg.train.labeler.use_partial_matching = false;
        } else if (value == "no_ensemble") {
            cfg.train.k = 1;
        } else if (value == "no_self_supervised") {
            cfg.train.beta = 0.0;
        } else if (value == "no_normals_in_occ") {
            cfg.train.labeler.include_negatives_in_occ = false;
        } else if (value == "majority_vote") {
            cfg.train.labeler.majority_vote = true;
        } else {
            throw std::invalid_argument("cmd_sweep: unknown ablation '" + value + "'");
        }
    } else {
        throw std::invalid_argument("cmd_sweep: unknown parameter '" + parameter + "'");
    }
}

}  // namespace

int cmd_sweep(const ExperimentConfig& cfg, const std::string& parameter,
              const std::vector<std::string>& values, const std::filesystem::path& out_dir,
              std::vector<SweepRow>* rows_out) {
    if (values.empty()) throw std::invalid_argument("cmd_sweep: no values given");
    std::filesystem::create_directories(out_dir);

    std::vector<SweepRow> rows;
    for (const std::string& value : values) {
        ExperimentConfig run_cfg = cfg;
        apply_sweep_value(run_cfg, parameter, value);
        SweepRow row;
        row.value = value;
        row.aggregate = run_experiment(run_cfg, &row.runs);
        std::cout << "sweep " << parameter << "=" << value << ": overall=" << opt_str(row.aggregate.overall_auc)
                  << "\n";
        rows.push_back(std::move(row));
    }

    std::ofstream csv(out_dir / "sweep.csv");
    csv << "parameter,value,n_seeds,overall_mean,overall_std,given_mean,given_std,missed_mean,missed_std\n";
    for (const auto& row : rows) {
        csv << parameter << ',' << row.value << ',' << row.aggregate.n_seeds << ','
            << opt_str(row.aggregate.overall_auc) << ',' << opt_str(row.aggregate.overall_std) << ','
            << opt_str(row.aggregate.given_auc) << ',' << opt_str(row.aggregate.given_std) << ','
            << opt_str(row.aggregate.missed_auc) << ',' << opt_str(row.aggregate.missed_std) << '\n';
    }
    std::ofstream runs_csv(out_dir / "sweep_runs.csv");
    runs_csv << "parameter,value,seed,overall_auc,given_auc,missed_auc\n";
    for (const auto& row : rows)
        for (const auto& r : row.runs)
            runs_csv << parameter << ',' << row.value << ',' << r.seed << ',' << opt_str(r.report.overall_auc)
                     << ',' << opt_str(r.report.given_auc) << ',' << opt_str(r.report.missed_auc) << '\n';

    if (rows_out) *rows_out = std::move(rows);
    return 0;
}

}  // namespace spade
