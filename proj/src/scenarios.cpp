#include "spade/scenarios.hpp"

#include "spade/neuralnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace spade {

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::size_t round_count(double frac, std::size_t n) {
    return static_cast<std::size_t>(std::llround(frac * static_cast<double>(n)));
}

/// Assembles a split from the chosen labeled indices: labeled rows keep their
/// ground truth, every other row becomes unlabeled with truth moved to the
/// shadow vectors.
ScenarioSplit make_split(const Dataset& train, const std::vector<std::size_t>& labeled_idx,
                         std::string generator, std::uint64_t seed) {
    std::vector<bool> is_labeled(train.size(), false);
    for (std::size_t i : labeled_idx) is_labeled[i] = true;

    ScenarioSplit split;
    split.generator = std::move(generator);
    split.seed = seed;
    split.labeled = Dataset(train.name + "_labeled", train.dim);
    split.labeled.feature_names = train.feature_names;
    split.unlabeled = Dataset(train.name + "_unlabeled", train.dim);
    split.unlabeled.feature_names = train.feature_names;

    for (std::size_t i = 0; i < train.size(); ++i) {
        if (is_labeled[i]) {
            split.labeled.samples.push_back(train[i]);
        } else {
            Sample s = train[i];
            split.unlabeled_true_labels.push_back(s.label);
            split.unlabeled_true_types.push_back(s.anomaly_type.value_or(-1));
            s.label = kLabelUnlabeled;
            s.anomaly_type.reset();
            split.unlabeled.samples.push_back(std::move(s));
        }
    }
    return split;
}

struct Oracle {
    nn::LogisticModel model;
    Vector proba;  // anomaly probability per train row
};

Oracle fit_oracle(const Dataset& train) {
    // z-scored internally for conditioning; the oracle is discarded after use.
    Matrix x = Scaler::fit(train.feature_matrix()).transform(train.feature_matrix());
    Oracle o;
    o.model = nn::fit_logistic(x, train.labels());
    o.proba = nn::predict_proba(o.model, x);
    return o;
}

void check_label_frac(double frac, const char* op) {
    if (!(frac > 0.0 && frac <= 1.0))
        throw std::invalid_argument(std::string(op) + ": fraction must be in (0,1]");
}

std::set<int> labeled_types(const Dataset& labeled) {
    return labeled.present_anomaly_types();
}

}  // namespace

ScenarioSplit scenario_new_anomalies(const Dataset& train, const std::set<int>& given_types,
                                     double label_frac, std::uint64_t seed) {
    check_label_frac(label_frac, "scenario_new_anomalies");
    if (given_types.empty()) throw std::invalid_argument("scenario_new_anomalies: given_types is empty");
    std::set<int> present = train.present_anomaly_types();
    for (int t : given_types)
        if (!present.count(t))
            throw std::invalid_argument("scenario_new_anomalies: anomaly type " + std::to_string(t) +
                                        " not present in the training data");

    std::vector<std::size_t> eligible;  // normals plus given-type anomalies
    for (std::size_t i = 0; i < train.size(); ++i) {
        const Sample& s = train[i];
        if (s.label == kLabelNormal || (s.label == kLabelAnomalous && s.anomaly_type &&
                                        given_types.count(*s.anomaly_type)))
            eligible.push_back(i);
    }

    std::size_t n_label = round_count(label_frac, train.size());
    if (n_label == 0 || n_label > eligible.size())
        throw std::invalid_argument("scenario_new_anomalies: label_frac selects " + std::to_string(n_label) +
                                    " samples from an eligible pool of " + std::to_string(eligible.size()));
    Rng rng = make_rng(seed, /*stream=*/3);
    std::vector<std::size_t> pick = sample_without_replacement(eligible.size(), n_label, rng);
    std::vector<std::size_t> labeled_idx;
    labeled_idx.reserve(n_label);
    for (std::size_t p : pick) labeled_idx.push_back(eligible[p]);

    ScenarioSplit split = make_split(train, labeled_idx, "new_anomalies", seed);
    bool any_anomaly = false;
    for (const auto& s : split.labeled.samples) any_anomaly |= s.label == kLabelAnomalous;
    if (!any_anomaly)
        throw std::runtime_error("scenario_new_anomalies: labeled set has no anomalies for seed " +
                                 std::to_string(seed) + "; increase label_frac");
    split.given_types = given_types;
    split.fractions["label_frac"] = label_frac;
    return split;
}

ScenarioSplit scenario_easiness(const Dataset& train, double top_frac, std::uint64_t seed) {
    check_label_frac(top_frac, "scenario_easiness");
    Oracle oracle = fit_oracle(train);

    std::vector<std::size_t> labeled_idx;
    std::vector<int> classes = {kLabelNormal, kLabelAnomalous};
    for (int cls : classes) {
        std::vector<std::size_t> correct;
        std::size_t class_count = 0;
        for (std::size_t i = 0; i < train.size(); ++i) {
            if (train[i].label != cls) continue;
            ++class_count;
            int pred = oracle.proba[static_cast<Eigen::Index>(i)] >= 0.5 ? 1 : 0;
            if (pred == cls) correct.push_back(i);
        }
        auto confidence = [&](std::size_t i) {
            double p = oracle.proba[static_cast<Eigen::Index>(i)];
            return cls == kLabelAnomalous ? p : 1.0 - p;
        };
        std::sort(correct.begin(), correct.end(), [&](std::size_t a, std::size_t b) {
            double ca = confidence(a), cb = confidence(b);
            if (ca != cb) return ca > cb;
            return a < b;  // stable under confidence ties
        });
        std::size_t n_take = std::min(round_count(top_frac, class_count), correct.size());
        labeled_idx.insert(labeled_idx.end(), correct.begin(),
                           correct.begin() + static_cast<std::ptrdiff_t>(n_take));
    }
    std::sort(labeled_idx.begin(), labeled_idx.end());
    if (labeled_idx.empty()) throw std::runtime_error("scenario_easiness: no correctly predicted samples");

    ScenarioSplit split = make_split(train, labeled_idx, "easiness", seed);
    split.given_types = labeled_types(split.labeled);
    split.fractions["top_frac"] = top_frac;
    return split;
}

ScenarioSplit scenario_pu(const Dataset& train, const std::set<int>& given_types,
                          double label_frac, std::uint64_t seed) {
    check_label_frac(label_frac, "scenario_pu");
    if (given_types.empty()) throw std::invalid_argument("scenario_pu: given_types is empty");
    std::set<int> present = train.present_anomaly_types();
    for (int t : given_types)
        if (!present.count(t))
            throw std::invalid_argument("scenario_pu: anomaly type " + std::to_string(t) +
                                        " not present in the training data");

    std::vector<std::size_t> eligible;  // given-type anomalies only
    for (std::size_t i = 0; i < train.size(); ++i) {
        const Sample& s = train[i];
        if (s.label == kLabelAnomalous && s.anomaly_type && given_types.count(*s.anomaly_type))
            eligible.push_back(i);
    }
    std::size_t n_label = static_cast<std::size_t>(label_frac * static_cast<double>(eligible.size()));
    if (n_label == 0)
        throw std::invalid_argument("scenario_pu: label_frac selects no anomalies (pool size " +
                                    std::to_string(eligible.size()) + ")");

    Rng rng = make_rng(seed, /*stream=*/4);
    std::vector<std::size_t> pick = sample_without_replacement(eligible.size(), n_label, rng);
    std::vector<std::size_t> labeled_idx;
    labeled_idx.reserve(n_label);
    for (std::size_t p : pick) labeled_idx.push_back(eligible[p]);

    ScenarioSplit split = make_split(train, labeled_idx, "pu", seed);
    split.given_types = given_types;
    split.fractions["label_frac"] = label_frac;
    return split;
}

ScenarioSplit scenario_high_risk(const Dataset& train, double risk_frac,
                                 double label_frac_of_risky, std::uint64_t seed) {
    check_label_frac(risk_frac, "scenario_high_risk");
    check_label_frac(label_frac_of_risky, "scenario_high_risk");
    Oracle oracle = fit_oracle(train);

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        double sa = oracle.proba[static_cast<Eigen::Index>(a)];
        double sb = oracle.proba[static_cast<Eigen::Index>(b)];
        if (sa != sb) return sa > sb;
        return a < b;
    });
    std::size_t n_risky = round_count(risk_frac, train.size());
    if (n_risky == 0) throw std::invalid_argument("scenario_high_risk: risky set is empty");
    order.resize(n_risky);

    std::size_t n_label = round_count(label_frac_of_risky, n_risky);
    if (n_label == 0) throw std::invalid_argument("scenario_high_risk: labeled set is empty");
    Rng rng = make_rng(seed, /*stream=*/5);
    std::vector<std::size_t> pick = sample_without_replacement(n_risky, n_label, rng);
    std::vector<std::size_t> labeled_idx;
    labeled_idx.reserve(n_label);
    for (std::size_t p : pick) labeled_idx.push_back(order[p]);
    std::sort(labeled_idx.begin(), labeled_idx.end());

    ScenarioSplit split = make_split(train, labeled_idx, "high_risk", seed);
    split.given_types = labeled_types(split.labeled);
    split.fractions["risk_frac"] = risk_frac;
    split.fractions["label_frac_of_risky"] = label_frac_of_risky;
    return split;
}

ScenarioSplit temporal_split(const Dataset& ds, double test_frac, double label_frac) {
    if (!(test_frac > 0.0 && test_frac < 1.0))
        throw std::invalid_argument("temporal_split: test_frac must be in (0,1)");
    check_label_frac(label_frac, "temporal_split");
    for (std::size_t i = 0; i < ds.size(); ++i)
        if (!ds[i].timestamp)
            throw std::invalid_argument("temporal_split: sample " + std::to_string(i) + " has no timestamp");

    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return *ds[a].timestamp < *ds[b].timestamp; });

    std::size_t n_test = round_count(test_frac, ds.size());
    if (n_test == 0 || n_test >= ds.size()) throw std::invalid_argument("temporal_split: degenerate test size");
    std::size_t n_rest = ds.size() - n_test;
    std::size_t n_label = round_count(label_frac, n_rest);
    if (n_label == 0 || n_label >= n_rest)
        throw std::invalid_argument("temporal_split: degenerate labeled size");

    std::vector<std::size_t> labeled_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_label));
    std::vector<std::size_t> test_idx(order.begin() + static_cast<std::ptrdiff_t>(n_rest), order.end());
    std::sort(test_idx.begin(), test_idx.end());

    // Build the split over the training portion only, then attach the test set.
    std::vector<std::size_t> train_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_rest));
    std::sort(train_idx.begin(), train_idx.end());
    Dataset train = ds.subset(train_idx);

    // Map labeled indices into the train subset's positions.
    std::vector<std::size_t> pos_of(ds.size(), SIZE_MAX);
    for (std::size_t p = 0; p < train_idx.size(); ++p) pos_of[train_idx[p]] = p;
    std::vector<std::size_t> labeled_pos;
    labeled_pos.reserve(labeled_idx.size());
    for (std::size_t i : labeled_idx) labeled_pos.push_back(pos_of[i]);
    std::sort(labeled_pos.begin(), labeled_pos.end());

    ScenarioSplit split = make_split(train, labeled_pos, "temporal", /*seed=*/0);
    split.test = ds.subset(test_idx);
    split.given_types = labeled_types(split.labeled);
    split.fractions["test_frac"] = test_frac;
    split.fractions["label_frac"] = label_frac;
    return split;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

void write_dataset_csv(const Dataset& ds, const std::filesystem::path& path, bool shadow,
                       const std::vector<int>* true_labels, const std::vector<int>* true_types) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_scenario: cannot open '" + path.string() + "'");
    bool has_ts = !ds.samples.empty() && ds.samples.front().timestamp.has_value();

    std::vector<std::string> header = ds.feature_names;
    header.push_back("label");
    header.push_back("anomaly_type");
    if (shadow) {
        header.push_back("shadow_label");
        header.push_back("shadow_type");
    }
    if (has_ts) header.push_back("timestamp");
    out << csv_encode_row(header) << '\n';

    for (std::size_t i = 0; i < ds.size(); ++i) {
        const Sample& s = ds[i];
        std::vector<std::string> row;
        row.reserve(header.size());
        for (double f : s.features) row.push_back(fmt(f));
        row.push_back(std::to_string(s.label));
        row.push_back(s.anomaly_type ? std::to_string(*s.anomaly_type) : "");
        if (shadow) {
            row.push_back(std::to_string((*true_labels)[i]));
            row.push_back(std::to_string((*true_types)[i]));
        }
        if (has_ts) row.push_back(s.timestamp ? fmt(*s.timestamp) : "");
        out << csv_encode_row(row) << '\n';
    }
}

Dataset read_dataset_csv(const std::filesystem::path& path, const std::vector<std::string>& feature_names,
                         bool shadow, std::vector<int>* true_labels, std::vector<int>* true_types) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_scenario: cannot open '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("load_scenario: '" + path.string() + "' is empty");
    std::vector<std::string> header = csv_decode_row(line);

    auto col = [&](const std::string& name) -> std::ptrdiff_t {
        auto it = std::find(header.begin(), header.end(), name);
        return it == header.end() ? -1 : it - header.begin();
    };
    std::vector<std::size_t> feat_idx;
    for (const auto& f : feature_names) {
        std::ptrdiff_t c = col(f);
        if (c < 0) throw std::runtime_error("load_scenario: feature column '" + f + "' missing in " + path.string());
        feat_idx.push_back(static_cast<std::size_t>(c));
    }
    std::ptrdiff_t label_c = col("label"), type_c = col("anomaly_type"), ts_c = col("timestamp");
    std::ptrdiff_t sl_c = col("shadow_label"), st_c = col("shadow_type");
    if (label_c < 0 || type_c < 0)
        throw std::runtime_error("load_scenario: '" + path.string() + "' lacks label/anomaly_type columns");
    if (shadow && (sl_c < 0 || st_c < 0))
        throw std::runtime_error("load_scenario: '" + path.string() + "' lacks shadow columns");

    Dataset ds(path.stem().string(), feature_names.size());
    ds.feature_names = feature_names;
    std::size_t row_no = 0;
    while (std::getline(in, line)) {
        ++row_no;
        if (line.empty() && in.eof()) break;
        std::vector<std::string> fields = csv_decode_row(line);
        if (fields.size() != header.size())
            throw std::runtime_error("load_scenario: ragged row " + std::to_string(row_no) + " in " + path.string());
        Sample s;
        for (std::size_t j : feat_idx) s.features.push_back(std::stod(fields[j]));
        s.label = std::stoi(fields[static_cast<std::size_t>(label_c)]);
        const std::string& t = fields[static_cast<std::size_t>(type_c)];
        if (!t.empty()) s.anomaly_type = std::stoi(t);
        if (ts_c >= 0) {
            const std::string& ts = fields[static_cast<std::size_t>(ts_c)];
            if (!ts.empty()) s.timestamp = std::stod(ts);
        }
        if (shadow) {
            true_labels->push_back(std::stoi(fields[static_cast<std::size_t>(sl_c)]));
            true_types->push_back(std::stoi(fields[static_cast<std::size_t>(st_c)]));
        }
        ds.push_back(std::move(s));
    }
    return ds;
}

}  // namespace

nlohmann::json scenario_manifest(const ScenarioSplit& split) {
    nlohmann::json j;
    j["generator"] = split.generator;
    j["seed"] = split.seed;
    j["given_types"] = std::vector<int>(split.given_types.begin(), split.given_types.end());
    j["fractions"] = split.fractions;
    j["feature_names"] = split.labeled.feature_names;
    j["dim"] = split.labeled.dim;
    j["counts"] = {{"labeled", split.labeled.size()},
                   {"unlabeled", split.unlabeled.size()},
                   {"test", split.test.size()}};
    std::size_t pos = 0;
    for (const auto& s : split.labeled.samples) pos += s.label == kLabelAnomalous ? 1 : 0;
    j["labeled_positives"] = pos;
    j["labeled_negatives"] = split.labeled.size() - pos;
    return j;
}

void save_scenario(const ScenarioSplit& split, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_dataset_csv(split.labeled, dir / "labeled.csv", false, nullptr, nullptr);
    write_dataset_csv(split.unlabeled, dir / "unlabeled.csv", true, &split.unlabeled_true_labels,
                      &split.unlabeled_true_types);
    Dataset test = split.test;
    if (test.feature_names.empty()) {  // empty test still needs a parseable header
        test.dim = split.labeled.dim;
        test.feature_names = split.labeled.feature_names;
    }
    write_dataset_csv(test, dir / "test.csv", false, nullptr, nullptr);
    std::ofstream out(dir / "manifest.json");
    if (!out) throw std::runtime_error("save_scenario: cannot write manifest in '" + dir.string() + "'");
    out << scenario_manifest(split).dump(2) << '\n';
}

ScenarioSplit load_scenario(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw std::runtime_error("load_scenario: no manifest.json in '" + dir.string() + "'");
    nlohmann::json j = nlohmann::json::parse(in);

    ScenarioSplit split;
    split.generator = j.at("generator").get<std::string>();
    split.seed = j.at("seed").get<std::uint64_t>();
    for (int t : j.at("given_types").get<std::vector<int>>()) split.given_types.insert(t);
    split.fractions = j.at("fractions").get<std::map<std::string, double>>();
    auto features = j.at("feature_names").get<std::vector<std::string>>();

    split.labeled = read_dataset_csv(dir / "labeled.csv", features, false, nullptr, nullptr);
    split.unlabeled = read_dataset_csv(dir / "unlabeled.csv", features, true,
                                       &split.unlabeled_true_labels, &split.unlabeled_true_types);
    split.test = read_dataset_csv(dir / "test.csv", features, false, nullptr, nullptr);
    return split;
}

}  // namespace spade
