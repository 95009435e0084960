#pragma once

#include "spade/dataset.hpp"

#include <json.hpp>

#include <map>
#include <set>
#include <string>

namespace spade {

/// One labeled/unlabeled/test experiment instance. The unlabeled member
/// carries label -1 and no anomaly type; its ground truth lives only in the
/// shadow vectors below, which exist for the evaluation module and must never
/// feed training code.
struct ScenarioSplit {
    Dataset labeled;
    Dataset unlabeled;
    Dataset test;  // attached by the caller; generators leave it empty
    std::set<int> given_types;
    std::uint64_t seed = 0;
    std::string generator;
    std::map<std::string, double> fractions;

    // Evaluation-only ground truth for the unlabeled rows.
    std::vector<int> unlabeled_true_labels;
    std::vector<int> unlabeled_true_types;
};

/// Labeled = label_frac of train drawn from normals and the given anomaly
/// types; anomaly types outside given_types appear only in the unlabeled set.
ScenarioSplit scenario_new_anomalies(const Dataset& train, const std::set<int>& given_types,
                                     double label_frac, std::uint64_t seed);

/// Labels the per-class most confidently (and correctly) classified samples
/// of a logistic-regression oracle trained on the full ground truth.
ScenarioSplit scenario_easiness(const Dataset& train, double top_frac, std::uint64_t seed);

/// Positive-unlabeled variant: labeled = label_frac of the given-type
/// anomalies, no normals labeled.
ScenarioSplit scenario_pu(const Dataset& train, const std::set<int>& given_types,
                          double label_frac, std::uint64_t seed);

/// Labels a uniform fraction of the oracle's top-risk_frac scored samples.
ScenarioSplit scenario_high_risk(const Dataset& train, double risk_frac,
                                 double label_frac_of_risky, std::uint64_t seed);

/// Timestamp-ordered split: newest test_frac to test, oldest label_frac of
/// the remainder labeled, middle unlabeled. Equal timestamps fall back to
/// stable original order.
ScenarioSplit temporal_split(const Dataset& ds, double test_frac, double label_frac);

void save_scenario(const ScenarioSplit& split, const std::filesystem::path& dir);
ScenarioSplit load_scenario(const std::filesystem::path& dir);

nlohmann::json scenario_manifest(const ScenarioSplit& split);

}  // namespace spade
