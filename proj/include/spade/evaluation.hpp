#pragma once

#include "spade/common.hpp"
#include "spade/dataset.hpp"

#include <json.hpp>

#include <optional>
#include <set>
#include <vector>

namespace spade {

/// Rank-based AUC: the probability that a random anomaly outscores a random
/// normal, with ties counted one half. Throws if only one class is present.
double auc(const Vector& scores, const std::vector<int>& labels);

struct CurvePoint {
    double percentile;
    double precision;
    std::size_t support;
};

struct PrecisionCurves {
    std::vector<CurvePoint> anomalous;   // precision of "anomalous" above each percentile
    std::vector<CurvePoint> normal;      // precision of "normal" below each percentile
    std::vector<double> eta_p_percentiles;  // per estimator, in percentile space
    std::vector<double> eta_n_percentiles;
};

struct EvalReport {
    std::optional<double> overall_auc, given_auc, missed_auc;
    std::optional<double> overall_std, given_std, missed_std;
    int n_seeds = 1;
    std::optional<PrecisionCurves> curves;

    nlohmann::json to_json() const;
};

/// Overall / given-types / missed-types AUC on the test set; a side with no
/// anomalies is reported absent rather than zero.
EvalReport evaluate_splits(const Vector& scores, const Dataset& test, const std::set<int>& given_types);

std::vector<double> default_percentile_grid();

/// Pseudo-labeler precision against percentile thresholds: for each grid
/// point p, the precision of calling "anomalous" every unlabeled sample whose
/// mean-over-estimators score percentile exceeds p (and "normal" below p).
/// occ_scores is n x K; true_labels is the evaluation-only shadow truth.
PrecisionCurves precision_curve(const Matrix& occ_scores, const std::vector<int>& true_labels,
                                const std::vector<double>& eta_p, const std::vector<double>& eta_n,
                                const std::vector<double>& grid = default_percentile_grid());

/// Mean and population standard deviation per metric across runs.
EvalReport aggregate_runs(const std::vector<EvalReport>& reports);

}  // namespace spade
