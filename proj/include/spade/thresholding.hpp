#pragma once

#include "spade/common.hpp"

#include <filesystem>
#include <vector>

namespace spade {

/// Nonempty set of finite anomaly scores, kept sorted ascending.
class ScoreSet {
public:
    explicit ScoreSet(std::vector<double> values);
    static ScoreSet from_vector(const Vector& v);

    const std::vector<double>& values() const { return values_; }
    std::size_t size() const { return values_.size(); }
    double min() const { return values_.front(); }
    double max() const { return values_.back(); }

private:
    std::vector<double> values_;
};

/// Wasserstein-1 distance between the empirical distributions of a and b,
/// i.e. the integral over q in (0,1) of |Fa^-1(q) - Fb^-1(q)| evaluated on
/// the merged quantile breakpoints. Equal sizes reduce to the mean absolute
/// difference of the sorted values.
double wasserstein1(const ScoreSet& a, const ScoreSet& b);

/// Candidate thresholds scanned by partial matching: midpoints between
/// consecutive distinct unlabeled scores, plus one point below the minimum
/// and one above the maximum.
std::vector<double> candidate_thresholds(const ScoreSet& unlabeled);

/// One scanned candidate; distance is +inf when the thresholded subset is empty.
struct MatchPoint {
    double eta;
    double distance;
    std::size_t subset_size;
};

/// Threshold minimizing W1 between the labeled-positive score distribution
/// and {u in unlabeled : u > eta}. Ties resolve to the larger eta.
double partial_match_positive(const ScoreSet& labeled_pos, const ScoreSet& unlabeled,
                              std::vector<MatchPoint>* curve = nullptr);

/// Mirror image: subset {u < eta}, ties resolve to the smaller eta.
double partial_match_negative(const ScoreSet& labeled_neg, const ScoreSet& unlabeled,
                              std::vector<MatchPoint>* curve = nullptr);

/// Otsu's method on an equal-width histogram over [min, max]: the interior
/// bin edge maximizing between-class variance (smallest such edge on ties).
double otsu_threshold(const ScoreSet& scores, int bins = 256);

/// Linear-interpolation quantile of a score set, percentile in [0, 100].
double score_percentile_value(const ScoreSet& scores, double percentile);

void write_matching_curve_csv(const std::filesystem::path& path, const std::vector<MatchPoint>& curve);

}  // namespace spade
