#pragma once

#include "spade/common.hpp"
#include "spade/occ.hpp"

#include <json.hpp>

#include <cstdint>
#include <vector>

namespace spade {

struct PseudoLabelerConfig {
    int k = 5;
    bool use_partial_matching = true;     // false: fixed-percentile thresholds
    double fixed_pos_percentile = 90.0;
    double fixed_neg_percentile = 50.0;
    bool include_negatives_in_occ = true; // each OCC trains on its subset + all labeled negatives
    bool majority_vote = false;           // unanimous consensus is the default contract
    GaussianOcc::Options occ;
};

/// Ensemble-of-OCCs pseudo-labeler: K Gaussian estimators fit on disjoint
/// unlabeled subsets (each pooled with the labeled negatives), one positive
/// and one negative threshold per estimator. assign() returns 1 only when
/// every estimator scores above its positive threshold, 0 only when every
/// estimator scores below its negative threshold, and -1 otherwise.
class PseudoLabeler {
public:
    static PseudoLabeler build(const Matrix& labeled_pos, const Matrix& labeled_neg,
                               const Matrix& unlabeled, const PseudoLabelerConfig& cfg,
                               std::uint64_t seed);

    /// Direct construction from fitted parts (tests, deserialization).
    PseudoLabeler(std::vector<GaussianOcc> occs, std::vector<double> eta_p, std::vector<double> eta_n,
                  bool majority_vote = false);

    struct Verdict {
        int label;      // {0, 1, -1}
        bool conflict;  // both unanimous conditions held simultaneously
    };
    Verdict assign_detail(const Vector& x) const;
    int assign(const Vector& x) const { return assign_detail(x).label; }

    struct BatchSummary {
        std::vector<int> labels;
        std::size_t n_pos = 0;
        std::size_t n_neg = 0;
        std::size_t n_unknown = 0;
        std::size_t n_conflicts = 0;
    };
    BatchSummary assign_batch(const Matrix& x) const;

    std::size_t k() const { return occs_.size(); }
    const std::vector<GaussianOcc>& occs() const { return occs_; }
    const std::vector<double>& eta_p() const { return eta_p_; }
    const std::vector<double>& eta_n() const { return eta_n_; }
    bool majority_vote() const { return majority_vote_; }

    /// n x K matrix of per-estimator scores.
    Matrix score_matrix(const Matrix& x) const;

    nlohmann::json to_json() const;
    static PseudoLabeler from_json(const nlohmann::json& j);

private:
    std::vector<GaussianOcc> occs_;
    std::vector<double> eta_p_;
    std::vector<double> eta_n_;
    bool majority_vote_ = false;
};

}  // namespace spade
