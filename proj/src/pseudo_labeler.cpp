#include "spade/pseudo_labeler.hpp"

#include "spade/dataset.hpp"
#include "spade/thresholding.hpp"

#include <cmath>
#include <stdexcept>

namespace spade {

PseudoLabeler::PseudoLabeler(std::vector<GaussianOcc> occs, std::vector<double> eta_p,
                             std::vector<double> eta_n, bool majority_vote)
    : occs_(std::move(occs)), eta_p_(std::move(eta_p)), eta_n_(std::move(eta_n)),
      majority_vote_(majority_vote) {
    if (occs_.empty() || occs_.size() != eta_p_.size() || occs_.size() != eta_n_.size())
        throw std::invalid_argument("PseudoLabeler: occs/eta_p/eta_n must share length K >= 1");
    for (std::size_t i = 0; i < occs_.size(); ++i)
        if (!std::isfinite(eta_p_[i]) || !std::isfinite(eta_n_[i]))
            throw std::invalid_argument("PseudoLabeler: non-finite threshold at k=" + std::to_string(i));
}

PseudoLabeler PseudoLabeler::build(const Matrix& labeled_pos, const Matrix& labeled_neg,
                                   const Matrix& unlabeled, const PseudoLabelerConfig& cfg,
                                   std::uint64_t seed) {
    if (unlabeled.rows() == 0) throw std::invalid_argument("PseudoLabeler::build: unlabeled is empty");
    if (labeled_pos.rows() == 0 && labeled_neg.rows() == 0)
        throw std::invalid_argument("PseudoLabeler::build: both labeled sets are empty");
    if (cfg.k < 1) throw std::invalid_argument("PseudoLabeler::build: K must be >= 1");

    const std::size_t k = static_cast<std::size_t>(cfg.k);
    auto parts = partition_indices(static_cast<std::size_t>(unlabeled.rows()), k, seed);

    std::vector<GaussianOcc> occs;
    std::vector<double> eta_p(k), eta_n(k);
    occs.reserve(k);

    for (std::size_t i = 0; i < k; ++i) {
        Matrix fit_pool = select_rows(unlabeled, parts[i]);
        if (cfg.include_negatives_in_occ && labeled_neg.rows() > 0)
            fit_pool = vstack(fit_pool, labeled_neg);
        GaussianOcc occ = [&] {
            try {
                return GaussianOcc::fit(fit_pool, cfg.occ);
            } catch (const std::exception& e) {
                throw std::runtime_error("PseudoLabeler::build: OCC fit failed for k=" +
                                         std::to_string(i) + ": " + e.what());
            }
        }();

        ScoreSet u_scores = ScoreSet::from_vector(occ.score_rows(unlabeled));
        if (!cfg.use_partial_matching) {
            eta_p[i] = score_percentile_value(u_scores, cfg.fixed_pos_percentile);
            eta_n[i] = score_percentile_value(u_scores, cfg.fixed_neg_percentile);
        } else {
            // Partial matching against the labeled class when one is available;
            // Otsu on the unlabeled score distribution for the class without labels.
            if (labeled_pos.rows() > 0) {
                ScoreSet pos_scores = ScoreSet::from_vector(occ.score_rows(labeled_pos));
                eta_p[i] = partial_match_positive(pos_scores, u_scores);
            } else {
                eta_p[i] = otsu_threshold(u_scores);
            }
            if (labeled_neg.rows() > 0) {
                ScoreSet neg_scores = ScoreSet::from_vector(occ.score_rows(labeled_neg));
                eta_n[i] = partial_match_negative(neg_scores, u_scores);
            } else {
                eta_n[i] = otsu_threshold(u_scores);
            }
        }
        occs.push_back(std::move(occ));
    }
    return PseudoLabeler(std::move(occs), std::move(eta_p), std::move(eta_n), cfg.majority_vote);
}

PseudoLabeler::Verdict PseudoLabeler::assign_detail(const Vector& x) const {
    std::size_t pos_votes = 0, neg_votes = 0;
    for (std::size_t i = 0; i < occs_.size(); ++i) {
        double s = occs_[i].score(x);
        if (s > eta_p_[i]) ++pos_votes;   // strict, as printed
        if (s < eta_n_[i]) ++neg_votes;
    }
    bool pos, neg;
    if (majority_vote_) {
        pos = 2 * pos_votes > occs_.size();
        neg = 2 * neg_votes > occs_.size();
    } else {
        pos = pos_votes == occs_.size();
        neg = neg_votes == occs_.size();
    }
    if (pos && neg) return {kLabelUnlabeled, true};  // threshold inversion: stay unknown
    if (pos) return {kLabelAnomalous, false};
    if (neg) return {kLabelNormal, false};
    return {kLabelUnlabeled, false};
}

PseudoLabeler::BatchSummary PseudoLabeler::assign_batch(const Matrix& x) const {
    BatchSummary out;
    out.labels.reserve(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        Verdict v = assign_detail(x.row(r).transpose());
        out.labels.push_back(v.label);
        if (v.conflict) ++out.n_conflicts;
        if (v.label == kLabelAnomalous) ++out.n_pos;
        else if (v.label == kLabelNormal) ++out.n_neg;
        else ++out.n_unknown;
    }
    return out;
}

Matrix PseudoLabeler::score_matrix(const Matrix& x) const {
    Matrix s(x.rows(), static_cast<Eigen::Index>(occs_.size()));
    for (std::size_t i = 0; i < occs_.size(); ++i)
        s.col(static_cast<Eigen::Index>(i)) = occs_[i].score_rows(x);
    return s;
}

nlohmann::json PseudoLabeler::to_json() const {
    nlohmann::json j;
    j["k"] = occs_.size();
    j["majority_vote"] = majority_vote_;
    j["eta_p"] = eta_p_;
    j["eta_n"] = eta_n_;
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& o : occs_) arr.push_back(o.to_json());
    j["occs"] = arr;
    return j;
}

PseudoLabeler PseudoLabeler::from_json(const nlohmann::json& j) {
    std::vector<GaussianOcc> occs;
    for (const auto& jo : j.at("occs")) occs.push_back(GaussianOcc::from_json(jo));
    return PseudoLabeler(std::move(occs), j.at("eta_p").get<std::vector<double>>(),
                         j.at("eta_n").get<std::vector<double>>(), j.value("majority_vote", false));
}

}  // namespace spade
