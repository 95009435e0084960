#pragma once

#include "spade/common.hpp"

#include <json.hpp>

namespace spade {

struct CholeskyResult {
    Matrix lower;
    double log_det = 0.0;
    double eps = 0.0;  // regularizer that produced a valid factor
};

/// Lower-triangular factorization of (m + eps I), escalating eps tenfold up
/// to eps_cap while the factorization is invalid; throws past the cap.
CholeskyResult regularized_cholesky(const Matrix& m, double eps_start, double eps_cap);

/// Gaussian Distribution Estimator one-class classifier: a single
/// multivariate Gaussian fit to the training pool; the anomaly score of x is
/// its negative log-density under the regularized covariance,
///   score(x) = 1/2 m(x) + 1/2 log|Sigma + eps I| + d/2 log(2 pi),
/// with m(x) the squared Mahalanobis distance. Immutable once fitted.
class GaussianOcc {
public:
    struct Options {
        double eps = 0.0;                 // 0 = 1e-6 relative to mean diag(Sigma)
        bool diagonal_covariance = false;
    };

    GaussianOcc() = default;  // unfitted; score() rejects until assigned from fit()

    static GaussianOcc fit(const Matrix& x, const Options& opts);
    static GaussianOcc fit(const Matrix& x) { return fit(x, Options{}); }

    double score(const Vector& x) const;
    Vector score_rows(const Matrix& x) const;

    Eigen::Index dim() const { return mean_.size(); }
    std::size_t n_fit() const { return n_fit_; }
    double eps() const { return eps_; }
    double log_det() const { return log_det_; }
    const Vector& mean() const { return mean_; }
    const Matrix& covariance() const { return covariance_; }
    const Matrix& cholesky_factor() const { return chol_; }

    nlohmann::json to_json() const;
    static GaussianOcc from_json(const nlohmann::json& j);

private:
    void factorize();  // LLT of covariance_ + eps_ I; throws if invalid

    Vector mean_;
    Matrix covariance_;  // sample covariance (denominator n), unregularized
    Matrix chol_;        // lower factor of covariance_ + eps_ I
    double eps_ = 0.0;
    double log_det_ = 0.0;
    std::size_t n_fit_ = 0;
};

}  // namespace spade
