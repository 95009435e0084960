#include "spade/occ.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace spade;

namespace {

Matrix gaussian_cloud(std::mt19937_64& rng, Eigen::Index n, Eigen::Index d, double sigma = 1.0) {
    std::normal_distribution<double> g(0.0, sigma);
    Matrix x(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < d; ++j) x(i, j) = g(rng);
    return x;
}

// Mahalanobis distance computed independently via an explicit inverse.
double mahalanobis_sq_oracle(const GaussianOcc& occ, const Vector& x) {
    Matrix reg = occ.covariance() + occ.eps() * Matrix::Identity(occ.dim(), occ.dim());
    Vector diff = x - occ.mean();
    return diff.dot(reg.inverse() * diff);
}

}  // namespace

TEST_CASE("fit recovers a standard normal cloud") {
    std::mt19937_64 rng(1);
    Matrix x = gaussian_cloud(rng, 10000, 2);
    GaussianOcc occ = GaussianOcc::fit(x);
    CHECK(std::abs(occ.mean()[0]) < 0.05);
    CHECK(std::abs(occ.mean()[1]) < 0.05);
    CHECK(std::abs(occ.covariance()(0, 0) - 1.0) < 0.1);
    CHECK(std::abs(occ.covariance()(1, 1) - 1.0) < 0.1);
    CHECK(occ.n_fit() == 10000);
}

TEST_CASE("degenerate identical rows still fit through regularization") {
    Matrix x(2, 3);
    x << 1.0, 2.0, 3.0, 1.0, 2.0, 3.0;
    GaussianOcc occ = GaussianOcc::fit(x);
    CHECK(occ.covariance().norm() == doctest::Approx(0.0));
    CHECK(occ.eps() > 0.0);
    CHECK(std::isfinite(occ.score(Vector::Zero(3))));
}

TEST_CASE("fit input validation") {
    Matrix one_row(1, 2);
    one_row << 0.0, 0.0;
    CHECK_THROWS_AS(GaussianOcc::fit(one_row), std::invalid_argument);

    Matrix with_nan(3, 2);
    with_nan.setZero();
    with_nan(1, 1) = std::nan("");
    CHECK_THROWS_AS(GaussianOcc::fit(with_nan), std::invalid_argument);
}

TEST_CASE("eps escalates until the factorization succeeds") {
    // Symmetric indefinite matrix (eigenvalues 3 and -2): every eps through 1
    // leaves a negative eigenvalue, so the loop must walk 1e-3 -> 10.
    Matrix m(2, 2);
    m << 0.5, 2.5, 2.5, 0.5;
    CholeskyResult r = regularized_cholesky(m, 1e-3, 20.0);
    CHECK(r.eps == doctest::Approx(10.0));
    CHECK(r.lower(0, 0) > 0.0);
    CHECK(r.lower(1, 1) > 0.0);

    // Cap below the smallest workable eps: escalation exhausts and reports.
    CHECK_THROWS_AS(regularized_cholesky(m, 1e-3, 5.0), std::runtime_error);

    // Exactly singular covariance from duplicated columns still fits even
    // with an absurdly small starting eps (escalating only if needed).
    std::mt19937_64 rng(2);
    Matrix base = gaussian_cloud(rng, 50, 1);
    Matrix x(50, 2);
    x.col(0) = base.col(0);
    x.col(1) = base.col(0);
    GaussianOcc::Options opts;
    opts.eps = 1e-300;
    GaussianOcc occ = GaussianOcc::fit(x, opts);
    CHECK(occ.eps() >= 1e-300);
    CHECK(std::isfinite(occ.score(Vector::Zero(2))));
}

TEST_CASE("score at the mean is the density normalization term") {
    std::mt19937_64 rng(3);
    Matrix x = gaussian_cloud(rng, 200, 4);
    GaussianOcc occ = GaussianOcc::fit(x);
    double expected = 0.5 * occ.log_det() + 2.0 * std::log(2.0 * std::numbers::pi);
    CHECK(occ.score(occ.mean()) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("one-dimensional unit variance: two sigma adds two") {
    // Variance exactly 1 after centering: values {-1, 1} with denominator n.
    Matrix x(2, 1);
    x << -1.0, 1.0;
    GaussianOcc occ = GaussianOcc::fit(x);
    Vector at = occ.mean();
    at[0] += 2.0;
    CHECK(occ.score(at) - occ.score(occ.mean()) == doctest::Approx(2.0).epsilon(1e-4));
}

TEST_CASE("equidistant points score equally") {
    std::mt19937_64 rng(4);
    Matrix x = gaussian_cloud(rng, 500, 2);
    GaussianOcc occ = GaussianOcc::fit(x);
    Vector a = occ.mean(), b = occ.mean();
    // Symmetric offsets have identical Mahalanobis distance.
    Vector offset(2);
    offset << 0.7, -1.3;
    a += offset;
    b -= offset;
    CHECK(occ.score(a) == doctest::Approx(occ.score(b)).epsilon(1e-12));
}

TEST_CASE("score ordering equals Mahalanobis ordering") {
    std::mt19937_64 rng(5);
    Matrix x = gaussian_cloud(rng, 300, 3);
    GaussianOcc occ = GaussianOcc::fit(x);
    std::normal_distribution<double> g(0.0, 3.0);
    for (int trial = 0; trial < 100; ++trial) {
        Vector p(3), q(3);
        for (int i = 0; i < 3; ++i) { p[i] = g(rng); q[i] = g(rng); }
        double mp = mahalanobis_sq_oracle(occ, p), mq = mahalanobis_sq_oracle(occ, q);
        double sp = occ.score(p), sq = occ.score(q);
        CHECK(((mp < mq) == (sp < sq)));
    }
}

TEST_CASE("translation of fit data and query leaves scores unchanged") {
    std::mt19937_64 rng(6);
    Matrix x = gaussian_cloud(rng, 400, 3);
    Vector shift(3);
    shift << 13.0, -7.5, 2.25;
    Matrix x_shifted = x.rowwise() + shift.transpose();

    GaussianOcc a = GaussianOcc::fit(x);
    GaussianOcc b = GaussianOcc::fit(x_shifted);
    std::normal_distribution<double> g(0.0, 2.0);
    for (int trial = 0; trial < 50; ++trial) {
        Vector q(3);
        for (int i = 0; i < 3; ++i) q[i] = g(rng);
        CHECK(a.score(q) == doctest::Approx(b.score(q + shift)).epsilon(1e-8));
    }
}

TEST_CASE("fit is bitwise deterministic") {
    std::mt19937_64 rng(7);
    Matrix x = gaussian_cloud(rng, 100, 3);
    GaussianOcc a = GaussianOcc::fit(x);
    GaussianOcc b = GaussianOcc::fit(x);
    CHECK(a.mean() == b.mean());
    CHECK(a.covariance() == b.covariance());
    CHECK(a.cholesky_factor() == b.cholesky_factor());
    CHECK(a.eps() == b.eps());
}

TEST_CASE("score_rows matches score") {
    std::mt19937_64 rng(8);
    Matrix x = gaussian_cloud(rng, 120, 4);
    GaussianOcc occ = GaussianOcc::fit(x);
    Matrix queries = gaussian_cloud(rng, 10, 4, 2.0);
    Vector batch = occ.score_rows(queries);
    for (Eigen::Index i = 0; i < queries.rows(); ++i)
        CHECK(batch[i] == doctest::Approx(occ.score(queries.row(i).transpose())).epsilon(1e-12));
}

TEST_CASE("dimension mismatches are rejected") {
    std::mt19937_64 rng(9);
    GaussianOcc occ = GaussianOcc::fit(gaussian_cloud(rng, 50, 2));
    CHECK_THROWS_AS(occ.score(Vector::Zero(3)), std::invalid_argument);
    CHECK_THROWS_AS(occ.score_rows(Matrix::Zero(4, 5)), std::invalid_argument);
}

TEST_CASE("json round trip preserves scores") {
    std::mt19937_64 rng(10);
    Matrix x = gaussian_cloud(rng, 80, 3);
    GaussianOcc occ = GaussianOcc::fit(x);
    GaussianOcc back = GaussianOcc::from_json(nlohmann::json::parse(occ.to_json().dump()));
    Matrix queries = gaussian_cloud(rng, 20, 3, 2.5);
    for (Eigen::Index i = 0; i < queries.rows(); ++i) {
        Vector q = queries.row(i).transpose();
        CHECK(std::abs(occ.score(q) - back.score(q)) < 1e-10);
    }
}

TEST_CASE("diagonal covariance option") {
    std::mt19937_64 rng(11);
    Matrix x = gaussian_cloud(rng, 200, 3);
    x.col(1) += 0.9 * x.col(0);  // correlate
    GaussianOcc::Options opts;
    opts.diagonal_covariance = true;
    GaussianOcc occ = GaussianOcc::fit(x, opts);
    for (Eigen::Index i = 0; i < 3; ++i)
        for (Eigen::Index j = 0; j < 3; ++j)
            if (i != j) CHECK(occ.covariance()(i, j) == 0.0);
}
