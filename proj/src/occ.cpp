#include "spade/occ.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <numbers>

namespace spade {

namespace {

constexpr double kRelativeEpsDefault = 1e-6;
constexpr double kRelativeEpsMax = 1e-2;

bool try_llt(const Matrix& m, Matrix& lower, double& log_det) {
    Eigen::LLT<Matrix> llt(m);
    if (llt.info() != Eigen::Success) return false;
    lower = llt.matrixL();
    log_det = 0.0;
    for (Eigen::Index i = 0; i < lower.rows(); ++i) {
        double d = lower(i, i);
        if (!(d > 0.0) || !std::isfinite(d)) return false;
        log_det += 2.0 * std::log(d);
    }
    return true;
}

}  // namespace

CholeskyResult regularized_cholesky(const Matrix& m, double eps_start, double eps_cap) {
    if (m.rows() != m.cols()) throw std::invalid_argument("regularized_cholesky: matrix must be square");
    if (!(eps_start > 0.0)) throw std::invalid_argument("regularized_cholesky: eps_start must be positive");
    CholeskyResult out;
    out.eps = eps_start;
    while (true) {
        Matrix reg = m + out.eps * Matrix::Identity(m.rows(), m.cols());
        if (try_llt(reg, out.lower, out.log_det)) return out;
        double next = out.eps * 10.0;
        if (next > eps_cap)
            throw std::runtime_error("regularized_cholesky: factorization failed up to eps=" +
                                     std::to_string(out.eps));
        out.eps = next;
    }
}

GaussianOcc GaussianOcc::fit(const Matrix& x, const Options& opts) {
    if (x.rows() < 2) throw std::invalid_argument("GaussianOcc::fit: need at least 2 samples");
    if (x.cols() < 1) throw std::invalid_argument("GaussianOcc::fit: need at least 1 feature");
    if (!x.allFinite()) throw std::invalid_argument("GaussianOcc::fit: non-finite input");
    if (opts.eps < 0.0) throw std::invalid_argument("GaussianOcc::fit: eps must be positive");

    GaussianOcc occ;
    occ.n_fit_ = static_cast<std::size_t>(x.rows());
    occ.mean_ = x.colwise().mean();
    Matrix centered = x.rowwise() - occ.mean_.transpose();
    occ.covariance_ = (centered.transpose() * centered) / static_cast<double>(x.rows());
    if (opts.diagonal_covariance) {
        Vector diag = occ.covariance_.diagonal();
        occ.covariance_ = diag.asDiagonal();
    }

    double scale = occ.covariance_.diagonal().mean();
    if (!(scale > 0.0)) scale = 1.0;
    double eps_start = opts.eps > 0.0 ? opts.eps : kRelativeEpsDefault * scale;

    CholeskyResult chol = [&] {
        try {
            return regularized_cholesky(occ.covariance_, eps_start, kRelativeEpsMax * scale);
        } catch (const std::runtime_error& e) {
            throw std::runtime_error(std::string("GaussianOcc::fit: ") + e.what());
        }
    }();
    occ.chol_ = std::move(chol.lower);
    occ.log_det_ = chol.log_det;
    occ.eps_ = chol.eps;
    return occ;
}

void GaussianOcc::factorize() {
    Matrix reg = covariance_ + eps_ * Matrix::Identity(covariance_.rows(), covariance_.cols());
    if (!try_llt(reg, chol_, log_det_))
        throw std::runtime_error("GaussianOcc: stored covariance is not factorizable");
}

double GaussianOcc::score(const Vector& x) const {
    if (x.size() != mean_.size())
        throw std::invalid_argument("GaussianOcc::score: dimension mismatch (" + std::to_string(x.size()) +
                                    " vs " + std::to_string(mean_.size()));
    Vector z = chol_.triangularView<Eigen::Lower>().solve(x - mean_);
    double mahalanobis_sq = z.squaredNorm();
    double d = static_cast<double>(mean_.size());
    return 0.5 * mahalanobis_sq + 0.5 * log_det_ + 0.5 * d * std::log(2.0 * std::numbers::pi);
}

Vector GaussianOcc::score_rows(const Matrix& x) const {
    if (x.cols() != mean_.size()) throw std::invalid_argument("GaussianOcc::score_rows: dimension mismatch");
    Matrix centered = (x.rowwise() - mean_.transpose()).transpose();  // d x n
    Matrix z = chol_.triangularView<Eigen::Lower>().solve(centered);
    double d = static_cast<double>(mean_.size());
    double offset = 0.5 * log_det_ + 0.5 * d * std::log(2.0 * std::numbers::pi);
    return (0.5 * z.colwise().squaredNorm().transpose().array() + offset).matrix();
}

nlohmann::json GaussianOcc::to_json() const {
    nlohmann::json j;
    j["mean"] = std::vector<double>(mean_.data(), mean_.data() + mean_.size());
    std::vector<std::vector<double>> cov(static_cast<std::size_t>(covariance_.rows()));
    for (Eigen::Index i = 0; i < covariance_.rows(); ++i)
        cov[static_cast<std::size_t>(i)] =
            std::vector<double>(covariance_.row(i).begin(), covariance_.row(i).end());
    j["covariance"] = cov;
    j["eps"] = eps_;
    j["n_fit"] = n_fit_;
    return j;
}

GaussianOcc GaussianOcc::from_json(const nlohmann::json& j) {
    GaussianOcc occ;
    std::vector<double> mean = j.at("mean").get<std::vector<double>>();
    occ.mean_ = Eigen::Map<const Vector>(mean.data(), static_cast<Eigen::Index>(mean.size()));
    auto cov = j.at("covariance").get<std::vector<std::vector<double>>>();
    Eigen::Index d = static_cast<Eigen::Index>(cov.size());
    occ.covariance_.resize(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
        if (static_cast<Eigen::Index>(cov[static_cast<std::size_t>(i)].size()) != d)
            throw std::invalid_argument("GaussianOcc::from_json: covariance is not square");
        for (Eigen::Index k = 0; k < d; ++k)
            occ.covariance_(i, k) = cov[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
    }
    occ.eps_ = j.at("eps").get<double>();
    occ.n_fit_ = j.value("n_fit", std::size_t{0});
    occ.factorize();
    return occ;
}

}  // namespace spade
