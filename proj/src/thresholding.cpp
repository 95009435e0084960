#include "spade/thresholding.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace spade {

ScoreSet::ScoreSet(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) throw std::invalid_argument("ScoreSet: empty");
    for (double v : values_)
        if (!std::isfinite(v)) throw std::invalid_argument("ScoreSet: non-finite score");
    std::sort(values_.begin(), values_.end());
}

ScoreSet ScoreSet::from_vector(const Vector& v) {
    return ScoreSet(std::vector<double>(v.data(), v.data() + v.size()));
}

namespace {

// W1 between two sorted ranges. Breakpoints of the two empirical quantile
// functions are compared exactly over the common denominator na*nb.
double w1_sorted(const double* a, std::size_t na, const double* b, std::size_t nb) {
    const double denom = static_cast<double>(na) * static_cast<double>(nb);
    std::size_t ia = 0, ib = 0;
    std::uint64_t c_prev = 0;
    double total = 0.0;
    while (ia < na && ib < nb) {
        std::uint64_t ca = static_cast<std::uint64_t>(ia + 1) * nb;
        std::uint64_t cb = static_cast<std::uint64_t>(ib + 1) * na;
        std::uint64_t c = std::min(ca, cb);
        total += (static_cast<double>(c - c_prev) / denom) * std::abs(a[ia] - b[ib]);
        if (ca == c) ++ia;
        if (cb == c) ++ib;
        c_prev = c;
    }
    return total;
}

}  // namespace

double wasserstein1(const ScoreSet& a, const ScoreSet& b) {
    return w1_sorted(a.values().data(), a.size(), b.values().data(), b.size());
}

std::vector<double> candidate_thresholds(const ScoreSet& unlabeled) {
    const auto& u = unlabeled.values();
    std::vector<double> cands;
    cands.push_back(u.front() - 1.0);
    for (std::size_t i = 1; i < u.size(); ++i)
        if (u[i] != u[i - 1]) cands.push_back(0.5 * (u[i - 1] + u[i]));
    cands.push_back(u.back() + 1.0);
    return cands;
}

namespace {

double partial_match(const ScoreSet& labeled, const ScoreSet& unlabeled, bool positive,
                     std::vector<MatchPoint>* curve) {
    const auto& u = unlabeled.values();
    const auto& l = labeled.values();
    std::vector<double> cands = candidate_thresholds(unlabeled);

    double best_dist = std::numeric_limits<double>::infinity();
    double best_eta = std::numeric_limits<double>::quiet_NaN();
    bool feasible = false;
    if (curve) curve->clear();

    for (double eta : cands) {
        const double* sub = u.data();
        std::size_t n_sub = 0;
        if (positive) {  // {u > eta}: suffix of the sorted scores
            auto it = std::upper_bound(u.begin(), u.end(), eta);
            sub = u.data() + (it - u.begin());
            n_sub = static_cast<std::size_t>(u.end() - it);
        } else {  // {u < eta}: prefix
            auto it = std::lower_bound(u.begin(), u.end(), eta);
            n_sub = static_cast<std::size_t>(it - u.begin());
        }
        if (n_sub == 0) {
            if (curve) curve->push_back({eta, std::numeric_limits<double>::infinity(), 0});
            continue;
        }
        double d = w1_sorted(l.data(), l.size(), sub, n_sub);
        if (curve) curve->push_back({eta, d, n_sub});
        // Candidates ascend; ">= keeps latest" gives the larger eta on ties for
        // the positive side, "> keeps earliest" the smaller eta for the negative.
        bool better = positive ? (d <= best_dist) : (d < best_dist);
        if (!feasible || better) {
            best_dist = d;
            best_eta = eta;
            feasible = true;
        }
    }
    if (!feasible)
        throw std::runtime_error("partial matching: every candidate threshold selects an empty subset");
    return best_eta;
}

}  // namespace

double partial_match_positive(const ScoreSet& labeled_pos, const ScoreSet& unlabeled,
                              std::vector<MatchPoint>* curve) {
    return partial_match(labeled_pos, unlabeled, /*positive=*/true, curve);
}

double partial_match_negative(const ScoreSet& labeled_neg, const ScoreSet& unlabeled,
                              std::vector<MatchPoint>* curve) {
    return partial_match(labeled_neg, unlabeled, /*positive=*/false, curve);
}

double otsu_threshold(const ScoreSet& scores, int bins) {
    if (bins < 2) throw std::invalid_argument("otsu_threshold: bins must be >= 2");
    const auto& v = scores.values();
    double lo = v.front(), hi = v.back();
    if (lo == hi) throw std::invalid_argument("otsu_threshold: all scores equal");

    const double width = (hi - lo) / bins;
    std::vector<double> count(static_cast<std::size_t>(bins), 0.0);
    for (double x : v) {
        int b = static_cast<int>((x - lo) / width);
        if (b >= bins) b = bins - 1;
        if (b < 0) b = 0;
        count[static_cast<std::size_t>(b)] += 1.0;
    }

    const double total = static_cast<double>(v.size());
    double sum_all = 0.0;
    for (int i = 0; i < bins; ++i) sum_all += count[static_cast<std::size_t>(i)] * (lo + (i + 0.5) * width);

    double w0 = 0.0, sum0 = 0.0;
    double best_var = -1.0;
    int best_edge = -1;
    for (int i = 0; i + 1 < bins; ++i) {  // threshold = right edge of bin i
        w0 += count[static_cast<std::size_t>(i)];
        sum0 += count[static_cast<std::size_t>(i)] * (lo + (i + 0.5) * width);
        double w1 = total - w0;
        if (w0 == 0.0 || w1 == 0.0) continue;
        double mu0 = sum0 / w0, mu1 = (sum_all - sum0) / w1;
        double between = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if (between > best_var) {  // strict: ties keep the smallest edge
            best_var = between;
            best_edge = i;
        }
    }
    if (best_edge < 0) throw std::runtime_error("otsu_threshold: no valid split found");
    return lo + (best_edge + 1) * width;
}

double score_percentile_value(const ScoreSet& scores, double percentile) {
    if (percentile < 0.0 || percentile > 100.0)
        throw std::invalid_argument("score_percentile_value: percentile out of [0,100]");
    const auto& v = scores.values();
    if (v.size() == 1) return v.front();
    double pos = percentile / 100.0 * static_cast<double>(v.size() - 1);
    std::size_t i = static_cast<std::size_t>(pos);
    if (i + 1 >= v.size()) return v.back();
    double w = pos - static_cast<double>(i);
    return (1.0 - w) * v[i] + w * v[i + 1];
}

void write_matching_curve_csv(const std::filesystem::path& path, const std::vector<MatchPoint>& curve) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_matching_curve_csv: cannot open '" + path.string() + "'");
    out << "eta,wasserstein1,subset_size\n";
    char buf[64];
    for (const auto& p : curve) {
        std::snprintf(buf, sizeof(buf), "%.17g", p.eta);
        out << buf << ',';
        if (std::isinf(p.distance)) {
            out << "inf";
        } else {
            std::snprintf(buf, sizeof(buf), "%.17g", p.distance);
            out << buf;
        }
        out << ',' << p.subset_size << '\n';
    }
}

}  // namespace spade
