#include "spade/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace spade {

double auc(const Vector& scores, const std::vector<int>& labels) {
    if (static_cast<std::size_t>(scores.size()) != labels.size())
        throw std::invalid_argument("auc: scores/labels size mismatch");
    std::size_t n = labels.size();
    std::size_t n_pos = 0;
    for (int y : labels) {
        if (y != 0 && y != 1) throw std::invalid_argument("auc: labels must be 0 or 1");
        n_pos += static_cast<std::size_t>(y);
    }
    std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) throw std::invalid_argument("auc: both classes must be present");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scores[static_cast<Eigen::Index>(a)] < scores[static_cast<Eigen::Index>(b)];
    });

    // Midranks give tied pairs half credit.
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[static_cast<Eigen::Index>(order[j + 1])] ==
                                scores[static_cast<Eigen::Index>(order[i])])
            ++j;
        double mid_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
        for (std::size_t t = i; t <= j; ++t)
            if (labels[order[t]] == 1) rank_sum_pos += mid_rank;
        i = j + 1;
    }
    double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
    return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

EvalReport evaluate_splits(const Vector& scores, const Dataset& test, const std::set<int>& given_types) {
    if (test.empty()) throw std::invalid_argument("evaluate_splits: empty test set");
    if (static_cast<std::size_t>(scores.size()) != test.size())
        throw std::invalid_argument("evaluate_splits: scores/test size mismatch");

    std::vector<double> s_all;
    std::vector<int> y_all;
    std::vector<double> s_given, s_missed;
    std::vector<int> y_given, y_missed;
    for (std::size_t i = 0; i < test.size(); ++i) {
        const Sample& smp = test[i];
        double sc = scores[static_cast<Eigen::Index>(i)];
        if (smp.label == kLabelNormal) {
            s_all.push_back(sc); y_all.push_back(0);
            s_given.push_back(sc); y_given.push_back(0);
            s_missed.push_back(sc); y_missed.push_back(0);
        } else if (smp.label == kLabelAnomalous) {
            s_all.push_back(sc); y_all.push_back(1);
            int type = smp.anomaly_type.value_or(-1);
            if (given_types.count(type)) {
                s_given.push_back(sc); y_given.push_back(1);
            } else {
                s_missed.push_back(sc); y_missed.push_back(1);
            }
        } else {
            throw std::invalid_argument("evaluate_splits: test sample " + std::to_string(i) + " is unlabeled");
        }
    }

    auto maybe_auc = [](const std::vector<double>& s, const std::vector<int>& y) -> std::optional<double> {
        bool has_pos = std::find(y.begin(), y.end(), 1) != y.end();
        bool has_neg = std::find(y.begin(), y.end(), 0) != y.end();
        if (!has_pos || !has_neg) return std::nullopt;
        return auc(Eigen::Map<const Vector>(s.data(), static_cast<Eigen::Index>(s.size())), y);
    };

    EvalReport r;
    r.overall_auc = maybe_auc(s_all, y_all);
    if (!r.overall_auc) throw std::invalid_argument("evaluate_splits: test set needs normals and anomalies");
    r.given_auc = maybe_auc(s_given, y_given);
    r.missed_auc = maybe_auc(s_missed, y_missed);
    return r;
}

std::vector<double> default_percentile_grid() {
    std::vector<double> g;
    for (double p = 50.0; p <= 95.0; p += 5.0) g.push_back(p);
    g.push_back(99.0);
    return g;
}

PrecisionCurves precision_curve(const Matrix& occ_scores, const std::vector<int>& true_labels,
                                const std::vector<double>& eta_p, const std::vector<double>& eta_n,
                                const std::vector<double>& grid) {
    const std::size_t n = static_cast<std::size_t>(occ_scores.rows());
    const std::size_t k = static_cast<std::size_t>(occ_scores.cols());
    if (n == 0) throw std::invalid_argument("precision_curve: no unlabeled samples");
    if (true_labels.size() != n) throw std::invalid_argument("precision_curve: label size mismatch");
    if (eta_p.size() != k || eta_n.size() != k)
        throw std::invalid_argument("precision_curve: threshold count mismatch");

    // Percentile of a score within one estimator's unlabeled score set, with
    // ties at the midpoint.
    auto percentile_of = [](const std::vector<double>& sorted, double v) {
        auto lo = std::lower_bound(sorted.begin(), sorted.end(), v);
        auto hi = std::upper_bound(sorted.begin(), sorted.end(), v);
        double less = static_cast<double>(lo - sorted.begin());
        double equal = static_cast<double>(hi - lo);
        return 100.0 * (less + 0.5 * equal) / static_cast<double>(sorted.size());
    };

    std::vector<std::vector<double>> sorted_cols(k);
    for (std::size_t c = 0; c < k; ++c) {
        sorted_cols[c].assign(occ_scores.col(static_cast<Eigen::Index>(c)).begin(),
                              occ_scores.col(static_cast<Eigen::Index>(c)).end());
        std::sort(sorted_cols[c].begin(), sorted_cols[c].end());
    }

    std::vector<double> mean_pct(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t c = 0; c < k; ++c)
            acc += percentile_of(sorted_cols[c], occ_scores(static_cast<Eigen::Index>(i),
                                                            static_cast<Eigen::Index>(c)));
        mean_pct[i] = acc / static_cast<double>(k);
    }

    PrecisionCurves out;
    for (double p : grid) {
        std::size_t above = 0, above_true = 0, below = 0, below_true = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (mean_pct[i] > p) {
                ++above;
                if (true_labels[i] == 1) ++above_true;
            } else if (mean_pct[i] < p) {
                ++below;
                if (true_labels[i] == 0) ++below_true;
            }
        }
        if (above > 0)
            out.anomalous.push_back({p, static_cast<double>(above_true) / static_cast<double>(above), above});
        if (below > 0)
            out.normal.push_back({p, static_cast<double>(below_true) / static_cast<double>(below), below});
    }
    for (std::size_t c = 0; c < k; ++c) {
        out.eta_p_percentiles.push_back(percentile_of(sorted_cols[c], eta_p[c]));
        out.eta_n_percentiles.push_back(percentile_of(sorted_cols[c], eta_n[c]));
    }
    return out;
}

EvalReport aggregate_runs(const std::vector<EvalReport>& reports) {
    if (reports.empty()) throw std::invalid_argument("aggregate_runs: no reports");

    auto collect = [&](auto getter) {
        std::vector<double> vals;
        for (const auto& r : reports)
            if (auto v = getter(r)) vals.push_back(*v);
        return vals;
    };
    auto mean_std = [](const std::vector<double>& v) -> std::pair<std::optional<double>, std::optional<double>> {
        if (v.empty()) return {std::nullopt, std::nullopt};
        double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
        double var = 0.0;
        for (double x : v) var += (x - m) * (x - m);
        var /= static_cast<double>(v.size());  // population std
        return {m, std::sqrt(var)};
    };

    EvalReport out;
    out.n_seeds = static_cast<int>(reports.size());
    std::tie(out.overall_auc, out.overall_std) =
        mean_std(collect([](const EvalReport& r) { return r.overall_auc; }));
    std::tie(out.given_auc, out.given_std) =
        mean_std(collect([](const EvalReport& r) { return r.given_auc; }));
    std::tie(out.missed_auc, out.missed_std) =
        mean_std(collect([](const EvalReport& r) { return r.missed_auc; }));
    return out;
}

nlohmann::json EvalReport::to_json() const {
    nlohmann::json j;
    auto put = [&](const char* key, const std::optional<double>& v) {
        if (v) j[key] = *v;
        else j[key] = nullptr;
    };
    put("overall_auc", overall_auc);
    put("given_auc", given_auc);
    put("missed_auc", missed_auc);
    put("overall_std", overall_std);
    put("given_std", given_std);
    put("missed_std", missed_std);
    j["n_seeds"] = n_seeds;
    if (curves) {
        auto dump = [](const std::vector<CurvePoint>& c) {
            nlohmann::json arr = nlohmann::json::array();
            for (const auto& p : c)
                arr.push_back({{"percentile", p.percentile}, {"precision", p.precision}, {"support", p.support}});
            return arr;
        };
        j["precision_anomalous"] = dump(curves->anomalous);
        j["precision_normal"] = dump(curves->normal);
        j["eta_p_percentiles"] = curves->eta_p_percentiles;
        j["eta_n_percentiles"] = curves->eta_n_percentiles;
    }
    return j;
}

}  // namespace spade
