#include "spade/trainer.hpp"

#include "spade/evaluation.hpp"
#include "support/synthetic.hpp"

#include <doctest.h>

#include <fstream>
#include <limits>
#include <random>

using namespace spade;

namespace {

// Small, fast scenario from the two-cluster generator.
ScenarioSplit small_scenario(std::uint64_t seed, std::size_t normals = 120, std::size_t anoms = 30) {
    testsupport::SyntheticSpec spec;
    spec.normals_per_cluster = normals;
    spec.anomalies_per_type = anoms;
    Dataset full = to_anomaly_labels(testsupport::make_two_cluster_dataset(spec, seed), {1});
    auto [train, test] = split_train_test(full, 0.4, seed);
    ScenarioSplit split = scenario_new_anomalies(train, {2}, 0.25, seed);
    split.test = test;
    return split;
}

TrainConfig quick_config(std::uint64_t seed, int max_epochs = 12) {
    TrainConfig cfg;
    cfg.seed = seed;
    cfg.max_epochs = max_epochs;
    cfg.k = 3;
    return cfg;
}

}  // namespace

TEST_CASE("epoch records satisfy the loss decomposition") {
    ScenarioSplit split = small_scenario(1);
    TrainConfig cfg = quick_config(1);
    cfg.alpha = 0.7;
    cfg.beta = 1.3;
    SpadeModel model = train_spade(split, cfg);
    REQUIRE_FALSE(model.trace.empty());
    for (const auto& r : model.trace) {
        double recombined = r.loss_labeled + cfg.alpha * r.loss_pseudo + cfg.beta * r.loss_recon;
        CHECK(std::abs(r.total - recombined) < 1e-8);
        CHECK(r.n_pos + r.n_neg + r.n_unknown == split.unlabeled.size());
        CHECK(r.eta_p.size() == 3);
    }
}

TEST_CASE("epoch-1 losses match a fully independent recomputation") {
    // Single-batch sized data so the batch is the whole pool in index order.
    ScenarioSplit split = small_scenario(2, 60, 15);
    REQUIRE(split.labeled.size() + split.unlabeled.size() <= 256);
    TrainConfig cfg = quick_config(2, 1);
    cfg.alpha = 0.9;
    cfg.beta = 1.1;
    SpadeModel model = train_spade(split, cfg);
    REQUIRE(model.trace.size() == 1);

    // Rebuild everything the engine does for epoch 1, from scratch.
    Matrix xl_raw = split.labeled.feature_matrix();
    Matrix xu_raw = split.unlabeled.feature_matrix();
    Scaler scaler = Scaler::fit(vstack(xl_raw, xu_raw));
    Matrix xl = scaler.transform(xl_raw), xu = scaler.transform(xu_raw);
    SpadeNets nets = make_spade_networks(xl.cols(), cfg.seed);

    std::vector<std::size_t> pos_idx, neg_idx;
    for (std::size_t i = 0; i < split.labeled.size(); ++i)
        (split.labeled[i].label == kLabelAnomalous ? pos_idx : neg_idx).push_back(i);
    Matrix r_pos = nets.encoder.forward(select_rows(xl, pos_idx));
    Matrix r_neg = nets.encoder.forward(select_rows(xl, neg_idx));
    Matrix r_u = nets.encoder.forward(xu);

    PseudoLabelerConfig lcfg = cfg.labeler;
    lcfg.k = cfg.k;
    PseudoLabeler labeler = PseudoLabeler::build(r_pos, r_neg, r_u, lcfg, cfg.seed + 1);
    auto assign = labeler.assign_batch(r_u);
    CHECK(assign.n_pos == model.trace[0].n_pos);
    CHECK(assign.n_neg == model.trace[0].n_neg);

    Vector yl(static_cast<Eigen::Index>(split.labeled.size()));
    for (std::size_t i = 0; i < split.labeled.size(); ++i)
        yl[static_cast<Eigen::Index>(i)] = split.labeled[i].label;
    Vector probs_l = nets.predictor.forward(nets.encoder.forward(xl)).col(0);
    double l_yl = nn::bce_loss(probs_l, yl, Vector::Ones(yl.size())).value;

    Vector vy = Vector::Zero(xu.rows()), vw = Vector::Zero(xu.rows());
    for (Eigen::Index i = 0; i < xu.rows(); ++i) {
        int lbl = assign.labels[static_cast<std::size_t>(i)];
        if (lbl != kLabelUnlabeled) {
            vy[i] = lbl;
            vw[i] = 1.0;
        }
    }
    Vector probs_u = nets.predictor.forward(r_u).col(0);
    double l_yu = nn::bce_loss(probs_u, vy, vw).value;

    Matrix xb = vstack(xl, xu);  // batch rows in original index order
    Matrix recon = nets.projection.forward(nets.encoder.forward(xb));
    double l_r = nn::mse_loss(recon, xb).value;

    CHECK(std::abs(model.trace[0].loss_labeled - l_yl) < 1e-10);
    CHECK(std::abs(model.trace[0].loss_pseudo - l_yu) < 1e-10);
    CHECK(std::abs(model.trace[0].loss_recon - l_r) < 1e-10);
    CHECK(std::abs(model.trace[0].total - (l_yl + cfg.alpha * l_yu + cfg.beta * l_r)) < 1e-10);
}

TEST_CASE("training is deterministic for a fixed seed") {
    ScenarioSplit split = small_scenario(3);
    TrainConfig cfg = quick_config(3, 6);
    SpadeModel a = train_spade(split, cfg);
    SpadeModel b = train_spade(split, cfg);
    REQUIRE(a.trace.size() == b.trace.size());
    for (std::size_t i = 0; i < a.trace.size(); ++i) {
        CHECK(a.trace[i].total == b.trace[i].total);
        CHECK(a.trace[i].n_pos == b.trace[i].n_pos);
    }
    CHECK(a.predictor.parameters() == b.predictor.parameters());
    CHECK(a.encoder.parameters() == b.encoder.parameters());
}

TEST_CASE("alpha=beta=0 reproduces the supervised trajectory") {
    ScenarioSplit split = small_scenario(4, 60, 15);  // single-batch sized
    REQUIRE(split.labeled.size() + split.unlabeled.size() <= 256);
    TrainConfig cfg = quick_config(4, 8);
    cfg.alpha = 0.0;
    cfg.beta = 0.0;
    SpadeModel spade_model = train_spade(split, cfg);

    Scaler shared = Scaler::fit(vstack(split.labeled.feature_matrix(), split.unlabeled.feature_matrix()));
    SpadeModel sup = train_supervised(split.labeled, cfg, shared);
    REQUIRE(sup.trace.size() == spade_model.trace.size());
    CHECK(spade_model.predictor.parameters() == sup.predictor.parameters());
    CHECK(spade_model.encoder.parameters() == sup.encoder.parameters());
}

TEST_CASE("convergence stops after patience stagnant epochs") {
    ScenarioSplit split = small_scenario(5);
    TrainConfig cfg = quick_config(5, 200);
    SpadeModel model = train_spade(split, cfg);
    REQUIRE_FALSE(model.trace.empty());
    if (model.trace.size() < 200) {  // early stop path
        std::size_t n = model.trace.size();
        REQUIRE(n > static_cast<std::size_t>(cfg.patience));
        // The final `patience` epochs never improved the best-so-far by more
        // than the tolerance.
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i + cfg.patience < n; ++i) best = std::min(best, model.trace[i].total);
        for (std::size_t i = n - cfg.patience; i < n; ++i)
            CHECK(model.trace[i].total >= best - cfg.min_improvement);
    }
}

TEST_CASE("predict_scores is a pure [0,1]-valued map") {
    ScenarioSplit split = small_scenario(6);
    SpadeModel model = train_spade(split, quick_config(6, 5));
    Matrix x = split.test.feature_matrix();
    Vector s = model.predict_scores(x);
    CHECK(s.minCoeff() >= 0.0);
    CHECK(s.maxCoeff() <= 1.0);

    Matrix dup(2, x.cols());
    dup.row(0) = x.row(0);
    dup.row(1) = x.row(0);
    Vector sd = model.predict_scores(dup);
    CHECK(sd[0] == sd[1]);
}

TEST_CASE("spade separates the toy clusters after training") {
    ScenarioSplit split = small_scenario(7, 150, 40);
    SpadeModel model = train_spade(split, quick_config(7, 60));
    Vector s = model.predict_scores(split.test.feature_matrix());
    double anom_mean = 0.0, norm_mean = 0.0;
    std::size_t na = 0, nn = 0;
    for (std::size_t i = 0; i < split.test.size(); ++i) {
        if (split.test[i].label == kLabelAnomalous) {
            anom_mean += s[static_cast<Eigen::Index>(i)];
            ++na;
        } else {
            norm_mean += s[static_cast<Eigen::Index>(i)];
            ++nn;
        }
    }
    CHECK(anom_mean / na > norm_mean / nn);
}

TEST_CASE("train_supervised validation") {
    Dataset all_normal("n", 1);
    for (int i = 0; i < 10; ++i) {
        Sample s;
        s.features = {static_cast<double>(i)};
        s.label = kLabelNormal;
        all_normal.push_back(s);
    }
    CHECK_THROWS_AS(train_supervised(all_normal, quick_config(0)), std::invalid_argument);
}

TEST_CASE("negative_supervised with empty unlabeled equals supervised") {
    ScenarioSplit split = small_scenario(8, 50, 14);
    TrainConfig cfg = quick_config(8, 6);
    Dataset empty_unlabeled("empty", split.labeled.dim);
    SpadeModel neg = train_negative_supervised(split.labeled, empty_unlabeled, cfg);
    SpadeModel sup = train_supervised(split.labeled, cfg);
    CHECK(neg.predictor.parameters() == sup.predictor.parameters());
    CHECK(neg.encoder.parameters() == sup.encoder.parameters());
}

TEST_CASE("negative_supervised degrades under heavy contamination") {
    // Anomалous contamination in the unlabeled pool is fed to the negative
    // trainer as normal, dragging its test AUC below plain supervised.
    ScenarioSplit split = small_scenario(9, 150, 60);
    TrainConfig cfg = quick_config(9, 40);
    Scaler shared = Scaler::fit(vstack(split.labeled.feature_matrix(), split.unlabeled.feature_matrix()));
    SpadeModel sup = train_supervised(split.labeled, cfg, shared);
    SpadeModel neg = train_negative_supervised(split.labeled, split.unlabeled, cfg, shared);

    std::vector<int> y = split.test.labels();
    double auc_sup = auc(sup.predict_scores(split.test.feature_matrix()), y);
    double auc_neg = auc(neg.predict_scores(split.test.feature_matrix()), y);
    // Supervised sees only the given type; restrict to given-type anomalies
    // plus normals for a fair ordering check.
    EvalReport rs = evaluate_splits(sup.predict_scores(split.test.feature_matrix()), split.test, {2});
    EvalReport rn = evaluate_splits(neg.predict_scores(split.test.feature_matrix()), split.test, {2});
    CHECK(*rn.given_auc <= *rs.given_auc + 0.05);
    (void)auc_sup;
    (void)auc_neg;
}

TEST_CASE("occ baselines") {
    std::mt19937_64 rng(10);
    std::normal_distribution<double> g(0.0, 1.0);
    Dataset normals("norm", 2), contaminated("cont", 2);
    for (int i = 0; i < 200; ++i) {
        Sample s;
        s.features = {g(rng), g(rng)};
        s.label = kLabelNormal;
        normals.push_back(s);
    }
    for (int i = 0; i < 60; ++i) {  // anomalies far away, fed as "normal"
        Sample s;
        s.features = {10.0 + g(rng), 10.0 + g(rng)};
        s.label = kLabelUnlabeled;
        contaminated.push_back(s);
    }

    Matrix test_x(80, 2);
    std::vector<int> test_y(80);
    for (int i = 0; i < 80; ++i) {
        bool anom = i >= 60;
        test_x(i, 0) = anom ? 10.0 + g(rng) : g(rng);
        test_x(i, 1) = anom ? 10.0 + g(rng) : g(rng);
        test_y[static_cast<std::size_t>(i)] = anom;
    }

    OccModel clean = occ_baseline(normals);
    double auc_clean = auc(clean.predict_scores(test_x), test_y);
    CHECK(auc_clean > 0.99);

    OccModel dirty = negative_occ_baseline(normals, contaminated);
    double auc_dirty = auc(dirty.predict_scores(test_x), test_y);
    CHECK(auc_dirty < auc_clean);

    CHECK_THROWS_AS(occ_baseline(Dataset("empty", 2)), std::invalid_argument);
}

TEST_CASE("checkpoint json round trip preserves predictions") {
    ScenarioSplit split = small_scenario(11, 60, 15);
    SpadeModel model = train_spade(split, quick_config(11, 4));
    AnyModel any;
    any.impl = model;
    AnyModel back = AnyModel::from_json(nlohmann::json::parse(any.to_json().dump()));
    Matrix x = split.test.feature_matrix();
    CHECK((any.predict_scores(x) - back.predict_scores(x)).array().abs().maxCoeff() < 1e-10);
    CHECK(back.method() == "spade");

    OccModel occm = occ_baseline(split.labeled.subset([&] {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < split.labeled.size(); ++i)
            if (split.labeled[i].label == kLabelNormal) idx.push_back(i);
        return idx;
    }()));
    AnyModel any_occ;
    any_occ.impl = occm;
    AnyModel occ_back = AnyModel::from_json(nlohmann::json::parse(any_occ.to_json().dump()));
    CHECK((any_occ.predict_scores(x) - occ_back.predict_scores(x)).array().abs().maxCoeff() < 1e-10);
}

TEST_CASE("trace csv is written with one row per epoch") {
    ScenarioSplit split = small_scenario(12, 60, 15);
    SpadeModel model = train_spade(split, quick_config(12, 5));
    auto dir = testsupport::unique_temp_dir("trace");
    write_trace_csv(dir / "trace.csv", model);
    std::ifstream in(dir / "trace.csv");
    REQUIRE(in.good());
    std::string line;
    std::size_t lines = 0;
    while (std::getline(in, line)) ++lines;
    CHECK(lines == model.trace.size() + 1);
}
