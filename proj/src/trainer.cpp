#include "spade/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace spade {

nlohmann::json TrainConfig::to_json() const {
    return nlohmann::json{{"alpha", alpha},
                          {"beta", beta},
                          {"k", k},
                          {"patience", patience},
                          {"max_epochs", max_epochs},
                          {"batch_size", batch_size},
                          {"learning_rate", learning_rate},
                          {"min_improvement", min_improvement},
                          {"seed", seed},
                          {"warm_start_raw_features", warm_start_raw_features},
                          {"use_partial_matching", labeler.use_partial_matching},
                          {"include_negatives_in_occ", labeler.include_negatives_in_occ},
                          {"majority_vote", labeler.majority_vote}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.alpha = j.value("alpha", c.alpha);
    c.beta = j.value("beta", c.beta);
    c.k = j.value("k", c.k);
    c.patience = j.value("patience", c.patience);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.min_improvement = j.value("min_improvement", c.min_improvement);
    c.seed = j.value("seed", c.seed);
    c.warm_start_raw_features = j.value("warm_start_raw_features", c.warm_start_raw_features);
    c.labeler.use_partial_matching = j.value("use_partial_matching", true);
    c.labeler.include_negatives_in_occ = j.value("include_negatives_in_occ", true);
    c.labeler.majority_vote = j.value("majority_vote", false);
    return c;
}

SpadeNets make_spade_networks(Eigen::Index dim, std::uint64_t seed) {
    if (dim < 1) throw std::invalid_argument("make_spade_networks: dim must be >= 1");
    // Half the input width, floored at 4: a single-unit representation is a
    // ridge function that cannot rank anomalies on both sides of the normals,
    // and one or two ReLU units die too easily on low-dimensional data.
    Eigen::Index hidden = std::max<Eigen::Index>(4, (dim + 1) / 2);
    Rng rng = make_rng(seed, /*stream=*/10);
    SpadeNets nets;
    nets.encoder = nn::Mlp({dim, hidden, hidden}, {nn::Activation::kRelu, nn::Activation::kRelu}, rng);
    nets.predictor = nn::Mlp({hidden, 1}, {nn::Activation::kSigmoid}, rng);
    nets.projection = nn::Mlp({hidden, dim}, {nn::Activation::kIdentity}, rng);
    return nets;
}

namespace {

Matrix rows_where(const Matrix& x, const std::vector<int>& y, int wanted) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < y.size(); ++i)
        if (y[i] == wanted) idx.push_back(i);
    return select_rows(x, idx);
}

struct EngineSetup {
    std::string method;
    Matrix x_labeled;       // raw
    std::vector<int> y_labeled;
    Matrix x_unlabeled;     // raw; 0 rows disables the pseudo path
    bool use_pseudo = false;
    bool use_projection = false;
};

SpadeModel run_training(const EngineSetup& in, const TrainConfig& cfg,
                        const std::optional<Scaler>& external_scaler) {
    const Eigen::Index n_l = in.x_labeled.rows();
    const Eigen::Index n_u = in.x_unlabeled.rows();
    if (n_l == 0) throw std::invalid_argument(in.method + ": labeled set is empty");
    if (cfg.alpha < 0.0 || cfg.beta < 0.0) throw std::invalid_argument("TrainConfig: alpha/beta must be >= 0");
    if (cfg.k < 1 || cfg.patience < 1 || cfg.batch_size < 1 || cfg.max_epochs < 1)
        throw std::invalid_argument("TrainConfig: k/patience/batch_size/max_epochs must be >= 1");

    SpadeModel model;
    model.method = in.method;
    model.config = cfg;
    model.scaler = external_scaler ? *external_scaler
                                   : Scaler::fit(vstack(in.x_labeled, in.x_unlabeled));
    Matrix xl = model.scaler.transform(in.x_labeled);
    Matrix xu = n_u > 0 ? model.scaler.transform(in.x_unlabeled) : Matrix(0, xl.cols());

    SpadeNets nets = make_spade_networks(xl.cols(), cfg.seed);
    model.encoder = std::move(nets.encoder);
    model.predictor = std::move(nets.predictor);
    model.projection = std::move(nets.projection);
    model.has_projection = in.use_projection;

    Vector yl(n_l);
    for (Eigen::Index i = 0; i < n_l; ++i) yl[i] = static_cast<double>(in.y_labeled[static_cast<std::size_t>(i)]);
    Matrix x_pos = rows_where(in.x_labeled, in.y_labeled, kLabelAnomalous);
    Matrix x_neg = rows_where(in.x_labeled, in.y_labeled, kLabelNormal);
    Matrix xl_pos = x_pos.rows() > 0 ? model.scaler.transform(x_pos) : Matrix(0, xl.cols());
    Matrix xl_neg = x_neg.rows() > 0 ? model.scaler.transform(x_neg) : Matrix(0, xl.cols());

    PseudoLabelerConfig labeler_cfg = cfg.labeler;
    labeler_cfg.k = cfg.k;

    const Eigen::Index n_enc = model.encoder.parameter_count();
    const Eigen::Index n_pred = model.predictor.parameter_count();
    const Eigen::Index n_proj = in.use_projection ? model.projection.parameter_count() : 0;
    const Eigen::Index n_params = n_enc + n_pred + n_proj;
    Vector theta(n_params);
    theta.segment(0, n_enc) = model.encoder.parameters();
    theta.segment(n_enc, n_pred) = model.predictor.parameters();
    if (in.use_projection) theta.segment(n_enc + n_pred, n_proj) = model.projection.parameters();
    nn::AdamState adam(n_params, {cfg.learning_rate, 0.9, 0.999, 1e-8});

    auto write_back = [&] {
        Eigen::Index pos = 0;
        model.encoder.set_parameters(theta.segment(pos, model.encoder.parameter_count()));
        pos += model.encoder.parameter_count();
        model.predictor.set_parameters(theta.segment(pos, model.predictor.parameter_count()));
        pos += model.predictor.parameter_count();
        if (in.use_projection) model.projection.set_parameters(theta.segment(pos, model.projection.parameter_count()));
    };

    double best = std::numeric_limits<double>::infinity();
    int stagnant = 0;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        EpochRecord rec;
        rec.epoch = epoch;

        Vector pseudo_y = Vector::Zero(n_u);
        Vector pseudo_w = Vector::Zero(n_u);
        if (in.use_pseudo) {
            bool raw = cfg.warm_start_raw_features && epoch == 1;
            Matrix r_pos = raw ? xl_pos : (xl_pos.rows() > 0 ? model.encoder.forward(xl_pos) : Matrix(0, model.encoder.out_dim()));
            Matrix r_neg = raw ? xl_neg : (xl_neg.rows() > 0 ? model.encoder.forward(xl_neg) : Matrix(0, model.encoder.out_dim()));
            Matrix r_u = raw ? xu : model.encoder.forward(xu);
            PseudoLabeler labeler = [&] {
                try {
                    return PseudoLabeler::build(r_pos, r_neg, r_u, labeler_cfg, cfg.seed + static_cast<std::uint64_t>(epoch));
                } catch (const std::exception& e) {
                    throw std::runtime_error(in.method + ": pseudo-labeler build failed at epoch " +
                                             std::to_string(epoch) + ": " + e.what());
                }
            }();
            auto batch = labeler.assign_batch(r_u);
            for (Eigen::Index i = 0; i < n_u; ++i) {
                int lbl = batch.labels[static_cast<std::size_t>(i)];
                if (lbl != kLabelUnlabeled) {
                    pseudo_y[i] = static_cast<double>(lbl);
                    pseudo_w[i] = 1.0;
                }
            }
            rec.n_pos = batch.n_pos;
            rec.n_neg = batch.n_neg;
            rec.n_unknown = batch.n_unknown;
            rec.n_conflicts = batch.n_conflicts;
            rec.eta_p = labeler.eta_p();
            rec.eta_n = labeler.eta_n();
            model.final_labeler = std::move(labeler);
        }

        // One pass over labeled ∪ unlabeled; batch rows are sorted by original
        // index so reductions do not depend on the shuffle order.
        Rng batch_rng = make_rng(cfg.seed, /*stream=*/11, static_cast<std::uint64_t>(epoch));
        std::vector<std::size_t> order = shuffled_range(static_cast<std::size_t>(n_l + n_u), batch_rng);
        const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
        std::size_t n_batches = 0;

        for (std::size_t start = 0; start < order.size(); start += bs) {
            std::vector<std::size_t> chunk(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(
                                                               std::min(order.size(), start + bs)));
            std::sort(chunk.begin(), chunk.end());
            const Eigen::Index nb = static_cast<Eigen::Index>(chunk.size());

            Matrix xb(nb, xl.cols());
            std::vector<Eigen::Index> lab_rows, unl_rows;
            for (Eigen::Index r = 0; r < nb; ++r) {
                std::size_t gi = chunk[static_cast<std::size_t>(r)];
                if (gi < static_cast<std::size_t>(n_l)) {
                    xb.row(r) = xl.row(static_cast<Eigen::Index>(gi));
                    lab_rows.push_back(r);
                } else {
                    xb.row(r) = xu.row(static_cast<Eigen::Index>(gi - static_cast<std::size_t>(n_l)));
                    unl_rows.push_back(r);
                }
            }

            nn::Mlp::Cache ch, cq, cg;
            Matrix rep = model.encoder.forward(xb, &ch);
            Matrix p = model.predictor.forward(rep, &cq);
            Matrix dp = Matrix::Zero(nb, 1);

            double l_yl = 0.0;
            if (!lab_rows.empty()) {
                Vector probs(static_cast<Eigen::Index>(lab_rows.size()));
                Vector targets(probs.size());
                for (std::size_t i = 0; i < lab_rows.size(); ++i) {
                    probs[static_cast<Eigen::Index>(i)] = p(lab_rows[i], 0);
                    std::size_t gi = chunk[static_cast<std::size_t>(lab_rows[i])];
                    targets[static_cast<Eigen::Index>(i)] = yl[static_cast<Eigen::Index>(gi)];
                }
                nn::LossResult r = nn::bce_loss(probs, targets, Vector::Ones(probs.size()));
                l_yl = r.value;
                for (std::size_t i = 0; i < lab_rows.size(); ++i)
                    dp(lab_rows[i], 0) += r.grad(static_cast<Eigen::Index>(i), 0);
            }

            double l_yu = 0.0;
            if (in.use_pseudo && !unl_rows.empty()) {
                Vector probs(static_cast<Eigen::Index>(unl_rows.size()));
                Vector targets(probs.size()), weights(probs.size());
                for (std::size_t i = 0; i < unl_rows.size(); ++i) {
                    probs[static_cast<Eigen::Index>(i)] = p(unl_rows[i], 0);
                    std::size_t gi = chunk[static_cast<std::size_t>(unl_rows[i])] - static_cast<std::size_t>(n_l);
                    targets[static_cast<Eigen::Index>(i)] = pseudo_y[static_cast<Eigen::Index>(gi)];
                    weights[static_cast<Eigen::Index>(i)] = pseudo_w[static_cast<Eigen::Index>(gi)];
                }
                nn::LossResult r = nn::bce_loss(probs, targets, weights);
                l_yu = r.value;
                for (std::size_t i = 0; i < unl_rows.size(); ++i)
                    dp(unl_rows[i], 0) += cfg.alpha * r.grad(static_cast<Eigen::Index>(i), 0);
            }

            double l_r = 0.0;
            nn::Mlp::Gradients gg;
            Matrix drep;
            if (in.use_projection) {
                Matrix xhat = model.projection.forward(rep, &cg);
                nn::LossResult r = nn::mse_loss(xhat, xb);
                l_r = r.value;
                gg = model.projection.backward(cfg.beta * r.grad, cg);
                drep = gg.dinput;
            } else {
                drep = Matrix::Zero(nb, rep.cols());
            }

            nn::Mlp::Gradients gq = model.predictor.backward(dp, cq);
            drep += gq.dinput;
            nn::Mlp::Gradients gh = model.encoder.backward(drep, ch);

            Vector grad(n_params);
            grad.segment(0, n_enc) = model.encoder.flatten(gh);
            grad.segment(n_enc, n_pred) = model.predictor.flatten(gq);
            if (in.use_projection) grad.segment(n_enc + n_pred, n_proj) = model.projection.flatten(gg);

            adam.step(theta, grad);
            write_back();

            double total = l_yl + cfg.alpha * l_yu + cfg.beta * l_r;
            if (!std::isfinite(total))
                throw std::runtime_error(in.method + ": non-finite training loss at epoch " +
                                         std::to_string(epoch) + " (L_yl=" + std::to_string(l_yl) +
                                         ", L_yu=" + std::to_string(l_yu) + ", L_r=" + std::to_string(l_r) + ")");
            rec.loss_labeled += l_yl;
            rec.loss_pseudo += l_yu;
            rec.loss_recon += l_r;
            rec.total += total;
            ++n_batches;
        }

        rec.loss_labeled /= static_cast<double>(n_batches);
        rec.loss_pseudo /= static_cast<double>(n_batches);
        rec.loss_recon /= static_cast<double>(n_batches);
        rec.total /= static_cast<double>(n_batches);
        model.trace.push_back(rec);

        if (rec.total < best - cfg.min_improvement) {
            best = rec.total;
            stagnant = 0;
        } else {
            ++stagnant;
        }
        if (stagnant >= cfg.patience) break;
    }
    return model;
}

}  // namespace

SpadeModel train_spade(const ScenarioSplit& split, const TrainConfig& cfg) {
    if (split.unlabeled.empty()) throw std::invalid_argument("train_spade: unlabeled set is empty");
    if (split.labeled.empty()) throw std::invalid_argument("train_spade: labeled set is empty");
    EngineSetup in;
    in.method = "spade";
    in.x_labeled = split.labeled.feature_matrix();
    in.y_labeled = split.labeled.labels();
    for (int y : in.y_labeled)
        if (y != kLabelNormal && y != kLabelAnomalous)
            throw std::invalid_argument("train_spade: labeled set contains unlabeled samples");
    in.x_unlabeled = split.unlabeled.feature_matrix();
    in.use_pseudo = true;
    in.use_projection = true;
    return run_training(in, cfg, std::nullopt);
}

SpadeModel train_supervised(const Dataset& labeled, const TrainConfig& cfg,
                            const std::optional<Scaler>& scaler) {
    std::vector<int> y = labeled.labels();
    bool has_pos = std::count(y.begin(), y.end(), kLabelAnomalous) > 0;
    bool has_neg = std::count(y.begin(), y.end(), kLabelNormal) > 0;
    if (!has_pos) throw std::invalid_argument("train_supervised: no anomalies in the labeled set");
    if (!has_neg) throw std::invalid_argument("train_supervised: no normal samples in the labeled set");
    EngineSetup in;
    in.method = "supervised";
    in.x_labeled = labeled.feature_matrix();
    in.y_labeled = std::move(y);
    in.x_unlabeled = Matrix(0, in.x_labeled.cols());
    return run_training(in, cfg, scaler);
}

SpadeModel train_negative_supervised(const Dataset& labeled, const Dataset& unlabeled,
                                     const TrainConfig& cfg, const std::optional<Scaler>& scaler) {
    std::vector<int> y = labeled.labels();
    if (std::count(y.begin(), y.end(), kLabelAnomalous) == 0)
        throw std::invalid_argument("train_negative_supervised: no anomalies in the labeled set");
    EngineSetup in;
    in.method = "negative_supervised";
    in.x_labeled = vstack(labeled.feature_matrix(), unlabeled.feature_matrix());
    in.y_labeled = std::move(y);
    in.y_labeled.resize(static_cast<std::size_t>(in.x_labeled.rows()), kLabelNormal);
    in.x_unlabeled = Matrix(0, in.x_labeled.cols());
    return run_training(in, cfg, scaler);
}

OccModel occ_baseline(const Dataset& labeled_normals, const std::optional<Scaler>& scaler) {
    if (labeled_normals.empty()) throw std::invalid_argument("occ_baseline: empty normal pool");
    OccModel m;
    m.method = "occ";
    Matrix x = labeled_normals.feature_matrix();
    m.scaler = scaler ? *scaler : Scaler::fit(x);
    m.occ = GaussianOcc::fit(m.scaler.transform(x));
    return m;
}

OccModel negative_occ_baseline(const Dataset& labeled_normals, const Dataset& unlabeled,
                               const std::optional<Scaler>& scaler) {
    Matrix x = labeled_normals.empty()
                   ? unlabeled.feature_matrix()
                   : vstack(labeled_normals.feature_matrix(), unlabeled.feature_matrix());
    if (x.rows() == 0) throw std::invalid_argument("negative_occ_baseline: empty fit pool");
    OccModel m;
    m.method = "negative_occ";
    m.scaler = scaler ? *scaler : Scaler::fit(x);
    m.occ = GaussianOcc::fit(m.scaler.transform(x));
    return m;
}

Vector SpadeModel::predict_scores(const Matrix& x_raw) const {
    Matrix rep = encoder.forward(scaler.transform(x_raw));
    return predictor.forward(rep).col(0);
}

Vector OccModel::predict_scores(const Matrix& x_raw) const {
    return occ.score_rows(scaler.transform(x_raw));
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

nlohmann::json scaler_to_json(const Scaler& s) {
    return nlohmann::json{
        {"mean", std::vector<double>(s.mean.data(), s.mean.data() + s.mean.size())},
        {"std", std::vector<double>(s.std_dev.data(), s.std_dev.data() + s.std_dev.size())}};
}

Scaler scaler_from_json(const nlohmann::json& j) {
    Scaler s;
    auto mean = j.at("mean").get<std::vector<double>>();
    auto stdv = j.at("std").get<std::vector<double>>();
    s.mean = Eigen::Map<const Vector>(mean.data(), static_cast<Eigen::Index>(mean.size()));
    s.std_dev = Eigen::Map<const Vector>(stdv.data(), static_cast<Eigen::Index>(stdv.size()));
    return s;
}

}  // namespace

nlohmann::json SpadeModel::to_json() const {
    nlohmann::json j;
    j["kind"] = "neural";
    j["method"] = method;
    j["scaler"] = scaler_to_json(scaler);
    j["encoder"] = encoder.to_json();
    j["predictor"] = predictor.to_json();
    j["has_projection"] = has_projection;
    if (has_projection) j["projection"] = projection.to_json();
    if (final_labeler) j["labeler"] = final_labeler->to_json();
    j["config"] = config.to_json();
    j["epochs_trained"] = trace.size();
    if (!trace.empty()) j["final_total_loss"] = trace.back().total;
    return j;
}

SpadeModel SpadeModel::from_json(const nlohmann::json& j) {
    SpadeModel m;
    m.method = j.at("method").get<std::string>();
    m.scaler = scaler_from_json(j.at("scaler"));
    m.encoder = nn::Mlp::from_json(j.at("encoder"));
    m.predictor = nn::Mlp::from_json(j.at("predictor"));
    m.has_projection = j.value("has_projection", false);
    if (m.has_projection) m.projection = nn::Mlp::from_json(j.at("projection"));
    if (j.contains("labeler")) m.final_labeler = PseudoLabeler::from_json(j.at("labeler"));
    m.config = TrainConfig::from_json(j.at("config"));
    return m;
}

nlohmann::json OccModel::to_json() const {
    return nlohmann::json{{"kind", "occ"}, {"method", method}, {"scaler", scaler_to_json(scaler)},
                          {"occ", occ.to_json()}};
}

OccModel OccModel::from_json(const nlohmann::json& j) {
    OccModel m;
    m.method = j.at("method").get<std::string>();
    m.scaler = scaler_from_json(j.at("scaler"));
    m.occ = GaussianOcc::from_json(j.at("occ"));
    return m;
}

const std::string& AnyModel::method() const {
    return std::visit([](const auto& m) -> const std::string& { return m.method; }, impl);
}

Vector AnyModel::predict_scores(const Matrix& x_raw) const {
    return std::visit([&](const auto& m) { return m.predict_scores(x_raw); }, impl);
}

nlohmann::json AnyModel::to_json() const {
    return std::visit([](const auto& m) { return m.to_json(); }, impl);
}

AnyModel AnyModel::from_json(const nlohmann::json& j) {
    AnyModel m;
    if (j.at("kind").get<std::string>() == "occ")
        m.impl = OccModel::from_json(j);
    else
        m.impl = SpadeModel::from_json(j);
    return m;
}

void write_trace_csv(const std::filesystem::path& path, const SpadeModel& model) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_trace_csv: cannot open '" + path.string() + "'");
    std::size_t k = 0;
    for (const auto& r : model.trace) k = std::max(k, r.eta_p.size());

    std::vector<std::string> header = {"epoch", "loss_labeled", "loss_pseudo",  "loss_recon",
                                       "total", "n_pos",        "n_neg",        "n_unknown",
                                       "n_conflicts", "alpha",  "beta",         "k",
                                       "seed"};
    for (std::size_t i = 1; i <= k; ++i) header.push_back("eta_p_" + std::to_string(i));
    for (std::size_t i = 1; i <= k; ++i) header.push_back("eta_n_" + std::to_string(i));
    out << csv_encode_row(header) << '\n';

    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    for (const auto& r : model.trace) {
        std::vector<std::string> row = {std::to_string(r.epoch), num(r.loss_labeled), num(r.loss_pseudo),
                                        num(r.loss_recon),       num(r.total),        std::to_string(r.n_pos),
                                        std::to_string(r.n_neg), std::to_string(r.n_unknown),
                                        std::to_string(r.n_conflicts), num(model.config.alpha),
                                        num(model.config.beta),  std::to_string(model.config.k),
                                        std::to_string(model.config.seed)};
        for (std::size_t i = 0; i < k; ++i) row.push_back(i < r.eta_p.size() ? num(r.eta_p[i]) : "");
        for (std::size_t i = 0; i < k; ++i) row.push_back(i < r.eta_n.size() ? num(r.eta_n[i]) : "");
        out << csv_encode_row(row) << '\n';
    }
}

}  // namespace spade
