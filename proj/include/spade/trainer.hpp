#pragma once

#include "spade/dataset.hpp"
#include "spade/neuralnet.hpp"
#include "spade/occ.hpp"
#include "spade/pseudo_labeler.hpp"
#include "spade/scenarios.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace spade {

struct TrainConfig {
    double alpha = 1.0;  // weight of the pseudo-label loss
    double beta = 1.0;   // weight of the reconstruction loss
    int k = 5;           // OCC ensemble size
    int patience = 5;
    int max_epochs = 200;
    int batch_size = 256;
    double learning_rate = 1e-3;
    double min_improvement = 1e-6;
    std::uint64_t seed = 0;
    bool warm_start_raw_features = false;  // epoch-1 labeler on raw standardized features
    PseudoLabelerConfig labeler;           // k is taken from this->k

    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

struct EpochRecord {
    int epoch = 0;
    double loss_labeled = 0.0;
    double loss_pseudo = 0.0;
    double loss_recon = 0.0;
    double total = 0.0;
    std::size_t n_pos = 0, n_neg = 0, n_unknown = 0, n_conflicts = 0;
    std::vector<double> eta_p, eta_n;
};

struct SpadeNets {
    nn::Mlp encoder;     // h: two ReLU layers, hidden width ceil(d/2)
    nn::Mlp predictor;   // q: affine + sigmoid on the representation
    nn::Mlp projection;  // g: affine back to the input space
};

/// Deterministic network construction for a given input dim and seed; the
/// training entry points below build their nets through this.
SpadeNets make_spade_networks(Eigen::Index dim, std::uint64_t seed);

struct SpadeModel {
    std::string method;  // spade | supervised | negative_supervised
    Scaler scaler;
    nn::Mlp encoder;
    nn::Mlp predictor;
    nn::Mlp projection;
    bool has_projection = false;
    std::optional<PseudoLabeler> final_labeler;
    std::vector<EpochRecord> trace;
    TrainConfig config;

    /// q(h(scale(x))): anomaly scores in [0,1]; the pseudo-labeler plays no
    /// part at inference time.
    Vector predict_scores(const Matrix& x_raw) const;

    nlohmann::json to_json() const;
    static SpadeModel from_json(const nlohmann::json& j);
};

struct OccModel {
    std::string method;  // occ | negative_occ
    Scaler scaler;
    GaussianOcc occ;
    Vector predict_scores(const Matrix& x_raw) const;

    nlohmann::json to_json() const;
    static OccModel from_json(const nlohmann::json& j);
};

/// Alg. 1: per-epoch pseudo-labeler rebuild on current representations, then
/// mini-batch updates of encoder/predictor/projection under
/// L_labeled + alpha * L_pseudo + beta * L_reconstruction.
SpadeModel train_spade(const ScenarioSplit& split, const TrainConfig& cfg);

SpadeModel train_supervised(const Dataset& labeled, const TrainConfig& cfg,
                            const std::optional<Scaler>& scaler = {});

/// Supervised training over labeled plus all unlabeled data with target 0.
SpadeModel train_negative_supervised(const Dataset& labeled, const Dataset& unlabeled,
                                     const TrainConfig& cfg, const std::optional<Scaler>& scaler = {});

OccModel occ_baseline(const Dataset& labeled_normals, const std::optional<Scaler>& scaler = {});
OccModel negative_occ_baseline(const Dataset& labeled_normals, const Dataset& unlabeled,
                               const std::optional<Scaler>& scaler = {});

/// Uniform handle over the trainable methods, for checkpoints and evaluation.
struct AnyModel {
    std::variant<SpadeModel, OccModel> impl;

    const std::string& method() const;
    Vector predict_scores(const Matrix& x_raw) const;
    nlohmann::json to_json() const;
    static AnyModel from_json(const nlohmann::json& j);
};

void write_trace_csv(const std::filesystem::path& path, const SpadeModel& model);

}  // namespace spade
