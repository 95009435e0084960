#pragma once

#include "spade/common.hpp"

#include <json.hpp>

#include <vector>

namespace spade::nn {

enum class Activation { kIdentity, kRelu, kSigmoid };

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);

struct DenseLayer {
    Matrix w;  // out x in
    Vector b;  // out
    Activation act = Activation::kIdentity;
};

/// Dense feed-forward network over row-major sample matrices (n x dim).
/// Weights initialize from U(-1/sqrt(fan_in), 1/sqrt(fan_in)) drawn from the
/// caller's RNG, biases at zero.
class Mlp {
public:
    Mlp() = default;
    Mlp(const std::vector<Eigen::Index>& dims, const std::vector<Activation>& acts, Rng& rng);

    struct Cache {
        Matrix input;
        std::vector<Matrix> pre;   // per layer, before activation
        std::vector<Matrix> post;  // per layer, after activation
    };

    Matrix forward(const Matrix& x, Cache* cache = nullptr) const;

    struct Gradients {
        std::vector<Matrix> dw;
        std::vector<Vector> db;
        Matrix dinput;
    };

    /// Backpropagates an upstream dL/d(output) through the cached forward
    /// pass; gradients are exact for the composed map.
    Gradients backward(const Matrix& upstream, const Cache& cache) const;

    Eigen::Index in_dim() const { return layers_.empty() ? 0 : layers_.front().w.cols(); }
    Eigen::Index out_dim() const { return layers_.empty() ? 0 : layers_.back().w.rows(); }
    std::size_t layer_count() const { return layers_.size(); }
    const std::vector<DenseLayer>& layers() const { return layers_; }
    std::vector<DenseLayer>& layers() { return layers_; }

    Eigen::Index parameter_count() const;
    Vector parameters() const;                 // row-major w then b, per layer
    void set_parameters(const Vector& theta);
    Vector flatten(const Gradients& g) const;

    nlohmann::json to_json() const;
    static Mlp from_json(const nlohmann::json& j);

private:
    std::vector<DenseLayer> layers_;
};

struct LossResult {
    double value = 0.0;
    Matrix grad;  // dL/d(input of the loss), same shape as the prediction
};

/// Weighted binary cross entropy over probabilities. Weights must be 0/1 and
/// targets 0/1; the mean runs over weight-1 samples, weight-0 samples
/// contribute exactly nothing, and an all-zero weight vector yields loss 0
/// with a zero gradient. Probabilities are clamped to [1e-7, 1 - 1e-7].
LossResult bce_loss(const Vector& probs, const Vector& targets, const Vector& weights);

/// Mean squared error over all entries.
LossResult mse_loss(const Matrix& x_hat, const Matrix& x);

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adaptive-moment optimizer state over a flat parameter vector.
class AdamState {
public:
    AdamState(Eigen::Index n, const AdamConfig& cfg = {});
    void step(Vector& params, const Vector& grad);
    long step_count() const { return step_; }
    const AdamConfig& config() const { return cfg_; }

private:
    AdamConfig cfg_;
    Vector m_, v_;
    long step_ = 0;
};

struct LogisticConfig {
    int max_iters = 500;
    double learning_rate = 0.1;
    double l2 = 1e-4;
    double grad_tol = 1e-6;
};

struct LogisticModel {
    Vector w;
    double b = 0.0;
};

/// Full-batch gradient descent on the L2-regularized logistic loss from a
/// zero initialization; runs until the gradient norm drops below grad_tol or
/// max_iters passes.
LogisticModel fit_logistic(const Matrix& x, const std::vector<int>& y, const LogisticConfig& cfg = {});
Vector predict_proba(const LogisticModel& model, const Matrix& x);

}  // namespace spade::nn
