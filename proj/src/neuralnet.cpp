#include "spade/neuralnet.hpp"

#include <cmath>
#include <stdexcept>

namespace spade::nn {

namespace {

constexpr double kProbClamp = 1e-7;

Matrix apply_activation(const Matrix& z, Activation a) {
    switch (a) {
        case Activation::kIdentity: return z;
        case Activation::kRelu: return z.cwiseMax(0.0);
        case Activation::kSigmoid: return (1.0 / (1.0 + (-z.array()).exp())).matrix();
    }
    throw std::logic_error("unknown activation");
}

// Derivative in terms of pre-activation z and activation output a.
Matrix activation_grad(const Matrix& z, const Matrix& a, Activation act) {
    switch (act) {
        case Activation::kIdentity: return Matrix::Ones(z.rows(), z.cols());
        case Activation::kRelu: return (z.array() > 0.0).cast<double>().matrix();
        case Activation::kSigmoid: return (a.array() * (1.0 - a.array())).matrix();
    }
    throw std::logic_error("unknown activation");
}

}  // namespace

const char* activation_name(Activation a) {
    switch (a) {
        case Activation::kIdentity: return "identity";
        case Activation::kRelu: return "relu";
        case Activation::kSigmoid: return "sigmoid";
    }
    throw std::logic_error("unknown activation");
}

Activation activation_from_name(const std::string& name) {
    if (name == "identity") return Activation::kIdentity;
    if (name == "relu") return Activation::kRelu;
    if (name == "sigmoid") return Activation::kSigmoid;
    throw std::invalid_argument("unknown activation '" + name + "'");
}

Mlp::Mlp(const std::vector<Eigen::Index>& dims, const std::vector<Activation>& acts, Rng& rng) {
    if (dims.size() < 2 || acts.size() != dims.size() - 1)
        throw std::invalid_argument("Mlp: need dims of length L+1 and one activation per layer");
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    layers_.reserve(acts.size());
    for (std::size_t l = 0; l < acts.size(); ++l) {
        DenseLayer layer;
        Eigen::Index in = dims[l], out = dims[l + 1];
        if (in < 1 || out < 1) throw std::invalid_argument("Mlp: layer dims must be positive");
        double bound = 1.0 / std::sqrt(static_cast<double>(in));
        layer.w.resize(out, in);
        for (Eigen::Index r = 0; r < out; ++r)
            for (Eigen::Index c = 0; c < in; ++c)
                layer.w(r, c) = (2.0 * unit(rng) - 1.0) * bound;
        // Small positive bias keeps narrow ReLU layers from starting dead.
        layer.b = acts[l] == Activation::kRelu ? Vector::Constant(out, 0.01) : Vector::Zero(out);
        layer.act = acts[l];
        layers_.push_back(std::move(layer));
    }
}

Matrix Mlp::forward(const Matrix& x, Cache* cache) const {
    if (layers_.empty()) throw std::logic_error("Mlp::forward: uninitialized network");
    if (x.cols() != in_dim())
        throw std::invalid_argument("Mlp::forward: input has " + std::to_string(x.cols()) +
                                    " features, expected " + std::to_string(in_dim()));
    if (cache) {
        cache->input = x;
        cache->pre.clear();
        cache->post.clear();
    }
    Matrix a = x;
    for (const auto& layer : layers_) {
        Matrix z = (a * layer.w.transpose()).rowwise() + layer.b.transpose();
        a = apply_activation(z, layer.act);
        if (cache) {
            cache->pre.push_back(std::move(z));
            cache->post.push_back(a);
        }
    }
    return a;
}

Mlp::Gradients Mlp::backward(const Matrix& upstream, const Cache& cache) const {
    if (cache.pre.size() != layers_.size() || cache.post.size() != layers_.size())
        throw std::invalid_argument("Mlp::backward: cache does not match this network");
    if (cache.input.cols() != in_dim() || upstream.rows() != cache.input.rows() ||
        upstream.cols() != out_dim())
        throw std::invalid_argument("Mlp::backward: stale or mismatched cache");

    Gradients g;
    g.dw.resize(layers_.size());
    g.db.resize(layers_.size());
    Matrix da = upstream;
    for (std::size_t li = layers_.size(); li-- > 0;) {
        const DenseLayer& layer = layers_[li];
        if (cache.pre[li].rows() != upstream.rows() || cache.pre[li].cols() != layer.w.rows())
            throw std::invalid_argument("Mlp::backward: stale cache at layer " + std::to_string(li));
        Matrix dz = da.cwiseProduct(activation_grad(cache.pre[li], cache.post[li], layer.act));
        const Matrix& prev = li == 0 ? cache.input : cache.post[li - 1];
        g.dw[li] = dz.transpose() * prev;
        g.db[li] = dz.colwise().sum().transpose();
        da = dz * layer.w;
    }
    g.dinput = std::move(da);
    return g;
}

Eigen::Index Mlp::parameter_count() const {
    Eigen::Index n = 0;
    for (const auto& l : layers_) n += l.w.size() + l.b.size();
    return n;
}

Vector Mlp::parameters() const {
    Vector theta(parameter_count());
    Eigen::Index pos = 0;
    for (const auto& l : layers_) {
        for (Eigen::Index r = 0; r < l.w.rows(); ++r)
            for (Eigen::Index c = 0; c < l.w.cols(); ++c) theta[pos++] = l.w(r, c);
        for (Eigen::Index r = 0; r < l.b.size(); ++r) theta[pos++] = l.b[r];
    }
    return theta;
}

void Mlp::set_parameters(const Vector& theta) {
    if (theta.size() != parameter_count())
        throw std::invalid_argument("Mlp::set_parameters: size mismatch");
    Eigen::Index pos = 0;
    for (auto& l : layers_) {
        for (Eigen::Index r = 0; r < l.w.rows(); ++r)
            for (Eigen::Index c = 0; c < l.w.cols(); ++c) l.w(r, c) = theta[pos++];
        for (Eigen::Index r = 0; r < l.b.size(); ++r) l.b[r] = theta[pos++];
    }
}

Vector Mlp::flatten(const Gradients& g) const {
    Vector flat(parameter_count());
    Eigen::Index pos = 0;
    for (std::size_t li = 0; li < layers_.size(); ++li) {
        const Matrix& dw = g.dw[li];
        for (Eigen::Index r = 0; r < dw.rows(); ++r)
            for (Eigen::Index c = 0; c < dw.cols(); ++c) flat[pos++] = dw(r, c);
        for (Eigen::Index r = 0; r < g.db[li].size(); ++r) flat[pos++] = g.db[li][r];
    }
    return flat;
}

nlohmann::json Mlp::to_json() const {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : layers_) {
        nlohmann::json jl;
        jl["in"] = l.w.cols();
        jl["out"] = l.w.rows();
        jl["activation"] = activation_name(l.act);
        std::vector<double> w;  // row-major
        w.reserve(static_cast<std::size_t>(l.w.size()));
        for (Eigen::Index r = 0; r < l.w.rows(); ++r)
            for (Eigen::Index c = 0; c < l.w.cols(); ++c) w.push_back(l.w(r, c));
        jl["w"] = w;
        jl["b"] = std::vector<double>(l.b.data(), l.b.data() + l.b.size());
        layers.push_back(std::move(jl));
    }
    return nlohmann::json{{"layers", layers}};
}

Mlp Mlp::from_json(const nlohmann::json& j) {
    Mlp mlp;
    for (const auto& jl : j.at("layers")) {
        DenseLayer l;
        Eigen::Index in = jl.at("in").get<Eigen::Index>();
        Eigen::Index out = jl.at("out").get<Eigen::Index>();
        l.act = activation_from_name(jl.at("activation").get<std::string>());
        auto w = jl.at("w").get<std::vector<double>>();
        auto b = jl.at("b").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(w.size()) != in * out || static_cast<Eigen::Index>(b.size()) != out)
            throw std::invalid_argument("Mlp::from_json: weight shape mismatch");
        l.w.resize(out, in);
        for (Eigen::Index r = 0; r < out; ++r)
            for (Eigen::Index c = 0; c < in; ++c) l.w(r, c) = w[static_cast<std::size_t>(r * in + c)];
        l.b = Eigen::Map<const Vector>(b.data(), out);
        mlp.layers_.push_back(std::move(l));
    }
    if (mlp.layers_.empty()) throw std::invalid_argument("Mlp::from_json: no layers");
    return mlp;
}

// ---------------------------------------------------------------------------
// Losses

LossResult bce_loss(const Vector& probs, const Vector& targets, const Vector& weights) {
    if (probs.size() != targets.size() || probs.size() != weights.size())
        throw std::invalid_argument("bce_loss: size mismatch");
    LossResult out;
    out.grad = Matrix::Zero(probs.size(), 1);
    double weight_sum = 0.0;
    for (Eigen::Index i = 0; i < weights.size(); ++i) {
        double w = weights[i];
        if (w != 0.0 && w != 1.0) throw std::invalid_argument("bce_loss: weights must be 0 or 1");
        double y = targets[i];
        if (y != 0.0 && y != 1.0) throw std::invalid_argument("bce_loss: targets must be 0 or 1");
        weight_sum += w;
    }
    if (weight_sum == 0.0) return out;  // loss 0, zero gradient

    double loss = 0.0;
    for (Eigen::Index i = 0; i < probs.size(); ++i) {
        if (weights[i] == 0.0) continue;
        double p = std::min(1.0 - kProbClamp, std::max(kProbClamp, probs[i]));
        double y = targets[i];
        loss += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
        // Clamped region is flat: no gradient once p leaves [clamp, 1-clamp].
        if (probs[i] > kProbClamp && probs[i] < 1.0 - kProbClamp)
            out.grad(i, 0) = (p - y) / (p * (1.0 - p)) / weight_sum;
    }
    out.value = loss / weight_sum;
    return out;
}

LossResult mse_loss(const Matrix& x_hat, const Matrix& x) {
    if (x_hat.rows() != x.rows() || x_hat.cols() != x.cols())
        throw std::invalid_argument("mse_loss: shape mismatch");
    LossResult out;
    double n = static_cast<double>(x.size());
    Matrix diff = x_hat - x;
    out.value = diff.array().square().sum() / n;
    out.grad = (2.0 / n) * diff;
    return out;
}

// ---------------------------------------------------------------------------
// Adam

AdamState::AdamState(Eigen::Index n, const AdamConfig& cfg)
    : cfg_(cfg), m_(Vector::Zero(n)), v_(Vector::Zero(n)) {}

void AdamState::step(Vector& params, const Vector& grad) {
    if (params.size() != m_.size() || grad.size() != m_.size())
        throw std::invalid_argument("AdamState::step: size mismatch");
    ++step_;
    m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * grad;
    v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * grad.cwiseProduct(grad);
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    Vector m_hat = m_ / bc1;
    Vector v_hat = v_ / bc2;
    params -= cfg_.learning_rate * (m_hat.array() / (v_hat.array().sqrt() + cfg_.eps)).matrix();
}

// ---------------------------------------------------------------------------
// Logistic regression

LogisticModel fit_logistic(const Matrix& x, const std::vector<int>& y, const LogisticConfig& cfg) {
    if (static_cast<std::size_t>(x.rows()) != y.size())
        throw std::invalid_argument("fit_logistic: X/y size mismatch");
    if (x.rows() == 0) throw std::invalid_argument("fit_logistic: empty input");
    bool has0 = false, has1 = false;
    for (int v : y) {
        if (v == 0) has0 = true;
        else if (v == 1) has1 = true;
        else throw std::invalid_argument("fit_logistic: labels must be 0 or 1");
    }
    if (!has0 || !has1) throw std::invalid_argument("fit_logistic: both classes must be present");

    const double n = static_cast<double>(x.rows());
    Vector yv(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) yv[i] = static_cast<double>(y[static_cast<std::size_t>(i)]);

    LogisticModel model;
    model.w = Vector::Zero(x.cols());
    model.b = 0.0;
    for (int it = 0; it < cfg.max_iters; ++it) {
        Vector logits = x * model.w;
        logits.array() += model.b;
        Vector p = (1.0 / (1.0 + (-logits.array()).exp())).matrix();
        Vector err = (p - yv) / n;
        Vector gw = x.transpose() * err + cfg.l2 * model.w;
        double gb = err.sum();
        if (!gw.allFinite() || !std::isfinite(gb))
            throw std::runtime_error("fit_logistic: non-finite gradient at iteration " + std::to_string(it) +
                                     " (lr=" + std::to_string(cfg.learning_rate) + ")");
        double gnorm = std::sqrt(gw.squaredNorm() + gb * gb);
        if (gnorm < cfg.grad_tol) break;
        model.w -= cfg.learning_rate * gw;
        model.b -= cfg.learning_rate * gb;
    }
    if (!model.w.allFinite() || !std::isfinite(model.b))
        throw std::runtime_error("fit_logistic: diverged to non-finite parameters");
    return model;
}

Vector predict_proba(const LogisticModel& model, const Matrix& x) {
    if (x.cols() != model.w.size()) throw std::invalid_argument("predict_proba: dimension mismatch");
    Vector logits = x * model.w;
    logits.array() += model.b;
    return (1.0 / (1.0 + (-logits.array()).exp())).matrix();
}

}  // namespace spade::nn
