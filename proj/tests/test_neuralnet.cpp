#include "spade/neuralnet.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

using namespace spade;
using namespace spade::nn;

namespace {

Matrix random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
    std::uniform_real_distribution<double> u(-scale, scale);
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = u(rng);
    return m;
}

Mlp random_net(Rng& rng, const std::vector<Eigen::Index>& dims, const std::vector<Activation>& acts) {
    return Mlp(dims, acts, rng);
}

// Central finite differences of a scalar function of the flat parameters.
Vector fd_gradient(Mlp& net, const Matrix& x, const std::function<double(const Matrix&)>& loss_of_output,
                   double h = 1e-5) {
    Vector theta = net.parameters();
    Vector grad(theta.size());
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
        Vector tp = theta, tm = theta;
        tp[i] += h;
        tm[i] -= h;
        net.set_parameters(tp);
        double up = loss_of_output(net.forward(x));
        net.set_parameters(tm);
        double down = loss_of_output(net.forward(x));
        grad[i] = (up - down) / (2.0 * h);
    }
    net.set_parameters(theta);
    return grad;
}

void check_close(const Vector& a, const Vector& b, double rel_tol) {
    REQUIRE(a.size() == b.size());
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        double denom = std::max({std::abs(a[i]), std::abs(b[i]), 1e-8});
        CHECK(std::abs(a[i] - b[i]) / denom < rel_tol);
    }
}

}  // namespace

TEST_CASE("forward identity layer passes input through") {
    Mlp net;
    DenseLayer l;
    l.w = Matrix::Identity(3, 3);
    l.b = Vector::Zero(3);
    l.act = Activation::kIdentity;
    net.layers().push_back(l);
    Rng rng(0);
    Matrix x = random_matrix(rng, 5, 3);
    CHECK((net.forward(x) - x).norm() == doctest::Approx(0.0));
}

TEST_CASE("zero-weight sigmoid layer outputs one half") {
    Mlp net;
    DenseLayer l;
    l.w = Matrix::Zero(2, 4);
    l.b = Vector::Zero(2);
    l.act = Activation::kSigmoid;
    net.layers().push_back(l);
    Rng rng(1);
    Matrix out = net.forward(random_matrix(rng, 7, 4, 3.0));
    CHECK((out.array() - 0.5).abs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("forward of a random three-layer net is finite") {
    Rng rng(2);
    Mlp net = random_net(rng, {6, 5, 4, 2},
                         {Activation::kRelu, Activation::kSigmoid, Activation::kIdentity});
    Matrix out = net.forward(random_matrix(rng, 11, 6, 4.0));
    CHECK(out.allFinite());
}

TEST_CASE("forward rejects dimension mismatches; backward rejects stale caches") {
    Rng rng(3);
    Mlp net = random_net(rng, {4, 3}, {Activation::kRelu});
    CHECK_THROWS_AS(net.forward(Matrix::Zero(2, 5)), std::invalid_argument);

    Mlp::Cache cache;
    net.forward(random_matrix(rng, 6, 4), &cache);
    Mlp other = random_net(rng, {4, 3, 2}, {Activation::kRelu, Activation::kIdentity});
    CHECK_THROWS_AS(other.backward(Matrix::Zero(6, 2), cache), std::invalid_argument);
    CHECK_THROWS_AS(net.backward(Matrix::Zero(9, 3), cache), std::invalid_argument);
}

TEST_CASE("bce_loss analytic values") {
    Vector p(3), y(3), w(3);
    y << 1, 0, 1;
    w << 1, 1, 1;

    p << 1.0, 0.0, 1.0;  // p == y up to the clamp
    CHECK(bce_loss(p, y, w).value == doctest::Approx(0.0).epsilon(1e-6));

    p << 0.5, 0.5, 0.5;
    CHECK(bce_loss(p, y, w).value == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("bce_loss weights zero out samples exactly") {
    Rng rng(4);
    std::uniform_real_distribution<double> u(0.05, 0.95);
    Vector p(8), y(8), w(8);
    for (int i = 0; i < 8; ++i) {
        p[i] = u(rng);
        y[i] = i % 2;
        w[i] = i < 4 ? 1.0 : 0.0;
    }
    LossResult full = bce_loss(p, y, w);

    // Same loss computed over the kept half only.
    LossResult kept = bce_loss(p.head(4), y.head(4), Vector::Ones(4));
    CHECK(full.value == doctest::Approx(kept.value).epsilon(1e-12));
    for (int i = 4; i < 8; ++i) CHECK(full.grad(i, 0) == 0.0);

    // Perturbing a zero-weight sample's probability changes nothing at all.
    Vector p2 = p;
    p2[6] = u(rng);
    LossResult perturbed = bce_loss(p2, y, w);
    CHECK(perturbed.value == full.value);
    CHECK((perturbed.grad - full.grad).norm() == 0.0);

    // All-zero weights: loss 0, zero gradient.
    LossResult none = bce_loss(p, y, Vector::Zero(8));
    CHECK(none.value == 0.0);
    CHECK(none.grad.norm() == 0.0);
}

TEST_CASE("bce_loss validation") {
    Vector p = Vector::Constant(2, 0.5), ones = Vector::Ones(2);
    Vector bad_target(2);
    bad_target << 0.5, 1.0;
    CHECK_THROWS_AS(bce_loss(p, bad_target, ones), std::invalid_argument);
    Vector bad_weight(2);
    bad_weight << 0.7, 1.0;
    CHECK_THROWS_AS(bce_loss(p, Vector::Zero(2), bad_weight), std::invalid_argument);
}

TEST_CASE("mse_loss values and independent recomputation") {
    Rng rng(5);
    Matrix x = random_matrix(rng, 4, 3);
    CHECK(mse_loss(x, x).value == doctest::Approx(0.0));
    CHECK(mse_loss((x.array() + 1.0).matrix(), x).value == doctest::Approx(1.0).epsilon(1e-12));

    Matrix x_hat = random_matrix(rng, 4, 3);
    double manual = 0.0;
    for (Eigen::Index i = 0; i < 4; ++i)
        for (Eigen::Index j = 0; j < 3; ++j) manual += (x_hat(i, j) - x(i, j)) * (x_hat(i, j) - x(i, j));
    manual /= 12.0;
    CHECK(mse_loss(x_hat, x).value == doctest::Approx(manual).epsilon(1e-12));
}

TEST_CASE("backward matches central finite differences on random small nets") {
    Rng rng(6);
    std::vector<std::vector<Activation>> act_choices = {
        {Activation::kRelu, Activation::kIdentity},
        {Activation::kSigmoid, Activation::kSigmoid},
        {Activation::kRelu, Activation::kSigmoid},
    };
    for (int trial = 0; trial < 20; ++trial) {
        std::uniform_int_distribution<Eigen::Index> dim(1, 5);
        Eigen::Index d0 = dim(rng), d1 = dim(rng), d2 = dim(rng);
        auto acts = act_choices[static_cast<std::size_t>(trial) % act_choices.size()];
        Mlp net = random_net(rng, {d0, d1, d2}, acts);
        Matrix x = random_matrix(rng, 6, d0);
        Matrix target = random_matrix(rng, 6, d2);

        // Scalar objective: MSE against a fixed target.
        auto objective = [&](const Matrix& out) { return mse_loss(out, target).value; };

        Mlp::Cache cache;
        Matrix out = net.forward(x, &cache);
        Mlp::Gradients g = net.backward(mse_loss(out, target).grad, cache);
        check_close(net.flatten(g), fd_gradient(net, x, objective), 1e-4);
    }
}

TEST_CASE("backward through the weighted BCE path matches finite differences") {
    Rng rng(7);
    for (int trial = 0; trial < 10; ++trial) {
        Mlp net = random_net(rng, {4, 3, 1}, {Activation::kRelu, Activation::kSigmoid});
        Matrix x = random_matrix(rng, 8, 4);
        Vector y(8), w(8);
        for (int i = 0; i < 8; ++i) {
            y[i] = (i * 7 + trial) % 2;
            w[i] = (i + trial) % 3 == 0 ? 0.0 : 1.0;
        }
        auto objective = [&](const Matrix& out) { return bce_loss(out.col(0), y, w).value; };
        Mlp::Cache cache;
        Matrix out = net.forward(x, &cache);
        Mlp::Gradients g = net.backward(bce_loss(out.col(0), y, w).grad, cache);
        check_close(net.flatten(g), fd_gradient(net, x, objective), 1e-4);
    }
}

TEST_CASE("zero upstream gradient yields zero parameter gradients") {
    Rng rng(8);
    Mlp net = random_net(rng, {5, 4, 3}, {Activation::kRelu, Activation::kSigmoid});
    Matrix x = random_matrix(rng, 6, 5);
    Mlp::Cache cache;
    net.forward(x, &cache);
    Mlp::Gradients g = net.backward(Matrix::Zero(6, 3), cache);
    CHECK(net.flatten(g).norm() == 0.0);
}

TEST_CASE("linear net with MSE matches the least-squares gradient") {
    Rng rng(9);
    Mlp net = random_net(rng, {3, 2}, {Activation::kIdentity});
    Matrix x = random_matrix(rng, 10, 3);
    Matrix target = random_matrix(rng, 10, 2);

    Mlp::Cache cache;
    Matrix out = net.forward(x, &cache);
    Mlp::Gradients g = net.backward(mse_loss(out, target).grad, cache);

    // d/dW mean((XW^T + b - T)^2) = 2/(n*m) * (XW^T + b - T)^T X
    Matrix resid = out - target;
    Matrix dw = (2.0 / static_cast<double>(out.size())) * resid.transpose() * x;
    Vector db = (2.0 / static_cast<double>(out.size())) * resid.colwise().sum().transpose();
    CHECK((g.dw[0] - dw).norm() < 1e-12);
    CHECK((g.db[0] - db).norm() < 1e-12);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
    AdamState adam(4, {0.01, 0.9, 0.999, 1e-8});
    Vector p = Vector::LinSpaced(4, 1.0, 4.0), orig = p;
    for (int i = 0; i < 5; ++i) adam.step(p, Vector::Zero(4));
    CHECK((p - orig).norm() == 0.0);
}

TEST_CASE("adam: constant gradient moves parameters against its sign") {
    AdamState adam(2, {0.01, 0.9, 0.999, 1e-8});
    Vector p = Vector::Zero(2);
    Vector g(2);
    g << 3.0, -0.25;
    for (int i = 0; i < 50; ++i) adam.step(p, g);
    CHECK(p[0] < 0.0);
    CHECK(p[1] > 0.0);
}

TEST_CASE("adam: two steps on a scalar match hand arithmetic") {
    const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    AdamState adam(1, {lr, b1, b2, eps});
    Vector p = Vector::Zero(1);
    Vector g(1);
    g << 1.0;

    // Step 1.
    double m = (1 - b1) * 1.0;
    double v = (1 - b2) * 1.0;
    double p_expect = 0.0 - lr * (m / (1 - b1)) / (std::sqrt(v / (1 - b2)) + eps);
    adam.step(p, g);
    CHECK(p[0] == doctest::Approx(p_expect).epsilon(1e-15));

    // Step 2 with the same gradient.
    m = b1 * m + (1 - b1) * 1.0;
    v = b2 * v + (1 - b2) * 1.0;
    p_expect -= lr * (m / (1 - b1 * b1)) / (std::sqrt(v / (1 - b2 * b2)) + eps);
    adam.step(p, g);
    CHECK(p[0] == doctest::Approx(p_expect).epsilon(1e-15));
}

TEST_CASE("logistic regression separates linearly separable blobs") {
    Rng rng(10);
    std::normal_distribution<double> gn(0.0, 0.5);
    Matrix x(40, 2);
    std::vector<int> y(40);
    for (int i = 0; i < 40; ++i) {
        bool pos = i % 2 == 0;
        x(i, 0) = gn(rng) + (pos ? 3.0 : -3.0);
        x(i, 1) = gn(rng);
        y[static_cast<std::size_t>(i)] = pos ? 1 : 0;
    }
    LogisticModel m = fit_logistic(x, y);
    Vector p = predict_proba(m, x);
    for (int i = 0; i < 40; ++i) CHECK(((p[i] >= 0.5) == (y[static_cast<std::size_t>(i)] == 1)));
}

TEST_CASE("logistic regression on label-independent features predicts the prior") {
    Rng rng(11);
    std::normal_distribution<double> gn(0.0, 1.0);
    Matrix x(400, 3);
    std::vector<int> y(400);
    for (int i = 0; i < 400; ++i) {
        for (int j = 0; j < 3; ++j) x(i, j) = gn(rng);
        y[static_cast<std::size_t>(i)] = i < 100 ? 1 : 0;  // prior 0.25, independent of x
    }
    LogisticConfig cfg;
    cfg.max_iters = 3000;
    LogisticModel m = fit_logistic(x, y, cfg);
    Vector p = predict_proba(m, x);
    CHECK(p.mean() == doctest::Approx(0.25).epsilon(0.05));
    CHECK((p.array() - 0.25).abs().maxCoeff() < 0.15);
}

TEST_CASE("flipping labels negates the logistic parameters") {
    Rng rng(12);
    std::normal_distribution<double> gn(0.0, 1.0);
    Matrix x(60, 2);
    std::vector<int> y(60), y_flip(60);
    for (int i = 0; i < 60; ++i) {
        x(i, 0) = gn(rng);
        x(i, 1) = gn(rng) + (i % 2 ? 1.0 : -1.0);
        y[static_cast<std::size_t>(i)] = i % 2;
        y_flip[static_cast<std::size_t>(i)] = 1 - i % 2;
    }
    LogisticModel a = fit_logistic(x, y);
    LogisticModel b = fit_logistic(x, y_flip);
    CHECK((a.w + b.w).norm() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(a.b + b.b == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("logistic regression rejects single-class input") {
    Matrix x = Matrix::Zero(5, 2);
    CHECK_THROWS_AS(fit_logistic(x, std::vector<int>(5, 1)), std::invalid_argument);
    CHECK_THROWS_AS(fit_logistic(x, std::vector<int>{0, 1, 2, 0, 1}), std::invalid_argument);
}

TEST_CASE("mlp json round trip preserves forward outputs") {
    Rng rng(13);
    Mlp net = random_net(rng, {5, 3, 2}, {Activation::kRelu, Activation::kSigmoid});
    Mlp back = Mlp::from_json(nlohmann::json::parse(net.to_json().dump()));
    Matrix x = random_matrix(rng, 9, 5, 2.0);
    CHECK((net.forward(x) - back.forward(x)).array().abs().maxCoeff() < 1e-10);
}

TEST_CASE("parameter flattening round-trips") {
    Rng rng(14);
    Mlp net = random_net(rng, {4, 3, 1}, {Activation::kRelu, Activation::kSigmoid});
    Vector theta = net.parameters();
    Mlp other = random_net(rng, {4, 3, 1}, {Activation::kRelu, Activation::kSigmoid});
    other.set_parameters(theta);
    CHECK((other.parameters() - theta).norm() == 0.0);
    Matrix x = random_matrix(rng, 5, 4);
    CHECK((net.forward(x) - other.forward(x)).norm() == 0.0);
}
