#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>

#include "oracles.hpp"
#include "viser/model.hpp"

using namespace viser;

namespace {

// Flatten/restore parameters for finite-difference checks over every weight.
std::vector<double> flatten(const MlpParams& p) {
    std::vector<double> out;
    auto push = [&out](const Eigen::MatrixXd& m) {
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
        }
    };
    push(p.w1);
    push(p.b1);
    push(p.w2);
    push(p.b2);
    push(p.w3);
    push(p.b3);
    return out;
}

MlpParams unflatten(const MlpShape& shape, const std::vector<double>& flat) {
    MlpParams p = init_params(shape, 0);
    std::size_t i = 0;
    auto pull = [&](Eigen::MatrixXd& m) {
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = flat[i++];
        }
    };
    Eigen::MatrixXd b;
    pull(p.w1);
    b = p.b1; pull(b); p.b1 = b;
    pull(p.w2);
    b = p.b2; pull(b); p.b2 = b;
    pull(p.w3);
    b = p.b3; pull(b); p.b3 = b;
    return p;
}

MlpParams random_params(const MlpShape& shape, std::uint64_t seed) {
    return init_params(shape, seed);
}

bool params_equal(const MlpParams& a, const MlpParams& b) {
    return a.shape == b.shape && a.w1 == b.w1 && a.w2 == b.w2 && a.w3 == b.w3 && a.b1 == b.b1 &&
           a.b2 == b.b2 && a.b3 == b.b3;
}

}  // namespace

TEST_CASE("forward trivial values") {
    MlpShape shape{3, 4, 2};
    MlpParams p = init_params(shape, 1);
    p.w1.setZero();
    p.w2.setZero();
    p.w3.setZero();
    const ForwardResult f = forward(p, {1.0, -2.0, 3.0});
    CHECK(f.logits == Eigen::VectorXd::Zero(2));
    for (Eigen::Index i = 0; i < f.penultimate.size(); ++i) CHECK(f.penultimate(i) == 0.0);
    CHECK(sigmoid(f.logits(0)) == 0.5);
    CHECK_THROWS_AS(forward(p, {1.0, 2.0}), ShapeError);
}

TEST_CASE("forward hand-computed width-1 network") {
    // D = H = N = 1, all weights 1, biases 0: logits = relu(relu(x))
    MlpShape shape{1, 1, 1};
    MlpParams p = init_params(shape, 2);
    p.w1(0, 0) = 1.0;
    p.w2(0, 0) = 1.0;
    p.w3(0, 0) = 1.0;
    CHECK(forward(p, {2.5}).logits(0) == 2.5);
    CHECK(forward(p, {-2.5}).logits(0) == 0.0);
    CHECK(sample_loss(p, {2.5}, {1}) == doctest::Approx(softplus(2.5) - 2.5).epsilon(1e-15));
}

TEST_CASE("penultimate is h2 normalized with the default width") {
    MlpShape shape{10, 100, 1};
    MlpParams p = random_params(shape, 3);
    Rng rng(4);
    const FeatureVector x = rng.gaussian_vector(10);
    const ForwardResult f = forward(p, x);
    REQUIRE(f.penultimate.size() == 100);
    for (Eigen::Index i = 0; i < 100; ++i) CHECK(f.penultimate(i) >= 0.0);
    const FeatureVector h = penultimate(p, x);
    CHECK(h.size() == 100);
    CHECK(std::abs(l2_norm(h) - 1.0) <= 1e-12);

    // a dead network has an all-zero penultimate layer
    p.w1.setZero();
    p.b1.setConstant(-1.0);
    CHECK_THROWS_AS(penultimate(p, x), ZeroVectorError);
}

TEST_CASE("backward matches finite differences for parameters and input") {
    Rng rng(5);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const MlpShape shape{1 + rng.uniform_int(5), 1 + rng.uniform_int(7), 1 + rng.uniform_int(3)};
        MlpParams p = random_params(shape, rng.next_u64());
        // random biases too, so relu gates vary
        for (Eigen::Index i = 0; i < p.b1.size(); ++i) p.b1(i) = rng.uniform(-0.5, 0.5);
        for (Eigen::Index i = 0; i < p.b2.size(); ++i) p.b2(i) = rng.uniform(-0.5, 0.5);
        for (Eigen::Index i = 0; i < p.b3.size(); ++i) p.b3(i) = rng.uniform(-0.5, 0.5);
        const FeatureVector x = rng.gaussian_vector(shape.input_dim);
        LabelVector y(shape.classes);
        for (auto& bit : y) bit = static_cast<std::uint8_t>(rng.uniform_int(2));

        const BackwardResult back = backward(p, x, y);
        const std::vector<double> analytic_params = flatten(back.grads);

        const auto loss_of_params = [&](const std::vector<double>& flat) {
            return sample_loss(unflatten(shape, flat), x, y);
        };
        const auto fd_params = oracles::finite_difference(loss_of_params, flatten(p));
        for (std::size_t i = 0; i < fd_params.size(); ++i) {
            worst = std::max(worst, oracles::rel_err(analytic_params[i], fd_params[i]));
        }

        const auto loss_of_input = [&](const std::vector<double>& xin) {
            return sample_loss(p, xin, y);
        };
        const auto fd_input = oracles::finite_difference(loss_of_input, x);
        for (std::size_t i = 0; i < fd_input.size(); ++i) {
            worst = std::max(worst, oracles::rel_err(back.input_grad(i), fd_input[i]));
        }
    }
    CHECK(worst < 1e-5);
}

TEST_CASE("input gradient of a dead network is zero") {
    MlpShape shape{4, 6, 2};
    MlpParams p = random_params(shape, 9);
    p.b1.setConstant(-100.0);  // every first-layer preactivation negative
    const BackwardResult back = backward(p, {0.1, 0.2, 0.3, 0.4}, {1, 0});
    for (Eigen::Index i = 0; i < back.input_grad.size(); ++i) CHECK(back.input_grad(i) == 0.0);
}

TEST_CASE("gradients are linear in the loss") {
    MlpShape shape{3, 5, 1};
    MlpParams p = random_params(shape, 11);
    const FeatureVector x{0.4, -0.2, 0.9};
    const LabelVector y{1};
    const BackwardResult once = backward(p, x, y);
    // duplicating a sample with sum reduction doubles every gradient
    Eigen::MatrixXd doubled = 2.0 * once.grads.w1;
    CHECK(doubled == once.grads.w1 + once.grads.w1);
    CHECK((2.0 * once.input_grad) == (once.input_grad + once.input_grad));
}

TEST_CASE("batch_logits agrees with per-sample forward") {
    MlpShape shape{6, 9, 3};
    MlpParams p = random_params(shape, 13);
    Rng rng(14);
    Eigen::MatrixXd inputs(6, 5);
    for (Eigen::Index c = 0; c < 5; ++c) {
        for (Eigen::Index r = 0; r < 6; ++r) inputs(r, c) = rng.normal();
    }
    const Eigen::MatrixXd z = batch_logits(p, inputs);
    for (Eigen::Index c = 0; c < 5; ++c) {
        FeatureVector x(6);
        for (Eigen::Index r = 0; r < 6; ++r) x[static_cast<std::size_t>(r)] = inputs(r, c);
        const ForwardResult f = forward(p, x);
        for (Eigen::Index k = 0; k < 3; ++k) {
            CHECK(z(k, c) == doctest::Approx(f.logits(k)).epsilon(1e-12));
        }
    }
}

TEST_CASE("train solves a separable two-point problem") {
    std::vector<LabeledSample> data{{{1.0, 0.0}, {1}}, {{-1.0, 0.0}, {0}}};
    TrainConfig cfg;
    cfg.iterations = 200;
    cfg.decay_steps = {};
    cfg.batch_size = 2;
    cfg.dropout_p = 0.0;
    cfg.learning_rate = 0.5;
    const TrainResult result = train(data, {2, 8, 1}, cfg);
    const auto scores = predict_scores(result.params, {{1.0, 0.0}, {-1.0, 0.0}});
    CHECK(scores[0] > 0.5);
    CHECK(scores[1] < 0.5);
    CHECK(result.loss_curve.size() == 200);
    CHECK(result.loss_curve.back() < result.loss_curve.front());
}

TEST_CASE("training is bitwise deterministic per seed") {
    Rng rng(15);
    std::vector<LabeledSample> data;
    for (int i = 0; i < 10; ++i) {
        data.push_back({rng.gaussian_vector(4), {static_cast<std::uint8_t>(i % 2)}});
    }
    TrainConfig cfg;
    cfg.iterations = 120;
    cfg.decay_steps = {60};
    cfg.batch_size = 4;
    cfg.seed = 77;

    for (Regularizer reg :
         {Regularizer::none, Regularizer::dropout, Regularizer::adversarial,
          Regularizer::virtual_adversarial}) {
        TrainOptions opts;
        opts.reg = reg;
        opts.pert.epsilon = 0.1;
        const TrainResult a = train(data, {4, 6, 1}, cfg, opts);
        const TrainResult b = train(data, {4, 6, 1}, cfg, opts);
        CHECK(params_equal(a.params, b.params));
        CHECK(a.loss_curve == b.loss_curve);
    }
}

TEST_CASE("dropout at p = 0 is bitwise identical to no dropout") {
    Rng rng(16);
    std::vector<LabeledSample> data;
    for (int i = 0; i < 8; ++i) {
        data.push_back({rng.gaussian_vector(3), {static_cast<std::uint8_t>(i % 2)}});
    }
    TrainConfig cfg;
    cfg.iterations = 100;
    cfg.decay_steps = {};
    cfg.batch_size = 4;
    cfg.dropout_p = 0.0;
    TrainOptions dropout;
    dropout.reg = Regularizer::dropout;
    const TrainResult a = train(data, {3, 5, 1}, cfg, dropout);
    const TrainResult b = train(data, {3, 5, 1}, cfg);
    CHECK(params_equal(a.params, b.params));
}

TEST_CASE("adversarial and virtual-adversarial at eps = 0 reduce to plain training") {
    Rng rng(17);
    std::vector<LabeledSample> data;
    for (int i = 0; i < 8; ++i) {
        data.push_back({rng.gaussian_vector(3), {static_cast<std::uint8_t>(i % 2)}});
    }
    TrainConfig cfg;
    cfg.iterations = 80;
    cfg.decay_steps = {};
    cfg.batch_size = 4;
    cfg.dropout_p = 0.0;
    const TrainResult plain = train(data, {3, 5, 1}, cfg);
    for (Regularizer reg : {Regularizer::adversarial, Regularizer::virtual_adversarial}) {
        TrainOptions opts;
        opts.reg = reg;
        opts.pert.epsilon = 0.0;
        const TrainResult r = train(data, {3, 5, 1}, cfg, opts);
        CHECK(params_equal(r.params, plain.params));
    }
}

TEST_CASE("train validates its configuration") {
    std::vector<LabeledSample> data{{{1.0}, {1}}};
    TrainConfig cfg;
    cfg.iterations = 10;
    cfg.decay_steps = {20};  // beyond iterations
    CHECK_THROWS_AS(train(data, {1, 2, 1}, cfg), ShapeError);
    cfg.decay_steps = {5, 5};
    CHECK_THROWS_AS(train(data, {1, 2, 1}, cfg), ShapeError);
    cfg.decay_steps = {};
    CHECK_THROWS_AS(train({}, {1, 2, 1}, cfg), EmptyCorpusError);
    cfg.dropout_p = 1.0;
    CHECK_THROWS_AS(train(data, {1, 2, 1}, cfg), ShapeError);
}

TEST_CASE("divergence carries the failing step") {
    // warm start with parameters whose forward pass overflows immediately
    std::vector<LabeledSample> data{{{1.0}, {1}}, {{1.0}, {0}}};
    MlpShape shape{1, 2, 1};
    MlpParams huge = init_params(shape, 0);
    huge.w1.setConstant(1e200);
    huge.w2.setConstant(1e200);
    huge.w3.setConstant(1.0);
    TrainConfig cfg;
    cfg.iterations = 10;
    cfg.decay_steps = {};
    cfg.batch_size = 2;
    TrainOptions opts;
    opts.warm_start = &huge;
    try {
        train(data, shape, cfg, opts);
        FAIL("expected DivergenceError");
    } catch (const DivergenceError& e) {
        CHECK(e.step == 0);
        CHECK(doctest::Contains("iteration 0").checkWith(e.what()));
    }
}

TEST_CASE("checkpoint round-trip is bit-exact") {
    MlpShape shape{7, 11, 3};
    const MlpParams p = random_params(shape, 19);
    const std::string path = "model_test_checkpoint.json";
    save_checkpoint(p, path);
    const MlpParams q = load_checkpoint(path);
    CHECK(params_equal(p, q));
    std::filesystem::remove(path);
}
