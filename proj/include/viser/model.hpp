#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "viser/embedding.hpp"
#include "viser/perturbation.hpp"

namespace viser {

struct MlpShape {
    std::size_t input_dim = 0;
    std::size_t hidden_dim = 100;
    std::size_t classes = 1;

    friend bool operator==(const MlpShape&, const MlpShape&) = default;
};

// Two hidden ReLU layers and a per-class sigmoid head:
//   h1 = relu(W1 x + b1), h2 = relu(W2 h1 + b2), logits = W3 h2 + b3.
struct MlpParams {
    MlpShape shape;
    Eigen::MatrixXd w1, w2, w3;
    Eigen::VectorXd b1, b2, b3;
};

// Glorot-uniform weights, zero biases, fixed draw order per seed.
MlpParams init_params(const MlpShape& shape, std::uint64_t seed);

struct ForwardResult {
    Eigen::VectorXd logits;       // length N
    Eigen::VectorXd penultimate;  // h2, length hidden_dim, entries >= 0
};

ForwardResult forward(const MlpParams& params, const FeatureVector& x);

// Columns of `inputs` are samples; returns the matching logit columns.
Eigen::MatrixXd batch_logits(const MlpParams& params, const Eigen::MatrixXd& inputs);

// Per-sample multilabel sigmoid cross-entropy, sum over classes.
double sample_loss(const MlpParams& params, const FeatureVector& x, const LabelVector& y);

struct BackwardResult {
    MlpParams grads;            // same shapes as the parameters
    Eigen::VectorXd input_grad; // d(loss)/dx
};

// Analytic gradients of sample_loss for every parameter and the input.
BackwardResult backward(const MlpParams& params, const FeatureVector& x, const LabelVector& y);

// h2 normalized to unit length; the similarity space of the search.
// Throws ZeroVectorError when h2 is all zero (fully dead ReLUs).
FeatureVector penultimate(const MlpParams& params, const FeatureVector& x);

struct TrainConfig {
    double learning_rate = 0.01;
    double lr_decay_factor = 0.1;
    std::vector<std::size_t> decay_steps{3000, 4000};  // strictly increasing, < iterations
    std::size_t iterations = 5000;
    std::size_t batch_size = 16;
    double dropout_p = 0.5;  // used only by Regularizer::dropout
    std::uint64_t seed = 0;
};

enum class Regularizer { none, dropout, adversarial, virtual_adversarial };

struct TrainOptions {
    Regularizer reg = Regularizer::none;
    PerturbationConfig pert;
    double reg_weight = 1.0;              // perturbed-term weight w in (clean + w*pert)/(1+w)
    const MlpParams* warm_start = nullptr;
};

struct TrainResult {
    MlpParams params;
    std::vector<double> loss_curve;                    // clean batch loss per iteration
    std::vector<std::size_t> monotonicity_violations;  // window starts where loss rose
};

// Seeded mini-batch SGD. Initialization, batch order, dropout masks and the
// VAT start vectors all derive from cfg.seed, so a run is reproducible
// bit for bit. Throws DivergenceError when the loss leaves the reals.
TrainResult train(const std::vector<LabeledSample>& data, const MlpShape& shape,
                  const TrainConfig& cfg, const TrainOptions& opts = {});

// Probability of class `cls` for each input.
std::vector<double> predict_scores(const MlpParams& params,
                                   const std::vector<FeatureVector>& inputs, std::size_t cls = 0);

// JSON checkpoint with shape metadata and a base64 blob of f64 LE values;
// round-trips bit-exactly.
void save_checkpoint(const MlpParams& params, const std::string& path);
MlpParams load_checkpoint(const std::string& path);

}  // namespace viser
