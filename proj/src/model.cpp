#include "viser/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

#include "json.hpp"
#include "viser/mil.hpp"

namespace viser {

namespace {

void check_shape(const MlpShape& shape) {
    if (shape.input_dim < 1 || shape.hidden_dim < 1 || shape.classes < 1) {
        throw ShapeError("MlpShape: all dimensions must be >= 1");
    }
}

void check_input(const MlpParams& params, const FeatureVector& x) {
    if (x.size() != params.shape.input_dim) {
        throw ShapeError("model input has dimension " + std::to_string(x.size()) +
                         ", expected " + std::to_string(params.shape.input_dim));
    }
}

void check_labels(const MlpParams& params, const LabelVector& y) {
    if (y.size() != params.shape.classes) {
        throw ShapeError("label vector has length " + std::to_string(y.size()) + ", expected " +
                         std::to_string(params.shape.classes));
    }
}

Eigen::VectorXd to_eigen(const FeatureVector& x) {
    return Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
}

Eigen::MatrixXd glorot(std::size_t rows, std::size_t cols, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform(-limit, limit);
    }
    return m;
}

struct ForwardState {
    Eigen::VectorXd a1, h1, a2, h2, logits;
};

// Forward pass with optional inverted-dropout masks on h1 and h2.
ForwardState forward_pass(const MlpParams& p, const Eigen::VectorXd& x,
                          const Eigen::VectorXd* mask1 = nullptr,
                          const Eigen::VectorXd* mask2 = nullptr) {
    ForwardState s;
    s.a1.noalias() = p.w1 * x;
    s.a1 += p.b1;
    s.h1 = s.a1.cwiseMax(0.0);
    if (mask1) s.h1 = s.h1.cwiseProduct(*mask1);
    s.a2.noalias() = p.w2 * s.h1;
    s.a2 += p.b2;
    s.h2 = s.a2.cwiseMax(0.0);
    if (mask2) s.h2 = s.h2.cwiseProduct(*mask2);
    s.logits.noalias() = p.w3 * s.h2;
    s.logits += p.b3;
    return s;
}

double loss_from_logits(const Eigen::VectorXd& logits, const LabelVector& y) {
    double loss = 0.0;
    for (Eigen::Index c = 0; c < logits.size(); ++c) {
        loss += softplus(logits(c)) - (y[static_cast<std::size_t>(c)] ? logits(c) : 0.0);
    }
    return loss;
}

MlpParams zero_like(const MlpParams& p) {
    MlpParams g;
    g.shape = p.shape;
    g.w1 = Eigen::MatrixXd::Zero(p.w1.rows(), p.w1.cols());
    g.w2 = Eigen::MatrixXd::Zero(p.w2.rows(), p.w2.cols());
    g.w3 = Eigen::MatrixXd::Zero(p.w3.rows(), p.w3.cols());
    g.b1 = Eigen::VectorXd::Zero(p.b1.size());
    g.b2 = Eigen::VectorXd::Zero(p.b2.size());
    g.b3 = Eigen::VectorXd::Zero(p.b3.size());
    return g;
}

// Backprop through the (optionally masked) forward state; accumulates
// parameter gradients scaled by `weight` into `acc` and returns the loss.
double backward_pass(const MlpParams& p, const Eigen::VectorXd& x, const LabelVector& y,
                     const ForwardState& s, double weight, MlpParams& acc,
                     Eigen::VectorXd* input_grad, const Eigen::VectorXd* mask1 = nullptr,
                     const Eigen::VectorXd* mask2 = nullptr) {
    Eigen::VectorXd delta3(s.logits.size());
    for (Eigen::Index c = 0; c < s.logits.size(); ++c) {
        delta3(c) = sigmoid(s.logits(c)) - (y[static_cast<std::size_t>(c)] ? 1.0 : 0.0);
    }
    acc.w3.noalias() += weight * delta3 * s.h2.transpose();
    acc.b3 += weight * delta3;

    Eigen::VectorXd delta2 = p.w3.transpose() * delta3;
    if (mask2) delta2 = delta2.cwiseProduct(*mask2);
    for (Eigen::Index i = 0; i < delta2.size(); ++i) {
        if (s.a2(i) <= 0.0) delta2(i) = 0.0;
    }
    acc.w2.noalias() += weight * delta2 * s.h1.transpose();
    acc.b2 += weight * delta2;

    Eigen::VectorXd delta1 = p.w2.transpose() * delta2;
    if (mask1) delta1 = delta1.cwiseProduct(*mask1);
    for (Eigen::Index i = 0; i < delta1.size(); ++i) {
        if (s.a1(i) <= 0.0) delta1(i) = 0.0;
    }
    acc.w1.noalias() += weight * delta1 * x.transpose();
    acc.b1 += weight * delta1;

    if (input_grad) input_grad->noalias() = p.w1.transpose() * delta1;
    return loss_from_logits(s.logits, y);
}

void axpy(MlpParams& p, const MlpParams& g, double step) {
    p.w1 += step * g.w1;
    p.w2 += step * g.w2;
    p.w3 += step * g.w3;
    p.b1 += step * g.b1;
    p.b2 += step * g.b2;
    p.b3 += step * g.b3;
}

void set_zero(MlpParams& p) {
    p.w1.setZero();
    p.w2.setZero();
    p.w3.setZero();
    p.b1.setZero();
    p.b2.setZero();
    p.b3.setZero();
}

void add_into(MlpParams& dst, const MlpParams& src) {
    dst.w1 += src.w1;
    dst.w2 += src.w2;
    dst.w3 += src.w3;
    dst.b1 += src.b1;
    dst.b2 += src.b2;
    dst.b3 += src.b3;
}

Eigen::VectorXd dropout_mask(std::size_t n, double keep, Rng& rng) {
    Eigen::VectorXd mask(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < mask.size(); ++i) {
        mask(i) = rng.uniform() < keep ? 1.0 / keep : 0.0;
    }
    return mask;
}

}  // namespace

MlpParams init_params(const MlpShape& shape, std::uint64_t seed) {
    check_shape(shape);
    Rng rng(seed);
    MlpParams p;
    p.shape = shape;
    p.w1 = glorot(shape.hidden_dim, shape.input_dim, rng);
    p.b1 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(shape.hidden_dim));
    p.w2 = glorot(shape.hidden_dim, shape.hidden_dim, rng);
    p.b2 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(shape.hidden_dim));
    p.w3 = glorot(shape.classes, shape.hidden_dim, rng);
    p.b3 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(shape.classes));
    return p;
}

ForwardResult forward(const MlpParams& params, const FeatureVector& x) {
    check_input(params, x);
    ForwardState s = forward_pass(params, to_eigen(x));
    return {std::move(s.logits), std::move(s.h2)};
}

Eigen::MatrixXd batch_logits(const MlpParams& params, const Eigen::MatrixXd& inputs) {
    if (static_cast<std::size_t>(inputs.rows()) != params.shape.input_dim) {
        throw ShapeError("batch_logits: input rows do not match input_dim");
    }
    Eigen::MatrixXd h = ((params.w1 * inputs).colwise() + params.b1).cwiseMax(0.0);
    h = ((params.w2 * h).colwise() + params.b2).cwiseMax(0.0);
    return (params.w3 * h).colwise() + params.b3;
}

double sample_loss(const MlpParams& params, const FeatureVector& x, const LabelVector& y) {
    check_input(params, x);
    check_labels(params, y);
    const ForwardState s = forward_pass(params, to_eigen(x));
    return loss_from_logits(s.logits, y);
}

BackwardResult backward(const MlpParams& params, const FeatureVector& x, const LabelVector& y) {
    check_input(params, x);
    check_labels(params, y);
    const Eigen::VectorXd xe = to_eigen(x);
    const ForwardState s = forward_pass(params, xe);
    BackwardResult result;
    result.grads = zero_like(params);
    result.input_grad.resize(xe.size());
    backward_pass(params, xe, y, s, 1.0, result.grads, &result.input_grad);
    return result;
}

FeatureVector penultimate(const MlpParams& params, const FeatureVector& x) {
    const ForwardResult f = forward(params, x);
    FeatureVector h2(f.penultimate.data(), f.penultimate.data() + f.penultimate.size());
    return normalize(h2);
}

TrainResult train(const std::vector<LabeledSample>& data, const MlpShape& shape,
                  const TrainConfig& cfg, const TrainOptions& opts) {
    check_shape(shape);
    if (data.empty()) throw EmptyCorpusError("train: empty dataset");
    for (const auto& ex : data) {
        if (ex.x.size() != shape.input_dim) throw ShapeError("train: sample dimension mismatch");
        if (ex.y.size() != shape.classes) throw ShapeError("train: label length mismatch");
    }
    if (cfg.iterations < 1 || cfg.batch_size < 1) {
        throw ShapeError("train: iterations and batch_size must be positive");
    }
    if (cfg.dropout_p < 0.0 || cfg.dropout_p >= 1.0) {
        throw ShapeError("train: dropout_p must lie in [0, 1)");
    }
    for (std::size_t i = 0; i < cfg.decay_steps.size(); ++i) {
        if (cfg.decay_steps[i] >= cfg.iterations ||
            (i > 0 && cfg.decay_steps[i] <= cfg.decay_steps[i - 1])) {
            throw ShapeError("train: decay_steps must be strictly increasing and < iterations");
        }
    }

    MlpParams params;
    if (opts.warm_start) {
        if (!(opts.warm_start->shape == shape)) {
            throw ShapeError("train: warm start shape mismatch");
        }
        params = *opts.warm_start;
    } else {
        params = init_params(shape, mix_seed(cfg.seed, 0));
    }

    // Independent streams so that disabled features consume no draws and
    // degenerate configurations stay bitwise equal to plain training.
    Rng batch_rng(mix_seed(cfg.seed, 1));
    Rng dropout_rng(mix_seed(cfg.seed, 2));
    Rng vat_rng(mix_seed(cfg.seed, 3));

    const std::size_t n = data.size();
    const std::size_t batch = std::min(cfg.batch_size, n);
    const bool use_dropout = opts.reg == Regularizer::dropout && cfg.dropout_p > 0.0;
    const double keep = 1.0 - cfg.dropout_p;
    const bool adversarial = opts.reg == Regularizer::adversarial;
    const bool virtual_adv = opts.reg == Regularizer::virtual_adversarial;
    const double w = opts.reg_weight;

    // Eigen copies of the inputs, extended on the fly for augmented pairs.
    std::vector<Eigen::VectorXd> inputs;
    inputs.reserve(n);
    for (const auto& ex : data) inputs.push_back(to_eigen(ex.x));

    BatchLogitsFn batched_logits = [&params](const std::vector<FeatureVector>& points) {
        Eigen::MatrixXd m(points.empty() ? 0 : points.front().size(), points.size());
        for (std::size_t i = 0; i < points.size(); ++i) {
            m.col(static_cast<Eigen::Index>(i)) = to_eigen(points[i]);
        }
        const Eigen::MatrixXd z = batch_logits(params, m);
        std::vector<std::vector<double>> out(points.size());
        for (std::size_t i = 0; i < points.size(); ++i) {
            const auto col = z.col(static_cast<Eigen::Index>(i));
            out[i].assign(col.data(), col.data() + col.size());
        }
        return out;
    };

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::size_t cursor = n;  // forces a shuffle before the first batch

    TrainResult result;
    result.loss_curve.reserve(cfg.iterations);

    double lr = cfg.learning_rate;
    std::size_t decay_idx = 0;

    MlpParams grads = zero_like(params);
    MlpParams sample_grads = zero_like(params);
    for (std::size_t iter = 0; iter < cfg.iterations; ++iter) {
        while (decay_idx < cfg.decay_steps.size() && cfg.decay_steps[decay_idx] <= iter) {
            lr *= cfg.lr_decay_factor;
            ++decay_idx;
        }

        set_zero(grads);
        double clean_loss = 0.0;
        for (std::size_t b = 0; b < batch; ++b) {
            if (cursor == n) {
                batch_rng.shuffle(order);
                cursor = 0;
            }
            const std::size_t idx = order[cursor++];
            const Eigen::VectorXd& x = inputs[idx];
            const LabelVector& y = data[idx].y;

            set_zero(sample_grads);
            if (use_dropout) {
                const Eigen::VectorXd m1 = dropout_mask(shape.hidden_dim, keep, dropout_rng);
                const Eigen::VectorXd m2 = dropout_mask(shape.hidden_dim, keep, dropout_rng);
                const ForwardState s = forward_pass(params, x, &m1, &m2);
                clean_loss +=
                    backward_pass(params, x, y, s, 1.0, sample_grads, nullptr, &m1, &m2);
            } else if (adversarial || virtual_adv) {
                // Clean and perturbed terms combine per sample as
                // (g + w*g_pert)/(1+w), so eps = 0 reproduces plain
                // training bit for bit.
                const double scale = 1.0 / (1.0 + w);
                const ForwardState s = forward_pass(params, x);
                Eigen::VectorXd input_grad(x.size());
                clean_loss += backward_pass(params, x, y, s, scale, sample_grads, &input_grad);

                Eigen::VectorXd xt(x.size());
                if (adversarial) {
                    for (Eigen::Index i = 0; i < x.size(); ++i) {
                        const double g = input_grad(i);
                        if (!std::isfinite(g)) {
                            throw NonFiniteGradientError(
                                "train: non-finite input gradient at iteration " +
                                std::to_string(iter));
                        }
                        const double sign = g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0);
                        xt(i) = x(i) + opts.pert.epsilon * sign;
                    }
                } else {
                    FeatureVector xv(x.data(), x.data() + x.size());
                    const VatResult vat = vat_perturb(xv, batched_logits, opts.pert, vat_rng);
                    xt = to_eigen(vat.x_tilde);
                }
                const ForwardState sp = forward_pass(params, xt);
                backward_pass(params, xt, y, sp, w * scale, sample_grads, nullptr);
            } else {
                const ForwardState s = forward_pass(params, x);
                clean_loss += backward_pass(params, x, y, s, 1.0, sample_grads, nullptr);
            }
            add_into(grads, sample_grads);
        }

        clean_loss /= static_cast<double>(batch);
        if (!std::isfinite(clean_loss)) {
            throw DivergenceError("train: non-finite loss at iteration " + std::to_string(iter),
                                  iter);
        }
        result.loss_curve.push_back(clean_loss);

        axpy(params, grads, -lr / static_cast<double>(batch));
    }

    // Monitored, not fatal: the clean loss should not rise across a
    // 500-iteration window at these learning rates.
    const std::size_t window = 500;
    for (std::size_t i = 0; i + window < result.loss_curve.size(); ++i) {
        if (result.loss_curve[i + window] > result.loss_curve[i] + 1e-9) {
            result.monotonicity_violations.push_back(i);
        }
    }

    result.params = std::move(params);
    return result;
}

std::vector<double> predict_scores(const MlpParams& params,
                                   const std::vector<FeatureVector>& inputs, std::size_t cls) {
    if (cls >= params.shape.classes) throw ShapeError("predict_scores: class index out of range");
    std::vector<double> scores;
    scores.reserve(inputs.size());
    for (const auto& x : inputs) {
        const ForwardResult f = forward(params, x);
        scores.push_back(sigmoid(f.logits(static_cast<Eigen::Index>(cls))));
    }
    return scores;
}

namespace {

const char* kB64Chars = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(const std::vector<unsigned char>& bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    while (i + 3 <= bytes.size()) {
        const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
        out.push_back(kB64Chars[(v >> 18) & 63]);
        out.push_back(kB64Chars[(v >> 12) & 63]);
        out.push_back(kB64Chars[(v >> 6) & 63]);
        out.push_back(kB64Chars[v & 63]);
        i += 3;
    }
    const std::size_t rem = bytes.size() - i;
    if (rem == 1) {
        const std::uint32_t v = bytes[i] << 16;
        out.push_back(kB64Chars[(v >> 18) & 63]);
        out.push_back(kB64Chars[(v >> 12) & 63]);
        out.push_back('=');
        out.push_back('=');
    } else if (rem == 2) {
        const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
        out.push_back(kB64Chars[(v >> 18) & 63]);
        out.push_back(kB64Chars[(v >> 12) & 63]);
        out.push_back(kB64Chars[(v >> 6) & 63]);
        out.push_back('=');
    }
    return out;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
    int lookup[256];
    std::fill(std::begin(lookup), std::end(lookup), -1);
    for (int i = 0; i < 64; ++i) lookup[static_cast<unsigned char>(kB64Chars[i])] = i;
    std::vector<unsigned char> out;
    out.reserve(text.size() / 4 * 3);
    std::uint32_t acc = 0;
    int bits = 0;
    for (char c : text) {
        if (c == '=') break;
        const int v = lookup[static_cast<unsigned char>(c)];
        if (v < 0) throw LoadError("checkpoint: invalid base64 character");
        acc = (acc << 6) | static_cast<std::uint32_t>(v);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out.push_back(static_cast<unsigned char>((acc >> bits) & 0xff));
        }
    }
    return out;
}

template <typename Mat>
void append_f64le(std::vector<unsigned char>& bytes, const Mat& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            std::uint64_t bits;
            const double v = m(r, c);
            std::memcpy(&bits, &v, 8);
            for (int k = 0; k < 8; ++k) {
                bytes.push_back(static_cast<unsigned char>(bits >> (8 * k)));
            }
        }
    }
}

template <typename Mat>
void read_f64le(const std::vector<unsigned char>& bytes, std::size_t& pos, Mat& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            if (pos + 8 > bytes.size()) throw LoadError("checkpoint: parameter blob too short");
            std::uint64_t bits = 0;
            for (int k = 7; k >= 0; --k) bits = (bits << 8) | bytes[pos + k];
            pos += 8;
            double v;
            std::memcpy(&v, &bits, 8);
            m(r, c) = v;
        }
    }
}

}  // namespace

void save_checkpoint(const MlpParams& params, const std::string& path) {
    std::vector<unsigned char> bytes;
    const auto& s = params.shape;
    bytes.reserve(8 * (s.hidden_dim * s.input_dim + s.hidden_dim * s.hidden_dim +
                       s.classes * s.hidden_dim + 2 * s.hidden_dim + s.classes));
    append_f64le(bytes, params.w1);
    append_f64le(bytes, params.b1);
    append_f64le(bytes, params.w2);
    append_f64le(bytes, params.b2);
    append_f64le(bytes, params.w3);
    append_f64le(bytes, params.b3);

    nlohmann::ordered_json obj;
    obj["format"] = "viser-mlp";
    obj["version"] = 1;
    obj["input_dim"] = s.input_dim;
    obj["hidden_dim"] = s.hidden_dim;
    obj["classes"] = s.classes;
    obj["data_b64"] = base64_encode(bytes);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError(path + ": cannot open file for writing");
    out << obj.dump(2) << '\n';
    out.flush();
    if (!out) throw LoadError(path + ": write failed");
}

MlpParams load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError(path + ": cannot open file");
    nlohmann::json obj;
    try {
        in >> obj;
    } catch (const nlohmann::json::exception& e) {
        throw LoadError(path + ": " + e.what());
    }
    if (obj.value("format", "") != "viser-mlp" || obj.value("version", 0) != 1) {
        throw LoadError(path + ": not a viser-mlp v1 checkpoint");
    }
    MlpShape shape{obj.at("input_dim").get<std::size_t>(),
                   obj.at("hidden_dim").get<std::size_t>(),
                   obj.at("classes").get<std::size_t>()};
    check_shape(shape);
    MlpParams p;
    p.shape = shape;
    p.w1.resize(shape.hidden_dim, shape.input_dim);
    p.b1.resize(static_cast<Eigen::Index>(shape.hidden_dim));
    p.w2.resize(shape.hidden_dim, shape.hidden_dim);
    p.b2.resize(static_cast<Eigen::Index>(shape.hidden_dim));
    p.w3.resize(shape.classes, shape.hidden_dim);
    p.b3.resize(static_cast<Eigen::Index>(shape.classes));

    const std::vector<unsigned char> bytes = base64_decode(obj.at("data_b64").get<std::string>());
    std::size_t pos = 0;
    read_f64le(bytes, pos, p.w1);
    read_f64le(bytes, pos, p.b1);
    read_f64le(bytes, pos, p.w2);
    read_f64le(bytes, pos, p.b2);
    read_f64le(bytes, pos, p.w3);
    read_f64le(bytes, pos, p.b3);
    if (pos != bytes.size()) throw LoadError(path + ": trailing bytes in parameter blob");
    return p;
}

}  // namespace viser
