#include "viser/perturbation.hpp"

#include <cmath>
#include <string>

#include "viser/mil.hpp"

namespace viser {

namespace {

double l2(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

}  // namespace

FeatureVector fgsm_perturb(const FeatureVector& x, const LabelVector& y,
                           const InputGradFn& input_grad, double eps) {
    FeatureVector grad = input_grad(x, y);
    if (grad.size() != x.size()) {
        throw DimensionMismatchError("fgsm_perturb: gradient dimension mismatch");
    }
    FeatureVector out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!std::isfinite(grad[i])) {
            throw NonFiniteGradientError("fgsm_perturb: non-finite gradient at coordinate " +
                                         std::to_string(i));
        }
        const double sign = grad[i] > 0.0 ? 1.0 : (grad[i] < 0.0 ? -1.0 : 0.0);
        out[i] = x[i] + eps * sign;
    }
    return out;
}

double bernoulli_kl(const std::vector<double>& logits_p, const std::vector<double>& logits_q) {
    if (logits_p.size() != logits_q.size()) {
        throw DimensionMismatchError("bernoulli_kl: logit dimension mismatch");
    }
    // KL(p || q) per bit via softplus: log p = -softplus(-a), log(1-p) = -softplus(a).
    double kl = 0.0;
    for (std::size_t i = 0; i < logits_p.size(); ++i) {
        const double a = logits_p[i], b = logits_q[i];
        const double p = sigmoid(a);
        kl += p * (softplus(-b) - softplus(-a)) + (1.0 - p) * (softplus(b) - softplus(a));
    }
    return kl;
}

VatResult vat_perturb(const FeatureVector& x, const BatchLogitsFn& logits,
                      const PerturbationConfig& cfg, Rng& rng) {
    if (cfg.epsilon < 0.0) throw ShapeError("vat_perturb: epsilon must be nonnegative");
    if (cfg.power_iters < 1) throw ShapeError("vat_perturb: power_iters must be >= 1");
    const std::size_t dim = x.size();
    const double xi = cfg.xi > 0.0 ? cfg.xi : 1e-6 * std::sqrt(static_cast<double>(dim));

    const std::vector<double> base_logits = logits({x}).front();

    // Random unit start direction.
    FeatureVector d = rng.gaussian_vector(dim);
    double norm = l2(d);
    while (norm == 0.0) {  // astronomically unlikely; redraw to stay well-defined
        d = rng.gaussian_vector(dim);
        norm = l2(d);
    }
    for (double& v : d) v /= norm;

    bool degenerate = false;
    for (std::size_t iter = 0; iter < cfg.power_iters; ++iter) {
        // Evaluation points b +- xi * e_i around b = x + xi * d.
        std::vector<FeatureVector> points;
        points.reserve(2 * dim);
        FeatureVector b(dim);
        for (std::size_t i = 0; i < dim; ++i) b[i] = x[i] + xi * d[i];
        for (std::size_t i = 0; i < dim; ++i) {
            FeatureVector plus = b, minus = b;
            plus[i] += xi;
            minus[i] -= xi;
            points.push_back(std::move(plus));
            points.push_back(std::move(minus));
        }
        const auto point_logits = logits(points);

        FeatureVector grad(dim);
        double grad_norm = 0.0;
        for (std::size_t i = 0; i < dim; ++i) {
            const double kl_plus = bernoulli_kl(base_logits, point_logits[2 * i]);
            const double kl_minus = bernoulli_kl(base_logits, point_logits[2 * i + 1]);
            grad[i] = (kl_plus - kl_minus) / (2.0 * xi);
            grad_norm += grad[i] * grad[i];
        }
        grad_norm = std::sqrt(grad_norm);
        if (grad_norm < 1e-30) {
            degenerate = true;
            break;  // keep the current d (the random start on the first iteration)
        }
        for (std::size_t i = 0; i < dim; ++i) d[i] = grad[i] / grad_norm;
    }

    VatResult result;
    result.degenerate = degenerate;
    result.x_tilde.resize(dim);
    for (std::size_t i = 0; i < dim; ++i) result.x_tilde[i] = x[i] + cfg.epsilon * d[i];
    return result;
}

VatResult vat_perturb(const FeatureVector& x, const LogitsFn& logits,
                      const PerturbationConfig& cfg, Rng& rng) {
    BatchLogitsFn batch = [&logits](const std::vector<FeatureVector>& points) {
        std::vector<std::vector<double>> out;
        out.reserve(points.size());
        for (const auto& p : points) out.push_back(logits(p));
        return out;
    };
    return vat_perturb(x, batch, cfg, rng);
}

std::vector<LabeledSample> viser_augment(const std::vector<LabeledSample>& labeled,
                                         const Corpus& labeled_embeddings,
                                         const std::vector<FeatureVector>& unlabeled,
                                         const Corpus& unlabeled_embeddings,
                                         const SearchParams& params, std::size_t take) {
    if (labeled.empty()) throw EmptyCorpusError("viser_augment: empty labeled set");
    if (unlabeled.empty()) throw EmptyCorpusError("viser_augment: empty unlabeled corpus");
    if (labeled_embeddings.size() != labeled.size()) {
        throw DimensionMismatchError("viser_augment: labeled embedding count mismatch");
    }
    if (unlabeled_embeddings.size() != unlabeled.size()) {
        throw DimensionMismatchError("viser_augment: unlabeled embedding count mismatch");
    }

    const MatchTable matches = search(labeled_embeddings, unlabeled_embeddings, params);

    LabelTable label_table;
    for (std::size_t i = 0; i < labeled.size(); ++i) {
        label_table.emplace(labeled_embeddings.records[i].id, labeled[i].y);
    }
    const auto regularizers = transfer_labels(matches, label_table, take);

    std::vector<LabeledSample> augmented = labeled;
    augmented.reserve(labeled.size() + regularizers.size());
    for (const auto& reg : regularizers) {
        if (reg.features_source_id >= unlabeled.size()) {
            throw MissingLabelsError("viser_augment: unlabeled id " +
                                     std::to_string(reg.features_source_id) +
                                     " does not index the unlabeled set");
        }
        augmented.push_back({unlabeled[reg.features_source_id], reg.labels});
    }
    return augmented;
}

std::vector<LabeledSample> viser_augment(const std::vector<LabeledSample>& labeled,
                                         const std::vector<FeatureVector>& unlabeled,
                                         const EmbedFn& embed, const SearchParams& params,
                                         std::size_t take) {
    Corpus labeled_emb, unlabeled_emb;
    labeled_emb.records.reserve(labeled.size());
    for (std::size_t i = 0; i < labeled.size(); ++i) {
        labeled_emb.records.push_back({i, embed(labeled[i].x)});
    }
    unlabeled_emb.records.reserve(unlabeled.size());
    for (std::size_t i = 0; i < unlabeled.size(); ++i) {
        unlabeled_emb.records.push_back({i, embed(unlabeled[i])});
    }
    return viser_augment(labeled, labeled_emb, unlabeled, unlabeled_emb, params, take);
}

}  // namespace viser
