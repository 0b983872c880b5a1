#pragma once

#include <functional>
#include <vector>

#include "viser/embedding.hpp"
#include "viser/neighbor_search.hpp"
#include "viser/rng.hpp"

namespace viser {

struct PerturbationConfig {
    double epsilon = 0.5;       // l-inf budget for FGSM, l2 budget for VAT
    double xi = 0.0;            // VAT finite-difference scale; 0 means 1e-6 * sqrt(D)
    std::size_t power_iters = 1;
};

// Model access used by the perturbations: gradient of the training loss
// w.r.t. the input, and logits for one input or a batch of inputs.
using InputGradFn = std::function<FeatureVector(const FeatureVector&, const LabelVector&)>;
using LogitsFn = std::function<std::vector<double>(const FeatureVector&)>;
using BatchLogitsFn =
    std::function<std::vector<std::vector<double>>(const std::vector<FeatureVector>&)>;

// x + eps * sign(grad loss), with sign(0) = 0. Throws NonFiniteGradientError.
FeatureVector fgsm_perturb(const FeatureVector& x, const LabelVector& y,
                           const InputGradFn& input_grad, double eps);

struct VatResult {
    FeatureVector x_tilde;
    bool degenerate = false;  // KL gradient vanished; direction is the random start
};

// Power iteration toward the direction that most increases
// KL[p(.|x) || p(.|x + r)] inside the l2 eps-ball. The KL gradient is taken
// by central finite differences (step xi) over input coordinates; labels
// are never consulted. Sum of Bernoulli KLs across the output bits.
VatResult vat_perturb(const FeatureVector& x, const BatchLogitsFn& logits,
                      const PerturbationConfig& cfg, Rng& rng);
VatResult vat_perturb(const FeatureVector& x, const LogitsFn& logits,
                      const PerturbationConfig& cfg, Rng& rng);

// KL divergence between per-class Bernoulli distributions given logits.
double bernoulli_kl(const std::vector<double>& logits_p, const std::vector<double>& logits_q);

using EmbedFn = std::function<FeatureVector(const FeatureVector&)>;

// Neighbor-based augmentation: search the unlabeled corpus with each
// labeled sample's embedding and append the top `take` matches as new
// training samples carrying the donor's labels. Returns the labeled set
// followed by the regularizer samples.
std::vector<LabeledSample> viser_augment(const std::vector<LabeledSample>& labeled,
                                         const Corpus& labeled_embeddings,
                                         const std::vector<FeatureVector>& unlabeled,
                                         const Corpus& unlabeled_embeddings,
                                         const SearchParams& params, std::size_t take);

// Convenience overload that embeds both sets with `embed` (ids = indices).
std::vector<LabeledSample> viser_augment(const std::vector<LabeledSample>& labeled,
                                         const std::vector<FeatureVector>& unlabeled,
                                         const EmbedFn& embed, const SearchParams& params,
                                         std::size_t take);

}  // namespace viser
