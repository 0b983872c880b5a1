#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "viser/embedding.hpp"
#include "viser/model.hpp"

namespace viser {

struct SyntheticSpec {
    std::size_t modes_per_class = 8;
    std::size_t train_per_mode = 1;
    std::size_t n_unlabeled = 1000;
    std::size_t n_test = 1000;
    std::size_t ambient_dim = 100;
    std::size_t latent_dim = 2;  // the generator is two-dimensional
    std::uint64_t seed = 0;
};

struct GaussianMode {
    std::array<double, 2> mean{};
    double angle = 0.0;              // rotation of the covariance, in [0, pi)
    std::array<double, 2> scales{};  // axis standard deviations, in [0.2, 0.5]
};

struct SyntheticSample {
    FeatureVector ambient;
    std::array<double, 2> latent{};
    int cls = 0;   // ground truth; training code never reads it for unlabeled data
    int mode = 0;  // index within the class's mode list
};

struct SyntheticDataset {
    SyntheticSpec spec;
    std::vector<GaussianMode> modes;       // class-major: class 0 modes, then class 1
    std::vector<double> embedding_matrix;  // ambient_dim x 2, row-major, orthonormal columns
    std::vector<SyntheticSample> train, unlabeled, test;

    FeatureVector lift(const std::array<double, 2>& latent) const;
    std::array<double, 2> latent_recovery(const FeatureVector& ambient) const;
};

// Two-class multimodal mixture in 2-D lifted linearly into ambient_dim
// dimensions: mode means uniform in [-6, 6]^2, covariance R diag(s^2) R^T
// with angle uniform in [0, pi) and scales uniform in [0.2, 0.5], one
// training point per mode, unlabeled/test drawn from a uniform-mode
// mixture with balanced classes. Deterministic per seed.
SyntheticDataset generate(const SyntheticSpec& spec);

// Dataset slices as embedding corpora (ids are indices); labels carry the
// true class when requested.
Corpus to_corpus(const std::vector<SyntheticSample>& samples, bool with_labels);

// p(y=1|x) for a model evaluated over a resolution x resolution lattice on
// latent [-6, 6]^2 (inclusive endpoints), lifted through the dataset's
// embedding matrix. grid[r][c] is the point (x = col, y = row coordinate).
std::vector<std::vector<double>> contour_grid(const MlpParams& model,
                                              const SyntheticDataset& dataset,
                                              std::size_t resolution);

void write_csv_matrix(const std::vector<std::vector<double>>& matrix, std::ostream& out);

}  // namespace viser
