#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "viser/embedding.hpp"

namespace viser {

// H x W x N tensor of per-location, per-class logits. Class is the fastest
// axis: entry (h, w, c) lives at (h * width + w) * classes + c.
struct LogitGrid {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t classes = 0;
    std::vector<double> logits;

    LogitGrid() = default;
    LogitGrid(std::size_t h, std::size_t w, std::size_t n);
    LogitGrid(std::size_t h, std::size_t w, std::size_t n, std::vector<double> values);

    std::size_t locations() const { return height * width; }
    double& at(std::size_t h, std::size_t w, std::size_t c) {
        return logits[(h * width + w) * classes + c];
    }
    double at(std::size_t h, std::size_t w, std::size_t c) const {
        return logits[(h * width + w) * classes + c];
    }
};

double sigmoid(double x);
double softplus(double x);

// Elementwise sigmoid of the grid, same layout.
std::vector<double> location_probs(const LogitGrid& grid);

// Per-class OR over locations, p = 1 - prod_j (1 - p_j), evaluated in log
// space as 1 - exp(-sum_j softplus(logit_j)) so saturated grids cannot
// cancel catastrophically.
std::vector<double> noisy_or(const LogitGrid& grid);

struct MilDiagnostics {
    std::size_t clamped_classes = 0;  // classes whose log argument hit the floor
};

// Multilabel cross-entropy against the noisy-OR class probabilities.
// log(1 - p) is taken as -sum softplus directly; log arguments are floored
// at 1e-30, capping each class term near 69.
double mil_loss(const LogitGrid& grid, const LabelVector& y, MilDiagnostics* diag = nullptr);

// d(mil_loss)/d(logit), same shape as the grid. Matches the clamped loss:
// classes pinned at the floor contribute zero gradient.
LogitGrid mil_loss_grad(const LogitGrid& grid, const LabelVector& y);

// Argmax location of one class heatmap; ties resolve in row-major order.
std::pair<std::size_t, std::size_t> localize(const LogitGrid& grid, std::size_t cls);

}  // namespace viser
