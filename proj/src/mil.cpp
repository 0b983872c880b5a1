#include "viser/mil.hpp"

#include <cmath>
#include <string>

namespace viser {

namespace {

constexpr double kLogFloor = 1e-30;

void check_grid(const LogitGrid& grid) {
    if (grid.height < 1 || grid.width < 1 || grid.classes < 1) {
        throw ShapeError("LogitGrid: H, W, N must all be >= 1");
    }
    if (grid.logits.size() != grid.locations() * grid.classes) {
        throw ShapeError("LogitGrid: logit count does not match H*W*N");
    }
    for (double v : grid.logits) {
        if (!std::isfinite(v)) throw NonFiniteError("LogitGrid: non-finite logit");
    }
}

// Per-class sum of softplus(logit) over all locations; equals -log(1 - p).
std::vector<double> softplus_sums(const LogitGrid& grid) {
    std::vector<double> sums(grid.classes, 0.0);
    const std::size_t locs = grid.locations();
    for (std::size_t j = 0; j < locs; ++j) {
        const double* row = grid.logits.data() + j * grid.classes;
        for (std::size_t c = 0; c < grid.classes; ++c) sums[c] += softplus(row[c]);
    }
    return sums;
}

}  // namespace

LogitGrid::LogitGrid(std::size_t h, std::size_t w, std::size_t n)
    : height(h), width(w), classes(n), logits(h * w * n, 0.0) {
    check_grid(*this);
}

LogitGrid::LogitGrid(std::size_t h, std::size_t w, std::size_t n, std::vector<double> values)
    : height(h), width(w), classes(n), logits(std::move(values)) {
    check_grid(*this);
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double softplus(double x) {
    if (x > 0.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

std::vector<double> location_probs(const LogitGrid& grid) {
    check_grid(grid);
    std::vector<double> probs(grid.logits.size());
    for (std::size_t i = 0; i < grid.logits.size(); ++i) probs[i] = sigmoid(grid.logits[i]);
    return probs;
}

std::vector<double> noisy_or(const LogitGrid& grid) {
    check_grid(grid);
    std::vector<double> sums = softplus_sums(grid);
    for (double& s : sums) s = -std::expm1(-s);
    return sums;
}

double mil_loss(const LogitGrid& grid, const LabelVector& y, MilDiagnostics* diag) {
    check_grid(grid);
    if (y.size() != grid.classes) {
        throw ShapeError("mil_loss: label vector length " + std::to_string(y.size()) +
                         " != class count " + std::to_string(grid.classes));
    }
    const std::vector<double> sums = softplus_sums(grid);
    const double max_term = -std::log(kLogFloor);
    double loss = 0.0;
    for (std::size_t c = 0; c < grid.classes; ++c) {
        if (y[c]) {
            // -log p with p = 1 - exp(-S)
            const double p = -std::expm1(-sums[c]);
            if (p < kLogFloor) {
                loss += max_term;
                if (diag) ++diag->clamped_classes;
            } else {
                loss += -std::log(p);
            }
        } else {
            // -log(1 - p) = S
            if (sums[c] > max_term) {
                loss += max_term;
                if (diag) ++diag->clamped_classes;
            } else {
                loss += sums[c];
            }
        }
    }
    return loss;
}

LogitGrid mil_loss_grad(const LogitGrid& grid, const LabelVector& y) {
    check_grid(grid);
    if (y.size() != grid.classes) {
        throw ShapeError("mil_loss_grad: label vector length does not match class count");
    }
    const std::vector<double> sums = softplus_sums(grid);
    const double max_term = -std::log(kLogFloor);

    // Per-class factor so that grad(j, c) = factor[c] * sigmoid(logit(j, c)).
    std::vector<double> factor(grid.classes);
    for (std::size_t c = 0; c < grid.classes; ++c) {
        if (y[c]) {
            const double p = -std::expm1(-sums[c]);
            factor[c] = p < kLogFloor ? 0.0 : -std::exp(-sums[c]) / p;
        } else {
            factor[c] = sums[c] > max_term ? 0.0 : 1.0;
        }
    }

    LogitGrid grad(grid.height, grid.width, grid.classes);
    const std::size_t locs = grid.locations();
    for (std::size_t j = 0; j < locs; ++j) {
        const double* in = grid.logits.data() + j * grid.classes;
        double* out = grad.logits.data() + j * grid.classes;
        for (std::size_t c = 0; c < grid.classes; ++c) out[c] = factor[c] * sigmoid(in[c]);
    }
    return grad;
}

std::pair<std::size_t, std::size_t> localize(const LogitGrid& grid, std::size_t cls) {
    check_grid(grid);
    if (cls >= grid.classes) throw ShapeError("localize: class index out of range");
    std::size_t best_h = 0, best_w = 0;
    double best = grid.at(0, 0, cls);
    for (std::size_t h = 0; h < grid.height; ++h) {
        for (std::size_t w = 0; w < grid.width; ++w) {
            const double v = grid.at(h, w, cls);
            if (v > best) {
                best = v;
                best_h = h;
                best_w = w;
            }
        }
    }
    return {best_h, best_w};
}

}  // namespace viser
