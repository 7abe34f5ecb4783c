#pragma once

#include <cstddef>
#include <vector>

#include "cfcd/numeric.hpp"

namespace cfcd {

// Unified margin configuration: multiplicative angular m1, additive angular m2
// (radians), additive cosine m3. (1, 0, 0) is plain normalized softmax.
struct MarginParams {
    double s = 1.0;
    double m1 = 1.0;
    double m2 = 0.0;
    double m3 = 0.0;

    static MarginParams plain(double s) { return {s, 1.0, 0.0, 0.0}; }
    static MarginParams arcface(double s, double m2) { return {s, 1.0, m2, 0.0}; }
    static MarginParams cosface(double s, double m3) { return {s, 1.0, 0.0, m3}; }
    static MarginParams sphereface(double s, double m1) { return {s, m1, 0.0, 0.0}; }
};

// Cosine logits for one mini-batch plus target labels.
struct BatchLogits {
    Matrix logits;                // N x n_classes
    std::vector<std::size_t> labels;  // length N

    std::size_t batch_size() const { return logits.rows; }
    std::size_t n_classes() const { return logits.cols; }
};

struct LossResult {
    double loss = 0.0;
    Matrix grad;  // d loss / d logits, N x n_classes
};

// Per-batch adaptive scale/margin state. rho anchors the softmax probability
// of the batch-median target logit; eps pins the probability at theta = 0.
struct MadaCosState {
    double rho = 0.02;
    double eps = 0.0;  // default e^-7, set in the constructor

    double s = 0.0;
    double m = 0.0;
    double cos_m = 0.0;     // median target logit of the last batch
    std::size_t k = 0;      // sample index of the median
    double b_tilde = 0.0;   // sum of exp(s * cos theta_j) over the median sample's non-targets

    MadaCosState();
    MadaCosState(double rho_, double eps_);
};

LossResult unified_margin_loss(const BatchLogits& batch, const MarginParams& params);

// One adaptive step: derives (s, m) in closed form from the batch median,
// then evaluates the additive-cosine-margin loss with them held constant.
LossResult madacos_step(const BatchLogits& batch, MadaCosState& state);

// The MadaCos loss expression with scale and margin pinned to constants
// instead of being derived from the batch (the degenerate configuration).
LossResult madacos_frozen(const BatchLogits& batch, double s, double m);

// Margin-free softmax cross-entropy at fixed scale s = sqrt(2) * ln(n - 1).
LossResult adacos_baseline(const BatchLogits& batch, std::size_t n_classes);

double adacos_scale(std::size_t n_classes);

// Closed-form scale from the median target logit (Algorithm step shared with
// madacos_step; exposed for diagnostics and tests).
double madacos_scale(double cos_m, double rho, double eps);

}  // namespace cfcd
