#include "cfcd/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cfcd {

namespace {

constexpr double kAcosClamp = 1e-7;

void check_labels(const BatchLogits& batch) {
    for (std::size_t y : batch.labels)
        if (y >= batch.n_classes()) throw InvalidLabel{};
    if (batch.labels.size() != batch.batch_size()) throw InvalidLabel{};
}

// Softmax cross-entropy where the target logit has been replaced by
// s * transformed and non-targets are s * cos theta_j. d_transform is the
// derivative of the transformed target w.r.t. the raw target logit.
LossResult scaled_softmax_ce(const BatchLogits& batch, double s,
                             const std::vector<double>& target_transformed,
                             const std::vector<double>& d_transform) {
    const std::size_t n = batch.batch_size();
    const std::size_t c = batch.n_classes();
    LossResult out;
    out.grad = Matrix(n, c);
    double total = 0.0;
    std::vector<double> z(c);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t y = batch.labels[i];
        for (std::size_t j = 0; j < c; ++j) z[j] = s * batch.logits(i, j);
        z[y] = s * target_transformed[i];
        const double mx = *std::max_element(z.begin(), z.end());
        double denom = 0.0;
        for (std::size_t j = 0; j < c; ++j) denom += std::exp(z[j] - mx);
        total += -(z[y] - mx - std::log(denom));
        for (std::size_t j = 0; j < c; ++j) {
            const double p = std::exp(z[j] - mx) / denom;
            double g = s * p;
            if (j == y) g = s * (p - 1.0) * d_transform[i];
            out.grad(i, j) = g / static_cast<double>(n);
        }
    }
    out.loss = total / static_cast<double>(n);
    return out;
}

// Additive cosine margin only: shared by CosFace mode and MadaCos so the two
// agree bitwise when (s, m) coincide.
LossResult cosine_margin_loss(const BatchLogits& batch, double s, double m3) {
    const std::size_t n = batch.batch_size();
    std::vector<double> t(n), dt(n, 1.0);
    for (std::size_t i = 0; i < n; ++i) t[i] = batch.logits(i, batch.labels[i]) - m3;
    return scaled_softmax_ce(batch, s, t, dt);
}

}  // namespace

MadaCosState::MadaCosState() : eps(std::exp(-7.0)) {}
MadaCosState::MadaCosState(double rho_, double eps_) : rho(rho_), eps(eps_) {}

double madacos_scale(double cos_m, double rho, double eps) {
    if (cos_m >= 1.0 - 1e-9) throw DegenerateMedian{};
    return std::log((1.0 - eps) * (1.0 - rho) / (rho * eps)) / (1.0 - cos_m);
}

LossResult unified_margin_loss(const BatchLogits& batch, const MarginParams& params) {
    check_labels(batch);
    if (params.m1 == 1.0 && params.m2 == 0.0)
        return cosine_margin_loss(batch, params.s, params.m3);
    const std::size_t n = batch.batch_size();
    std::vector<double> t(n), dt(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double raw = batch.logits(i, batch.labels[i]);
        const double clamped = std::clamp(raw, -1.0 + kAcosClamp, 1.0 - kAcosClamp);
        const double theta = std::acos(clamped);
        const double ang = params.m1 * theta + params.m2;
        t[i] = std::cos(ang) - params.m3;
        // d cos(m1*theta + m2) / d cos(theta) = m1 * sin(ang) / sin(theta)
        dt[i] = params.m1 * std::sin(ang) / std::sin(theta);
    }
    return scaled_softmax_ce(batch, params.s, t, dt);
}

LossResult madacos_step(const BatchLogits& batch, MadaCosState& state) {
    check_labels(batch);
    const std::size_t n = batch.batch_size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return batch.logits(a, batch.labels[a]) < batch.logits(b, batch.labels[b]);
    });
    // Even N takes the lower of the two middle values; ties on the median
    // value resolve to the smallest sample index.
    const double cos_m = batch.logits(order[(n - 1) / 2], batch.labels[order[(n - 1) / 2]]);
    std::size_t k = n;
    for (std::size_t i = 0; i < n; ++i)
        if (batch.logits(i, batch.labels[i]) == cos_m) { k = i; break; }
    const double s = madacos_scale(cos_m, state.rho, state.eps);
    double b_tilde = 0.0;
    for (std::size_t j = 0; j < batch.n_classes(); ++j)
        if (j != batch.labels[k]) b_tilde += std::exp(s * batch.logits(k, j));
    const double m = cos_m - std::log(state.rho * b_tilde / (1.0 - state.rho)) / s;

    state.s = s;
    state.m = m;
    state.cos_m = cos_m;
    state.k = k;
    state.b_tilde = b_tilde;
    return cosine_margin_loss(batch, s, m);
}

LossResult madacos_frozen(const BatchLogits& batch, double s, double m) {
    check_labels(batch);
    return cosine_margin_loss(batch, s, m);
}

double adacos_scale(std::size_t n_classes) {
    return std::sqrt(2.0) * std::log(static_cast<double>(n_classes) - 1.0);
}

LossResult adacos_baseline(const BatchLogits& batch, std::size_t n_classes) {
    check_labels(batch);
    return cosine_margin_loss(batch, adacos_scale(n_classes), 0.0);
}

}  // namespace cfcd
