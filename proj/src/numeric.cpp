#include "cfcd/numeric.hpp"

#include <algorithm>
#include <cmath>

namespace cfcd {

double norm2(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

std::vector<double> l2_normalize(std::span<const double> v) {
    const double n = norm2(v);
    if (!(n > kZeroNormFloor)) throw ZeroVector{};
    std::vector<double> out(v.begin(), v.end());
    for (double& x : out) x /= n;
    return out;
}

std::vector<double> gem_pool(const Grid3& grid, double p) {
    if (p < 1.0) throw InvalidP{};
    const std::size_t z = grid.spatial_size();
    std::vector<double> out(grid.channels);
    for (std::size_t c = 0; c < grid.channels; ++c) {
        double acc = 0.0;
        for (std::size_t i = 0; i < z; ++i) {
            const double x = std::max(grid.at_flat(c, i), kActivationFloor);
            acc += std::pow(x, p);
        }
        out[c] = std::pow(acc / static_cast<double>(z), 1.0 / p);
    }
    return out;
}

Matrix cosine_logits(const Matrix& features, const Matrix& weights) {
    if (features.cols != weights.cols)
        throw ShapeMismatch("feature dim " + std::to_string(features.cols) +
                            " vs weight dim " + std::to_string(weights.cols));
    std::vector<std::vector<double>> wn(weights.rows);
    for (std::size_t j = 0; j < weights.rows; ++j) wn[j] = l2_normalize(weights.row(j));
    Matrix out(features.rows, weights.rows);
    for (std::size_t i = 0; i < features.rows; ++i) {
        const auto fn = l2_normalize(features.row(i));
        for (std::size_t j = 0; j < weights.rows; ++j) {
            double dot = 0.0;
            for (std::size_t k = 0; k < features.cols; ++k) dot += fn[k] * wn[j][k];
            out(i, j) = dot;
        }
    }
    return out;
}

GradCheckReport finite_diff_check(const std::function<double(std::span<const double>)>& f,
                                  std::span<const double> params,
                                  std::span<const double> analytic_grad, double h, double tol) {
    std::vector<double> x(params.begin(), params.end());
    GradCheckReport report;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x[i];
        x[i] = saved + h;
        const double fp = f(x);
        x[i] = saved - h;
        const double fm = f(x);
        x[i] = saved;
        if (!std::isfinite(fp) || !std::isfinite(fm)) throw NonFinite{};
        const double numeric = (fp - fm) / (2.0 * h);
        const double analytic = analytic_grad[i];
        const double scale = std::max({1.0, std::abs(numeric), std::abs(analytic)});
        const double rel = std::abs(numeric - analytic) / scale;
        if (rel > report.max_rel_error) {
            report.max_rel_error = rel;
            report.worst_index = i;
        }
    }
    report.pass = report.max_rel_error < tol;
    return report;
}

}  // namespace cfcd
