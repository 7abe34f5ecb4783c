#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "cfcd/errors.hpp"

namespace cfcd {

// Dense row-major matrix of doubles.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), values(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return values[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return values[i * cols + j]; }

    std::span<double> row(std::size_t i) { return {values.data() + i * cols, cols}; }
    std::span<const double> row(std::size_t i) const { return {values.data() + i * cols, cols}; }

    bool operator==(const Matrix&) const = default;
};

// channels x width x height grid of local descriptors. Spatial positions are
// addressed as (row, col) with row in [0, height) and col in [0, width).
struct Grid3 {
    std::size_t channels = 0;
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<double> values;

    Grid3() = default;
    Grid3(std::size_t c, std::size_t w, std::size_t h, double fill = 0.0)
        : channels(c), width(w), height(h), values(c * w * h, fill) {}

    std::size_t spatial_size() const { return width * height; }
    std::size_t pos_index(std::size_t row, std::size_t col) const { return row * width + col; }

    double& at(std::size_t c, std::size_t row, std::size_t col) {
        return values[c * spatial_size() + pos_index(row, col)];
    }
    double at(std::size_t c, std::size_t row, std::size_t col) const {
        return values[c * spatial_size() + pos_index(row, col)];
    }
    double& at_flat(std::size_t c, std::size_t pos) { return values[c * spatial_size() + pos]; }
    double at_flat(std::size_t c, std::size_t pos) const {
        return values[c * spatial_size() + pos];
    }

    // The d_c-vector sitting at one spatial position.
    std::vector<double> descriptor(std::size_t row, std::size_t col) const {
        std::vector<double> d(channels);
        for (std::size_t c = 0; c < channels; ++c) d[c] = at(c, row, col);
        return d;
    }

    bool operator==(const Grid3&) const = default;
};

inline constexpr double kZeroNormFloor = 1e-12;
inline constexpr double kActivationFloor = 1e-6;

double norm2(std::span<const double> v);

// Scales v to unit Euclidean norm. Throws ZeroVector when the norm is <= 1e-12.
std::vector<double> l2_normalize(std::span<const double> v);

// Generalized-mean pooling over the spatial plane, one output per channel.
// Values are clamped to kActivationFloor before the fractional power.
std::vector<double> gem_pool(const Grid3& grid, double p);

// Pairwise cosines between l2-normalized feature rows and weight rows.
// Result is N x n_classes.
Matrix cosine_logits(const Matrix& features, const Matrix& weights);

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    bool pass = false;
};

// Central-difference check of an analytic gradient. The relative error per
// coordinate is |analytic - numeric| / max(1, |analytic|, |numeric|).
GradCheckReport finite_diff_check(const std::function<double(std::span<const double>)>& f,
                                  std::span<const double> params,
                                  std::span<const double> analytic_grad, double h, double tol);

}  // namespace cfcd
