#pragma once

#include <map>
#include <string>
#include <vector>

#include "cfcd/data.hpp"
#include "cfcd/model.hpp"

namespace cfcd {

// Bilinear resize of the spatial plane, per channel. Target dims are
// round(scale * dim), floored at 1.
Grid3 resize_grid(const Grid3& input, double scale);

// Multi-scale global descriptor: per-scale F^g, average, renormalize.
std::vector<double> extract_global(const ToyModel& model, const Grid3& input,
                                   std::span<const double> scales);

// Database ids sorted by descending cosine similarity, ties by ascending id.
std::vector<ImageId> rank(std::span<const double> query,
                          const std::vector<std::pair<ImageId, std::vector<double>>>& database);

struct MapResult {
    double map = 0.0;
    std::map<ImageId, double> per_query_ap;
};

MapResult mean_average_precision(const Benchmark& bench,
                                 const std::map<ImageId, std::vector<ImageId>>& rankings);

struct LogitDiagnostics {
    // Fixed 0.02-wide bins over [-2, 2].
    static constexpr double kBinWidth = 0.02;
    static constexpr double kLo = -2.0;
    static constexpr double kHi = 2.0;
    static constexpr std::size_t kBins = 200;

    std::vector<std::size_t> target_hist;       // cos theta_y
    std::vector<std::size_t> gap_hist;          // cos theta_y - max non-target
    std::vector<std::size_t> gap_margin_hist;   // cos(theta_y + m) - max non-target
    double negative_gap_fraction = 0.0;
    std::size_t n_samples = 0;

    static std::size_t bin_of(double v);
};

LogitDiagnostics logit_diagnostics(const ToyModel& model,
                                   std::span<const ImageRecord> dataset, double margin);

// Convenience: mAP of a model over a benchmark at the given scales.
double evaluate_map(const ToyModel& model, std::span<const ImageRecord> images,
                    const Benchmark& bench, std::span<const double> scales);

}  // namespace cfcd
